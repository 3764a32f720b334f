//! Colleague network export as DOT and JSON.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::{ColleagueEdge, Doctor, Hospital};
use crate::ids::{DoctorId, HospitalId};

const PALETTE: [&str; 20] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5", "#c49c94",
    "#f7b6d2", "#dbdb8d", "#9edae5", "#393b79",
];
pub const WITHIN_COLOR: &str = "#c7c7c7";
pub const BETWEEN_COLOR: &str = "#303030";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeClass {
    WithinHospital,
    BetweenHospital,
}

impl EdgeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::WithinHospital => "within_hospital",
            Self::BetweenHospital => "between_hospital",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "within_hospital" => Some(Self::WithinHospital),
            "between_hospital" => Some(Self::BetweenHospital),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphHospital {
    pub id: HospitalId,
    pub name: String,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: DoctorId,
    pub label: String,
    pub hospital: HospitalId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from: DoctorId,
    pub to: DoctorId,
    pub class: EdgeClass,
}

/// Doctors incident to at least one edge, grouped by hospital.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColleagueGraph {
    pub hospitals: Vec<GraphHospital>,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("edge {from} -> {to} references unknown doctor {missing}")]
    DanglingEdge {
        from: DoctorId,
        to: DoctorId,
        missing: DoctorId,
    },
    #[error("doctor {doctor} belongs to unknown hospital {hospital}")]
    UnknownHospital { doctor: DoctorId, hospital: HospitalId },
}

pub fn export_colleague_graph(
    doctors: &BTreeMap<DoctorId, Doctor>,
    edges: &BTreeSet<ColleagueEdge>,
    hospitals: &BTreeMap<HospitalId, Hospital>,
) -> Result<ColleagueGraph, GraphError> {
    let mut graph = ColleagueGraph::default();
    let mut members = BTreeSet::new();
    for e in edges {
        let lookup = |id: &DoctorId| {
            doctors.get(id).ok_or_else(|| GraphError::DanglingEdge {
                from: e.from.clone(),
                to: e.to.clone(),
                missing: id.clone(),
            })
        };
        let (a, b) = (lookup(&e.from)?, lookup(&e.to)?);
        let class = if a.hospital == b.hospital {
            EdgeClass::WithinHospital
        } else {
            EdgeClass::BetweenHospital
        };
        graph.edges.push(GraphEdge {
            from: e.from.clone(),
            to: e.to.clone(),
            class,
        });
        members.insert(&a.id);
        members.insert(&b.id);
    }

    let mut used = BTreeSet::new();
    for id in members {
        let d = &doctors[id];
        if !hospitals.contains_key(&d.hospital) {
            return Err(GraphError::UnknownHospital {
                doctor: d.id.clone(),
                hospital: d.hospital.clone(),
            });
        }
        used.insert(&d.hospital);
        graph.nodes.push(GraphNode {
            id: d.id.clone(),
            label: d.display_name.clone(),
            hospital: d.hospital.clone(),
        });
    }
    graph.hospitals = used
        .into_iter()
        .enumerate()
        .map(|(i, h)| GraphHospital {
            id: h.clone(),
            name: hospitals[h].name.clone(),
            color: PALETTE[i % PALETTE.len()].to_owned(),
        })
        .collect();
    Ok(graph)
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

impl ColleagueGraph {
    /// Graphviz rendering: one cluster per hospital, nodes filled with the
    /// hospital colour, within-hospital edges light and between-hospital
    /// edges dark. Every field of the JSON form is carried as an attribute.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph colleagues {\n  node [style=filled];\n");
        let colors: BTreeMap<&HospitalId, &str> =
            self.hospitals.iter().map(|h| (&h.id, h.color.as_str())).collect();
        for h in &self.hospitals {
            let _ = writeln!(out, "  subgraph {} {{", quote(&format!("cluster_{}", h.id)));
            let _ = writeln!(
                out,
                "    label={}; hospital={}; color={};",
                quote(&h.name),
                quote(h.id.as_str()),
                quote(&h.color)
            );
            for n in self.nodes.iter().filter(|n| n.hospital == h.id) {
                let _ = writeln!(
                    out,
                    "    {} [label={}, hospital={}, fillcolor={}];",
                    quote(n.id.as_str()),
                    quote(&n.label),
                    quote(n.hospital.as_str()),
                    quote(colors[&n.hospital])
                );
            }
            out.push_str("  }\n");
        }
        for e in &self.edges {
            let color = match e.class {
                EdgeClass::WithinHospital => WITHIN_COLOR,
                EdgeClass::BetweenHospital => BETWEEN_COLOR,
            };
            let _ = writeln!(
                out,
                "  {} -> {} [class={}, color={}];",
                quote(e.from.as_str()),
                quote(e.to.as_str()),
                quote(e.class.as_str()),
                quote(color)
            );
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }
}
