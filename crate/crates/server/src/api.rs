//! HTTP/JSON routes under `/api/v1`.

use std::collections::BTreeSet;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, FromRequestParts, Path, Query, State};
use axum::http::header::{AUTHORIZATION, RETRY_AFTER};
use axum::http::request::Parts;
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use medsync_core::domain::{
    Assignment, AssignmentTarget, Attachment, CaseEntry, CaseForm, CaseLists, Doctor, Group,
    GroupKind, Hospital, Message, Thread, ThreadKind,
};
use medsync_core::event::UserRecord;
use medsync_core::replica::{ApplyError, CommitError, SyncStatus};
use medsync_core::routing::{
    assign_thread, candidate_consultants, create_thread, escalate_thread, is_participant,
    post_message, set_colleague, set_membership, CandidateSet, ColleagueCandidate, NewThread,
    RoutingError,
};
use medsync_core::stub::StubNotice;
use medsync_core::sync::{DeltaAck, DigestReply, LinkError, PROTOCOL_HEADER, SERVER_HEADER};
use medsync_core::validate::Violation;
use medsync_core::{
    DoctorId, Event, EventPayload, GroupId, ServerId, Specialty, ThreadId, VersionVector,
};
use serde::{Deserialize, Serialize};

use crate::auth::{credential_for, hash_secret, verify_secret, AuthError, Session, SessionToken};
use crate::node::Node;

pub const MIN_SECRET_LEN: usize = 8;
const SYNC_BODY_LIMIT: usize = 64 * 1024 * 1024;

/// Every route, for the anonymous-access scan.
pub const ROUTES: &[(&str, &str)] = &[
    ("POST", "/api/v1/login"),
    ("GET", "/api/v1/threads"),
    ("POST", "/api/v1/threads"),
    ("GET", "/api/v1/threads/{id}"),
    ("POST", "/api/v1/threads/{id}/messages"),
    ("POST", "/api/v1/threads/{id}/assignments"),
    ("POST", "/api/v1/threads/{id}/escalate"),
    ("GET", "/api/v1/consultants"),
    ("GET", "/api/v1/colleagues"),
    ("PUT", "/api/v1/colleagues"),
    ("GET", "/api/v1/memberships"),
    ("PUT", "/api/v1/memberships"),
    ("GET", "/api/v1/sync/status"),
    ("POST", "/api/v1/admin/users"),
    ("POST", "/api/v1/admin/hospitals"),
    ("POST", "/api/v1/admin/groups"),
    ("POST", "/api/v1/sync/digest"),
    ("POST", "/api/v1/sync/delta"),
    ("POST", "/api/v1/sync/stub"),
];

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error(transparent)]
    Auth(#[from] AuthError),
    #[error("{0}")]
    Forbidden(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("peer authentication failed")]
    PeerAuth,
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self {
            Self::Auth(AuthError::RateLimited { .. }) => StatusCode::TOO_MANY_REQUESTS,
            Self::Auth(AuthError::Hash(_)) | Self::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            Self::Auth(_) | Self::PeerAuth => StatusCode::UNAUTHORIZED,
            Self::Forbidden(_) => StatusCode::FORBIDDEN,
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::Conflict(_) => StatusCode::CONFLICT,
            Self::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Self::BadRequest(_) => StatusCode::BAD_REQUEST,
        };
        let mut response = (status, Json(ErrorBody { error: self.to_string() })).into_response();
        if let Self::Auth(AuthError::RateLimited { retry_after_ms }) = self {
            let secs = retry_after_ms.div_ceil(1000).max(1);
            response
                .headers_mut()
                .insert(RETRY_AFTER, HeaderValue::from(secs));
        }
        response
    }
}

impl From<CommitError> for ApiError {
    fn from(e: CommitError) -> Self {
        match &e {
            CommitError::Invalid { violations, .. }
                if violations.iter().any(|v| {
                    matches!(
                        v,
                        Violation::DuplicateDoctor(_)
                            | Violation::DuplicateHospital(_)
                            | Violation::DuplicateGroup(_)
                            | Violation::DuplicateThread(_)
                    )
                }) =>
            {
                Self::Conflict(e.to_string())
            }
            CommitError::Invalid { .. } | CommitError::Malformed(_) => Self::Invalid(e.to_string()),
            CommitError::Storage(_) => Self::Internal(e.to_string()),
        }
    }
}

impl From<RoutingError> for ApiError {
    fn from(e: RoutingError) -> Self {
        match e {
            RoutingError::UnknownDoctor(_) | RoutingError::UnknownGroup(_) | RoutingError::UnknownThread(_) => {
                Self::NotFound(e.to_string())
            }
            RoutingError::Unauthorized { .. } => Self::Forbidden(e.to_string()),
            RoutingError::NotEscalatable { .. } => Self::Conflict(e.to_string()),
            RoutingError::SelfEdge => Self::Invalid(e.to_string()),
            RoutingError::Commit(c) => c.into(),
        }
    }
}

impl From<LinkError> for ApiError {
    fn from(e: LinkError) -> Self {
        match e {
            LinkError::ProtocolMismatch { .. } => Self::Conflict(e.to_string()),
            _ => Self::BadRequest(e.to_string()),
        }
    }
}

impl From<ApplyError> for ApiError {
    fn from(e: ApplyError) -> Self {
        match e {
            ApplyError::Storage(_) => Self::Internal(e.to_string()),
            _ => Self::Invalid(e.to_string()),
        }
    }
}

type Shared = Arc<Node>;
type ApiResult<T> = Result<T, ApiError>;

/// A caller holding a live session.
pub struct AuthUser(pub Session);

impl AuthUser {
    fn id(&self) -> &DoctorId {
        &self.0.doctor
    }
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
}

impl FromRequestParts<Shared> for AuthUser {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, node: &Shared) -> Result<Self, Self::Rejection> {
        let token = bearer(&parts.headers).ok_or(AuthError::InvalidToken)?;
        let session = node.sessions().resolve(&SessionToken::from(token), node.now())?;
        Ok(Self(session))
    }
}

fn same_secret(a: &str, b: &str) -> bool {
    a.len() == b.len() && a.bytes().zip(b.bytes()).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// A configured peer presenting its shared secret, plus the protocol
/// version it speaks.
pub struct PeerCaller {
    pub peer: ServerId,
    pub protocol: u32,
}

impl FromRequestParts<Shared> for PeerCaller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, node: &Shared) -> Result<Self, Self::Rejection> {
        let h = &parts.headers;
        let peer = h
            .get(SERVER_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(ServerId::from)
            .ok_or(ApiError::PeerAuth)?;
        let cfg = node.peer_config(&peer).ok_or(ApiError::PeerAuth)?;
        match bearer(h) {
            Some(secret) if same_secret(secret, &cfg.secret) => {}
            _ => return Err(ApiError::PeerAuth),
        }
        let protocol = h
            .get(PROTOCOL_HEADER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| ApiError::BadRequest(format!("{PROTOCOL_HEADER} header required")))?;
        Ok(Self { peer, protocol })
    }
}

pub fn router(node: Shared) -> Router {
    let sync = Router::new()
        .route("/digest", post(sync_digest))
        .route("/delta", post(sync_delta))
        .route("/stub", post(sync_stub))
        .layer(DefaultBodyLimit::max(SYNC_BODY_LIMIT));
    let api = Router::new()
        .route("/login", post(login))
        .route("/threads", get(list_threads).post(new_thread))
        .route("/threads/{id}", get(get_thread))
        .route("/threads/{id}/messages", post(add_message))
        .route("/threads/{id}/assignments", post(add_assignment))
        .route("/threads/{id}/escalate", post(escalate))
        .route("/consultants", get(consultants))
        .route("/colleagues", get(colleagues).put(put_colleague))
        .route("/memberships", get(memberships).put(put_membership))
        .route("/sync/status", get(sync_status))
        .route("/admin/users", post(admin_user))
        .route("/admin/hospitals", post(admin_hospital))
        .route("/admin/groups", post(admin_group))
        .nest("/sync", sync);
    Router::new()
        .nest("/api/v1", api)
        .fallback(|| async { ApiError::NotFound("no such route".into()) })
        .with_state(node)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoginRequest {
    pub doctor: DoctorId,
    pub secret: String,
}

#[derive(Serialize, Deserialize)]
pub struct LoginReply {
    pub token: SessionToken,
    pub doctor: Doctor,
    pub expires_at_ms: u64,
}

async fn login(State(node): State<Shared>, Json(req): Json<LoginRequest>) -> ApiResult<Json<LoginReply>> {
    let now = node.now();
    node.sessions().check_rate(&req.doctor, now)?;
    let state = node.state();
    let credential = match credential_for(&state, &req.doctor) {
        Ok(c) => Some(c),
        Err(AuthError::BadCredentials) => None,
        Err(e) => return Err(e.into()),
    };
    let secret = req.secret;
    let ok = tokio::task::spawn_blocking(move || credential.is_some_and(|c| verify_secret(&c, &secret)))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    if !ok {
        node.sessions().record_failure(&req.doctor, now);
        return Err(AuthError::BadCredentials.into());
    }
    let session = node.sessions().issue(req.doctor.clone(), now);
    Ok(Json(LoginReply {
        token: session.token,
        doctor: state.doctors[&req.doctor].clone(),
        expires_at_ms: session.expires_at_ms,
    }))
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Primary,
    Other,
}

#[derive(Deserialize)]
pub struct ThreadsQuery {
    pub bucket: Option<Bucket>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum ThreadsReply {
    One(Vec<CaseEntry>),
    Both(CaseLists),
}

async fn list_threads(
    State(node): State<Shared>,
    user: AuthUser,
    Query(q): Query<ThreadsQuery>,
) -> ApiResult<Json<ThreadsReply>> {
    let lists = node
        .with_replica(|r| r.case_lists(user.id()))
        .map_err(|e| ApiError::NotFound(e.to_string()))?;
    Ok(Json(match q.bucket {
        Some(Bucket::Primary) => ThreadsReply::One(lists.primary),
        Some(Bucket::Other) => ThreadsReply::One(lists.other),
        None => ThreadsReply::Both(lists),
    }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadView {
    pub thread: Thread,
    pub messages: Vec<Message>,
    pub attachments: Vec<Attachment>,
}

fn thread_view(node: &Node, id: &ThreadId, user: &DoctorId) -> ApiResult<ThreadView> {
    node.with_replica(|r| {
        if !is_participant(r, id, user)? {
            return Err(ApiError::Forbidden(format!("{user} is not a participant in {id}")));
        }
        let state = r.state();
        let thread = match state.threads.get(id) {
            Some(t) => t.clone(),
            None => r
                .stub_threads()
                .into_iter()
                .find(|t| t.id == *id)
                .ok_or_else(|| ApiError::NotFound(format!("unknown thread {id}")))?,
        };
        let messages = state.messages(id).to_vec();
        let referenced: BTreeSet<_> = thread
            .case_form
            .iter()
            .flat_map(|f| &f.attachments)
            .chain(messages.iter().flat_map(|m| &m.attachments))
            .collect();
        let attachments = referenced
            .into_iter()
            .filter_map(|a| state.attachments.get(a).cloned())
            .collect();
        Ok(ThreadView {
            thread,
            messages,
            attachments,
        })
    })
}

async fn get_thread(State(node): State<Shared>, user: AuthUser, Path(id): Path<ThreadId>) -> ApiResult<Json<ThreadView>> {
    thread_view(&node, &id, user.id()).map(Json)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewThreadRequest {
    pub kind: ThreadKind,
    #[serde(default)]
    pub case_form: Option<CaseForm>,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
    #[serde(default)]
    pub assign_to: Option<AssignmentTarget>,
}

fn check_target(state: &medsync_core::State, target: &AssignmentTarget) -> ApiResult<()> {
    match target {
        AssignmentTarget::Doctor(d) if !state.doctors.contains_key(d) => {
            Err(ApiError::NotFound(format!("unknown doctor {d}")))
        }
        AssignmentTarget::Group(g) if !state.groups.contains_key(g) => {
            Err(ApiError::NotFound(format!("unknown group {g}")))
        }
        AssignmentTarget::Department { hospital, specialty }
            if !state
                .hospitals
                .get(hospital)
                .is_some_and(|h| h.departments.contains(specialty)) =>
        {
            Err(ApiError::NotFound(format!("{hospital} has no {specialty} department")))
        }
        _ => Ok(()),
    }
}

fn first<T>(events: Vec<Event>, pick: impl Fn(EventPayload) -> Option<T>) -> ApiResult<T> {
    events
        .into_iter()
        .find_map(|e| pick(e.payload))
        .ok_or_else(|| ApiError::Internal("commit produced no event".into()))
}

async fn new_thread(
    State(node): State<Shared>,
    user: AuthUser,
    Json(req): Json<NewThreadRequest>,
) -> ApiResult<(StatusCode, Json<ThreadView>)> {
    if let Some(target) = &req.assign_to {
        check_target(&node.state(), target)?;
    }
    let me = user.id().clone();
    let events = node.commit(|r, now| -> ApiResult<Vec<Event>> {
        let created = create_thread(
            r,
            NewThread {
                kind: req.kind,
                creator: me.clone(),
                case_form: req.case_form,
                attachments: req.attachments,
            },
            now,
        )?;
        let id = created.payload.thread().cloned().expect("thread event");
        let mut out = vec![created];
        if let Some(target) = req.assign_to {
            out.push(assign_thread(r, &id, target, &me, now)?);
        }
        Ok(out)
    })?;
    let id = first(events, |p| match p {
        EventPayload::ThreadCreated(t) => Some(t.id),
        _ => None,
    })?;
    Ok((StatusCode::CREATED, Json(thread_view(&node, &id, user.id())?)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewMessage {
    pub body: String,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
}

async fn add_message(
    State(node): State<Shared>,
    user: AuthUser,
    Path(id): Path<ThreadId>,
    Json(req): Json<NewMessage>,
) -> ApiResult<(StatusCode, Json<Message>)> {
    if req.body.trim().is_empty() && req.attachments.is_empty() {
        return Err(ApiError::Invalid("a message needs a body or an attachment".into()));
    }
    let events = node.commit(|r, now| -> ApiResult<Vec<Event>> {
        Ok(vec![post_message(r, &id, user.id(), req.body, req.attachments, now)?])
    })?;
    let message = first(events, |p| match p {
        EventPayload::MessageAdded(m) => Some(m.message),
        _ => None,
    })?;
    Ok((StatusCode::CREATED, Json(message)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewAssignment {
    pub target: AssignmentTarget,
}

async fn add_assignment(
    State(node): State<Shared>,
    user: AuthUser,
    Path(id): Path<ThreadId>,
    Json(req): Json<NewAssignment>,
) -> ApiResult<(StatusCode, Json<Assignment>)> {
    check_target(&node.state(), &req.target)?;
    let events = node.commit(|r, now| -> ApiResult<Vec<Event>> {
        Ok(vec![assign_thread(r, &id, req.target, user.id(), now)?])
    })?;
    let assignment = first(events, |p| match p {
        EventPayload::AssignmentAdded(a) => Some(a.assignment),
        _ => None,
    })?;
    Ok((StatusCode::CREATED, Json(assignment)))
}

async fn escalate(State(node): State<Shared>, user: AuthUser, Path(id): Path<ThreadId>) -> ApiResult<Json<ThreadView>> {
    node.commit(|r, now| -> ApiResult<Vec<Event>> { Ok(vec![escalate_thread(r, &id, user.id(), now)?]) })?;
    thread_view(&node, &id, user.id()).map(Json)
}

#[derive(Deserialize)]
pub struct ConsultantsQuery {
    pub specialty: Option<Specialty>,
}

async fn consultants(
    State(node): State<Shared>,
    user: AuthUser,
    Query(q): Query<ConsultantsQuery>,
) -> ApiResult<Json<CandidateSet>> {
    let filter = q.specialty.filter(|s| !s.as_str().is_empty());
    Ok(Json(candidate_consultants(&node.state(), user.id(), filter.as_ref())?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ColleaguesView {
    /// Doctors the caller lists, same country first.
    pub colleagues: Vec<ColleagueCandidate>,
    /// Every other doctor, by name.
    pub directory: Vec<ColleagueCandidate>,
}

fn colleagues_view(node: &Node, user: &DoctorId) -> ApiResult<ColleaguesView> {
    let state = node.state();
    let colleagues = candidate_consultants(&state, user, None)?.colleagues;
    let mut directory: Vec<ColleagueCandidate> = state
        .doctors
        .values()
        .filter(|d| d.id != *user)
        .map(|d| ColleagueCandidate {
            doctor: d.id.clone(),
            display_name: d.display_name.clone(),
            specialties: d.specialties.clone(),
            hospital: d.hospital.clone(),
            country: d.country.clone(),
        })
        .collect();
    directory.sort_by(|a, b| (&a.display_name, &a.doctor).cmp(&(&b.display_name, &b.doctor)));
    Ok(ColleaguesView { colleagues, directory })
}

async fn colleagues(State(node): State<Shared>, user: AuthUser) -> ApiResult<Json<ColleaguesView>> {
    colleagues_view(&node, user.id()).map(Json)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColleagueChange {
    pub doctor: DoctorId,
    pub listed: bool,
}

async fn put_colleague(
    State(node): State<Shared>,
    user: AuthUser,
    Json(req): Json<ColleagueChange>,
) -> ApiResult<Json<ColleaguesView>> {
    node.commit(|r, now| -> ApiResult<Vec<Event>> {
        Ok(vec![set_colleague(r, user.id(), &req.doctor, req.listed, now)?])
    })?;
    colleagues_view(&node, user.id()).map(Json)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MembershipView {
    pub group: GroupId,
    pub name: String,
    pub kind: GroupKind,
    pub member: bool,
}

fn memberships_view(node: &Node, user: &DoctorId) -> Vec<MembershipView> {
    node.state()
        .groups
        .values()
        .map(|g| MembershipView {
            group: g.id.clone(),
            name: g.name.clone(),
            kind: g.kind,
            member: g.members.contains(user),
        })
        .collect()
}

async fn memberships(State(node): State<Shared>, user: AuthUser) -> Json<Vec<MembershipView>> {
    Json(memberships_view(&node, user.id()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MembershipChange {
    pub group: GroupId,
    pub member: bool,
}

async fn put_membership(
    State(node): State<Shared>,
    user: AuthUser,
    Json(req): Json<MembershipChange>,
) -> ApiResult<Json<Vec<MembershipView>>> {
    node.commit(|r, now| -> ApiResult<Vec<Event>> {
        Ok(vec![set_membership(r, user.id(), &req.group, req.member, now)?])
    })?;
    Ok(Json(memberships_view(&node, user.id())))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SyncStatusView {
    #[serde(flatten)]
    pub status: SyncStatus,
    pub staleness_threshold_hours: u64,
}

async fn sync_status(State(node): State<Shared>, _user: AuthUser) -> Json<SyncStatusView> {
    Json(SyncStatusView {
        status: node.with_replica(|r| r.sync_status()),
        staleness_threshold_hours: node.config.staleness_threshold_hours,
    })
}

fn require_admin(node: &Node, user: &AuthUser) -> ApiResult<()> {
    match node.state().doctors.get(user.id()) {
        Some(d) if d.is_admin => Ok(()),
        _ => Err(ApiError::Forbidden("administrator rights required".into())),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewUser {
    pub doctor: Doctor,
    pub secret: String,
}

async fn admin_user(
    State(node): State<Shared>,
    user: AuthUser,
    Json(req): Json<NewUser>,
) -> ApiResult<(StatusCode, Json<Doctor>)> {
    require_admin(&node, &user)?;
    if req.secret.chars().count() < MIN_SECRET_LEN {
        return Err(ApiError::Invalid(format!("secret must be at least {MIN_SECRET_LEN} characters")));
    }
    let secret = req.secret;
    let credential = tokio::task::spawn_blocking(move || hash_secret(&secret))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    let doctor = req.doctor;
    let payload = EventPayload::UserCreated(UserRecord {
        doctor: doctor.clone(),
        credential: Some(credential),
    });
    node.commit(|r, now| -> ApiResult<Vec<Event>> { Ok(vec![r.commit(payload, now)?]) })?;
    Ok((StatusCode::CREATED, Json(doctor)))
}

async fn admin_hospital(
    State(node): State<Shared>,
    user: AuthUser,
    Json(hospital): Json<Hospital>,
) -> ApiResult<(StatusCode, Json<Hospital>)> {
    require_admin(&node, &user)?;
    let payload = EventPayload::HospitalCreated(hospital.clone());
    node.commit(|r, now| -> ApiResult<Vec<Event>> { Ok(vec![r.commit(payload, now)?]) })?;
    Ok((StatusCode::CREATED, Json(hospital)))
}

async fn admin_group(
    State(node): State<Shared>,
    user: AuthUser,
    Json(group): Json<Group>,
) -> ApiResult<(StatusCode, Json<Group>)> {
    require_admin(&node, &user)?;
    let payload = EventPayload::GroupCreated(group.clone());
    node.commit(|r, now| -> ApiResult<Vec<Event>> { Ok(vec![r.commit(payload, now)?]) })?;
    Ok((StatusCode::CREATED, Json(group)))
}

async fn sync_digest(
    State(node): State<Shared>,
    caller: PeerCaller,
    Json(digest): Json<VersionVector>,
) -> ApiResult<Json<DigestReply>> {
    tracing::debug!(peer = %caller.peer, "digest request");
    Ok(Json(node.handle_digest(caller.protocol, &digest)?))
}

fn check_protocol(caller: &PeerCaller) -> ApiResult<()> {
    use medsync_core::sync::PROTOCOL_VERSION;
    if caller.protocol == PROTOCOL_VERSION {
        Ok(())
    } else {
        Err(LinkError::ProtocolMismatch {
            ours: PROTOCOL_VERSION,
            theirs: caller.protocol,
        }
        .into())
    }
}

async fn sync_delta(
    State(node): State<Shared>,
    caller: PeerCaller,
    Json(events): Json<Vec<Event>>,
) -> ApiResult<Json<DeltaAck>> {
    check_protocol(&caller)?;
    Ok(Json(node.handle_delta(&events)?))
}

#[derive(Serialize, Deserialize)]
pub struct StubAck {
    pub ingested: bool,
}

async fn sync_stub(State(node): State<Shared>, caller: PeerCaller, body: String) -> ApiResult<(StatusCode, Json<StubAck>)> {
    check_protocol(&caller)?;
    let notice = StubNotice::decode(&body).map_err(|e| ApiError::Invalid(e.to_string()))?;
    let ingested = node.with_replica(|r| r.ingest_stub(notice));
    Ok((StatusCode::ACCEPTED, Json(StubAck { ingested })))
}
