//! Opaque string identifiers for replicated entities.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(value: impl Into<String>) -> Self {
                Self(value.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(value: &str) -> Self {
                Self(value.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(value: String) -> Self {
                Self(value)
            }
        }
    };
}

string_id!(
    /// Identity of one replica (a local hospital server or a global server).
    ServerId
);
string_id!(DoctorId);
string_id!(HospitalId);
string_id!(GroupId);
string_id!(ThreadId);
string_id!(MessageId);
string_id!(AttachmentId);
string_id!(
    /// Specialty tag such as `pediatrics` or `internal_medicine`.
    Specialty
);
string_id!(
    /// ISO 3166 alpha-2 country tag (`GH`, `US`, ...).
    CountryCode
);
