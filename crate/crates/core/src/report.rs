//! Report provenance types.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::taxonomy::LabelVector;

/// Declares a string-backed identifier newtype.
#[macro_export]
macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash,
            ::serde::Serialize, ::serde::Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl ::std::fmt::Display for $name {
            fn fmt(&self, f: &mut ::std::fmt::Formatter<'_>) -> ::std::fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Unique report identifier.
    ReportId
);
string_id!(
    /// Imaging case (one patient examination).
    CaseId
);

/// Who wrote a report version.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuthorRole {
    AiModel,
    Junior,
    SeniorReleased,
}

impl AuthorRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AuthorRole::AiModel => "ai-model",
            AuthorRole::Junior => "junior",
            AuthorRole::SeniorReleased => "senior-released",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ai-model" => Some(AuthorRole::AiModel),
            "junior" => Some(AuthorRole::Junior),
            "senior-released" => Some(AuthorRole::SeniorReleased),
            _ => None,
        }
    }
}

/// Trial arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    AiAssisted,
    StandardCare,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::AiAssisted, Arm::StandardCare];

    pub fn as_str(self) -> &'static str {
        match self {
            Arm::AiAssisted => "ai-assisted",
            Arm::StandardCare => "standard-care",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ai-assisted" => Some(Arm::AiAssisted),
            "standard-care" => Some(Arm::StandardCare),
            _ => None,
        }
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::AiAssisted => Arm::StandardCare,
            Arm::StandardCare => Arm::AiAssisted,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A free-text radiology report with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub report_id: ReportId,
    pub case_id: CaseId,
    pub text: String,
    pub author_role: AuthorRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<Arm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_report_id: Option<ReportId>,
    /// Opaque references; PA, lateral and prior images are all allowed.
    pub image_refs: Vec<String>,
    #[serde(default)]
    pub history_note: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<LabelVector>,
}

impl Report {
    pub fn validate(&self) -> Result<(), CoreError> {
        let fail = |reason: &str| {
            Err(CoreError::InvalidReport {
                report_id: self.report_id.to_string(),
                reason: reason.to_string(),
            })
        };
        if self.report_id.as_str().is_empty() {
            return fail("empty report_id");
        }
        if self.image_refs.is_empty() {
            return fail("image_refs must not be empty");
        }
        if self.author_role == AuthorRole::SeniorReleased && self.parent_report_id.is_none() {
            return fail("senior-released report must name a parent_report_id");
        }
        if let Some(labels) = &self.labels {
            let validation = labels.validate();
            if let Some(v) = validation.violations.first() {
                return fail(&v.to_string());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> Report {
        Report {
            report_id: "r1".into(),
            case_id: "c1".into(),
            text: "No acute disease.".into(),
            author_role: AuthorRole::Junior,
            arm: None,
            parent_report_id: None,
            image_refs: vec!["img/pa.dcm".into()],
            history_note: String::new(),
            labels: None,
        }
    }

    #[test]
    fn released_needs_parent() {
        let mut r = minimal();
        r.author_role = AuthorRole::SeniorReleased;
        assert!(r.validate().is_err());
        r.parent_report_id = Some("r0".into());
        assert!(r.validate().is_ok());
    }

    #[test]
    fn images_required() {
        let mut r = minimal();
        r.image_refs.clear();
        assert!(r.validate().is_err());
    }

    #[test]
    fn roles_and_arms_round_trip_as_strings() {
        for role in [
            AuthorRole::AiModel,
            AuthorRole::Junior,
            AuthorRole::SeniorReleased,
        ] {
            let json = serde_json::to_string(&role).unwrap();
            assert_eq!(json, format!("\"{}\"", role.as_str()));
            assert_eq!(AuthorRole::parse(role.as_str()), Some(role));
        }
        for arm in Arm::BOTH {
            let json = serde_json::to_string(&arm).unwrap();
            assert_eq!(json, format!("\"{}\"", arm.as_str()));
            assert_eq!(Arm::parse(arm.as_str()), Some(arm));
        }
    }
}
