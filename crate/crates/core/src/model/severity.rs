use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Ordered pathology level, annotated independently for hallucinations and
/// omissions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[repr(u8)]
pub enum Severity {
    #[default]
    None = 0,
    Word = 1,
    Partial = 2,
    Full = 3,
}

/// Which annotation axis a label belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Hallucination,
    Omission,
}

/// Canonical sentence-level label strings. Every string-to-severity mapping
/// in the crate goes through this table.
const LABELS: [(&str, Axis, Severity); 8] = [
    ("No hallucination", Axis::Hallucination, Severity::None),
    ("Small hallucination", Axis::Hallucination, Severity::Word),
    ("Partial hallucination", Axis::Hallucination, Severity::Partial),
    ("Full hallucination", Axis::Hallucination, Severity::Full),
    ("No omission", Axis::Omission, Severity::None),
    ("Small omission", Axis::Omission, Severity::Word),
    ("Partial omission", Axis::Omission, Severity::Partial),
    ("Full omission", Axis::Omission, Severity::Full),
];

impl Severity {
    pub const ALL: [Severity; 4] = [Severity::None, Severity::Word, Severity::Partial, Severity::Full];

    pub fn level(self) -> u8 {
        self as u8
    }

    pub fn from_level(level: u8) -> Option<Self> {
        Self::ALL.get(level as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Severity::None => "None",
            Severity::Word => "Word",
            Severity::Partial => "Partial",
            Severity::Full => "Full",
        }
    }

    /// Dataset label for this level on the given axis, e.g. "Partial omission".
    pub fn label(self, axis: Axis) -> &'static str {
        LABELS
            .iter()
            .find(|(_, a, s)| *a == axis && *s == self)
            .map(|(l, _, _)| *l)
            .expect("label table covers every level")
    }

    /// Parses a short name ("Partial"), a dataset label ("Partial hallucination")
    /// or a decimal level ("2"). Case-insensitive.
    pub fn parse(s: &str) -> Option<Self> {
        let t = s.trim();
        if let Ok(n) = t.parse::<u8>() {
            return Self::from_level(n);
        }
        if let Some(sev) = Self::ALL.iter().find(|v| v.name().eq_ignore_ascii_case(t)) {
            return Some(*sev);
        }
        LABELS.iter().find(|(l, _, _)| l.eq_ignore_ascii_case(t)).map(|(_, _, s)| *s)
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Severity {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Severity {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Level(u64),
            Name(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Level(n) => u8::try_from(n)
                .ok()
                .and_then(Severity::from_level)
                .ok_or_else(|| serde::de::Error::custom(format!("severity level {n} out of range 0..=3"))),
            Repr::Name(s) => {
                Severity::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown severity label {s:?}")))
            }
        }
    }
}

/// Extra label strings accepted on top of the built-in table, for corpora
/// whose data card uses different wording.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    #[serde(default)]
    pub labels: BTreeMap<String, Severity>,
}

impl LabelMap {
    pub fn resolve(&self, s: &str) -> Option<Severity> {
        self.labels.get(s).copied().or_else(|| Severity::parse(s))
    }
}
