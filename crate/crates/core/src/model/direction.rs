use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed direction {0:?}: expected <lang>_<Script>-<lang>_<Script>")]
pub struct MalformedDirection(pub String);

/// A translation direction such as `eng_Latn-arb_Arab`.
///
/// Language codes are stored lowercase and script codes titlecase, so two
/// spellings of the same direction compare equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Direction {
    pub src_lang: String,
    pub src_script: String,
    pub tgt_lang: String,
    pub tgt_script: String,
}

fn pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^([A-Za-z]{3})_([A-Za-z]{4})-([A-Za-z]{3})_([A-Za-z]{4})$").unwrap())
}

fn titlecase(s: &str) -> String {
    let lower = s.to_ascii_lowercase();
    let mut chars = lower.chars();
    match chars.next() {
        Some(c) => c.to_ascii_uppercase().to_string() + chars.as_str(),
        None => String::new(),
    }
}

/// Scripts whose text is segmented one character per word.
fn is_han_script(script: &str) -> bool {
    matches!(script, "Hans" | "Hant" | "Hani")
}

impl Direction {
    pub fn new(src_lang: &str, src_script: &str, tgt_lang: &str, tgt_script: &str) -> Self {
        Self {
            src_lang: src_lang.to_ascii_lowercase(),
            src_script: titlecase(src_script),
            tgt_lang: tgt_lang.to_ascii_lowercase(),
            tgt_script: titlecase(tgt_script),
        }
    }

    pub fn src_is_han(&self) -> bool {
        is_han_script(&self.src_script)
    }

    pub fn tgt_is_han(&self) -> bool {
        is_han_script(&self.tgt_script)
    }

    /// The same language pair translated the other way.
    pub fn reversed(&self) -> Self {
        Self {
            src_lang: self.tgt_lang.clone(),
            src_script: self.tgt_script.clone(),
            tgt_lang: self.src_lang.clone(),
            tgt_script: self.src_script.clone(),
        }
    }
}

pub fn parse_direction(s: &str) -> Result<Direction, MalformedDirection> {
    let caps = pattern().captures(s.trim()).ok_or_else(|| MalformedDirection(s.to_string()))?;
    Ok(Direction::new(&caps[1], &caps[2], &caps[3], &caps[4]))
}

impl FromStr for Direction {
    type Err = MalformedDirection;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_direction(s)
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}-{}_{}", self.src_lang, self.src_script, self.tgt_lang, self.tgt_script)
    }
}

impl Serialize for Direction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Direction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_direction(&s).map_err(serde::de::Error::custom)
    }
}
