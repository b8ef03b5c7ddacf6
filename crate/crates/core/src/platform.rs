use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Cloud workflow services the toolkit targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Aws,
    Google,
    Azure,
}

impl Platform {
    pub const ALL: [Platform; 3] = [Platform::Aws, Platform::Google, Platform::Azure];

    /// Maximum concurrent branches of one map or parallel state; `None` when
    /// the service documents no limit.
    pub fn max_parallelism(self) -> Option<usize> {
        match self {
            Platform::Aws => Some(40),
            Platform::Google => Some(20),
            Platform::Azure => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Platform::Aws => "aws",
            Platform::Google => "google",
            Platform::Azure => "azure",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Platform::Aws => "AWS",
            Platform::Google => "Google",
            Platform::Azure => "Azure",
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Platform {
    type Err = String;

    fn from_str(s: &str) -> Result<Platform, String> {
        match s.to_ascii_lowercase().as_str() {
            "aws" => Ok(Platform::Aws),
            "google" | "gcp" => Ok(Platform::Google),
            "azure" => Ok(Platform::Azure),
            other => Err(format!("unknown platform `{other}`")),
        }
    }
}
