//! The structured category-level verdict and its enumerations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "decrease")]
    Decrease,
    #[serde(rename = "no-effect")]
    NoEffect,
    #[serde(rename = "increase")]
    Increase,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Decrease, Label::NoEffect, Label::Increase];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Decrease => "decrease",
            Label::NoEffect => "no-effect",
            Label::Increase => "increase",
        }
    }

    /// Position in the risk ordering decrease < no-effect < increase.
    pub fn risk_rank(self) -> u8 {
        match self {
            Label::Decrease => 0,
            Label::NoEffect => 1,
            Label::Increase => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    None,
    Rare,
    Common,
}

impl Frequency {
    pub fn as_str(self) -> &'static str {
        match self {
            Frequency::None => "none",
            Frequency::Rare => "rare",
            Frequency::Common => "common",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Evidence {
    None,
    Weak,
    Strong,
}

impl Evidence {
    pub fn as_str(self) -> &'static str {
        match self {
            Evidence::None => "none",
            Evidence::Weak => "weak",
            Evidence::Strong => "strong",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("`{field}`: {message}")]
pub struct EffectError {
    pub field: &'static str,
    pub message: String,
}

impl EffectError {
    fn new(field: &'static str, message: impl Into<String>) -> Self {
        EffectError {
            field,
            message: message.into(),
        }
    }
}

macro_rules! enum_from_str {
    ($ty:ty, $field:literal, [$($variant:expr),+]) => {
        impl FromStr for $ty {
            type Err = EffectError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let wanted = s.trim().to_lowercase();
                [$($variant),+]
                    .into_iter()
                    .find(|v| v.as_str() == wanted)
                    .ok_or_else(|| {
                        let allowed: Vec<&str> = [$($variant),+].iter().map(|v| v.as_str()).collect();
                        EffectError::new($field, format!("`{s}` is not one of {}", allowed.join(", ")))
                    })
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

enum_from_str!(Label, "label", [Label::Increase, Label::Decrease, Label::NoEffect]);
enum_from_str!(
    Frequency,
    "frequency",
    [Frequency::None, Frequency::Rare, Frequency::Common]
);
enum_from_str!(Evidence, "evidence", [Evidence::None, Evidence::Weak, Evidence::Strong]);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryEffect {
    pub label: Label,
    pub confidence: f64,
    pub probability: f64,
    pub frequency: Frequency,
    pub evidence: Evidence,
    pub justification: String,
}

impl CategoryEffect {
    /// Parses tool-call arguments, reporting the first offending field.
    pub fn from_arguments(args: &Value) -> Result<Self, EffectError> {
        let text = |field: &'static str| -> Result<&str, EffectError> {
            args.get(field)
                .and_then(Value::as_str)
                .ok_or_else(|| EffectError::new(field, "missing or not a string"))
        };
        let unit = |field: &'static str| -> Result<f64, EffectError> {
            let v = match args.get(field) {
                Some(Value::Number(n)) => n.as_f64(),
                Some(Value::String(s)) => s.trim().parse::<f64>().ok(),
                _ => None,
            }
            .ok_or_else(|| EffectError::new(field, "missing or not a number"))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(EffectError::new(field, format!("{v} is outside [0, 1]")));
            }
            Ok(v)
        };
        Ok(CategoryEffect {
            label: text("label")?.parse()?,
            confidence: unit("confidence")?,
            probability: unit("probability")?,
            frequency: text("frequency")?.parse()?,
            evidence: text("evidence")?.parse()?,
            justification: args
                .get("justification")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string(),
        })
    }

    pub fn validate(&self) -> Result<(), EffectError> {
        for (field, v) in [("confidence", self.confidence), ("probability", self.probability)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(EffectError::new(field, format!("{v} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}
