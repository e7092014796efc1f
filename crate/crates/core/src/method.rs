use crate::error::{Error, Result};
use crate::layers::SamplerKind;
use serde::{Deserialize, Serialize};
use std::fmt;

/// The seven predictive-uncertainty methods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Hnn,
    Mcd,
    De,
    BnnNaive,
    BnnLrt,
    BnnFo,
    BnnRad,
}

pub const ALL_METHODS: [Method; 7] = [
    Method::Hnn,
    Method::Mcd,
    Method::De,
    Method::BnnNaive,
    Method::BnnLrt,
    Method::BnnFo,
    Method::BnnRad,
];

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Hnn => "hnn",
            Method::Mcd => "mcd",
            Method::De => "de",
            Method::BnnNaive => "bnn-naive",
            Method::BnnLrt => "bnn-lrt",
            Method::BnnFo => "bnn-fo",
            Method::BnnRad => "bnn-rad",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ALL_METHODS
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = ALL_METHODS.iter().map(|m| m.as_str()).collect();
                Error::config(format!(
                    "unknown method tag `{s}`; valid tags: {}",
                    valid.join(", ")
                ))
            })
    }

    pub fn is_bnn(self) -> bool {
        self.sampler().is_some()
    }

    pub fn sampler(self) -> Option<SamplerKind> {
        match self {
            Method::BnnNaive => Some(SamplerKind::Naive),
            Method::BnnLrt => Some(SamplerKind::Lrt),
            Method::BnnFo => Some(SamplerKind::Flipout),
            Method::BnnRad => Some(SamplerKind::Radial),
            _ => None,
        }
    }

    /// Single-pass deterministic model (no predictive sampling).
    pub fn is_deterministic(self) -> bool {
        matches!(self, Method::Hnn | Method::De)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
