use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Which steering composition and gating the controller applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Routed domain vector plus the weighted global vector, probe-gated.
    Full,
    /// As `Full`, but with the ground-truth domain instead of the router's.
    #[serde(alias = "no_router")]
    OracleRouter,
    GlobalOnly,
    DomainOnly,
    /// `Full` composition with the gate pinned to +1.
    NoGate,
    /// Seeded isotropic direction with the norm of the `Full` composition.
    Random,
    /// A deliberately wrong domain vector (cyclic shift of the domain order).
    Mismatch,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::Full,
        Mode::OracleRouter,
        Mode::GlobalOnly,
        Mode::DomainOnly,
        Mode::NoGate,
        Mode::Random,
        Mode::Mismatch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::OracleRouter => "oracle_router",
            Mode::GlobalOnly => "global_only",
            Mode::DomainOnly => "domain_only",
            Mode::NoGate => "no_gate",
            Mode::Random => "random",
            Mode::Mismatch => "mismatch",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Mode::Full),
            "oracle_router" | "no_router" => Ok(Mode::OracleRouter),
            "global_only" => Ok(Mode::GlobalOnly),
            "domain_only" => Ok(Mode::DomainOnly),
            "no_gate" => Ok(Mode::NoGate),
            "random" => Ok(Mode::Random),
            "mismatch" => Ok(Mode::Mismatch),
            other => Err(Error::InvalidParameter(format!("unknown mode {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip_and_alias() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert_eq!("no_router".parse::<Mode>().unwrap(), Mode::OracleRouter);
        assert!("bogus".parse::<Mode>().is_err());
        let m: Mode = serde_json::from_str("\"no_router\"").unwrap();
        assert_eq!(m, Mode::OracleRouter);
    }
}
