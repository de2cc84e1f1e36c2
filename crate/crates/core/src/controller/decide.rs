use serde::{Deserialize, Serialize};

use super::bundle::AssetBundle;
use super::mode::Mode;
use crate::error::{check_dim, Error, Result};
use crate::probe::{Raw, Standardized};
use crate::scalar::{axpy, norm, Scalar};
use crate::steering::{mismatch_map, random_control};

/// Ternary gate: +1 above `tau`, -1 below `1 - tau`, 0 in between.
///
/// The lower test is written as `1 - p > tau` so that `gate(p) == -gate(1 - p)`
/// holds exactly in floating point.
pub fn gate<T: Scalar>(p: T, tau: T) -> Result<i8> {
    check_tau(tau)?;
    if !(p >= T::zero() && p <= T::one()) {
        return Err(Error::InvalidParameter(format!("probability {p} outside [0, 1]")));
    }
    Ok(if p > tau {
        1
    } else if T::one() - p > tau {
        -1
    } else {
        0
    })
}

pub(crate) fn check_tau<T: Scalar>(tau: T) -> Result<()> {
    if tau >= T::of(0.5) && tau < T::one() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("tau {tau} outside [0.5, 1)")))
    }
}

/// Strength and confidence threshold the controller runs at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint<T> {
    pub alpha: T,
    pub tau: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerDecision<T> {
    pub mode: Mode,
    /// Domain whose probe produced `intent_p` (the oracle domain under
    /// `oracle_router`).
    pub routed_domain: String,
    pub intent_p: T,
    pub gate: i8,
    pub mov: Vec<T>,
    pub delta: Vec<T>,
}

impl<T: Scalar> AssetBundle<T> {
    /// Single-shot decision at the bundle's own operating point.
    pub fn decide(
        &self,
        h_raw: &[T],
        mode: Mode,
        oracle_domain: Option<&str>,
        seed: u64,
    ) -> Result<SteerDecision<T>> {
        let op = OperatingPoint { alpha: self.alpha, tau: self.tau };
        self.decide_at(h_raw, mode, oracle_domain, seed, op)
    }

    /// Routes on the standardized state, probes the raw state, composes the
    /// steering direction for `mode` and scales it by `gate * alpha`.
    pub fn decide_at(
        &self,
        h_raw: &[T],
        mode: Mode,
        oracle_domain: Option<&str>,
        seed: u64,
        op: OperatingPoint<T>,
    ) -> Result<SteerDecision<T>> {
        check_dim(self.dim, h_raw.len(), "decide")?;
        check_tau(op.tau)?;
        if !(op.alpha >= T::zero()) {
            return Err(Error::InvalidParameter(format!("alpha {} must be >= 0", op.alpha)));
        }

        let domain = if mode == Mode::OracleRouter {
            let d = oracle_domain.ok_or(Error::MissingOracleDomain)?;
            if !self.v_domain.contains_key(d) {
                return Err(Error::UnknownDomain(d.to_string()));
            }
            d.to_string()
        } else {
            let std = Standardized::new(&self.standardizer, Raw(h_raw))?;
            self.router.route(&std)?.to_string()
        };

        let probe = self
            .probes
            .get(&domain)
            .ok_or_else(|| Error::UnknownDomain(domain.clone()))?;
        let intent_p = probe.probability(Raw(h_raw))?;

        let mov = match mode {
            Mode::Full | Mode::OracleRouter | Mode::NoGate => self.compose_mov(&domain)?,
            Mode::GlobalOnly => self.v_global.clone(),
            Mode::DomainOnly => self.unit_for(&domain)?.to_vec(),
            Mode::Mismatch => {
                let map = mismatch_map(&self.domain_order)?;
                self.compose_mov(&map[&domain])?
            }
            Mode::Random => {
                let target = norm(&self.compose_mov(&domain)?);
                random_control(target, self.dim, seed)?
            }
        };

        let g = match mode {
            Mode::NoGate => 1,
            _ => gate(intent_p, op.tau)?,
        };
        let delta = if g == 0 || op.alpha == T::zero() {
            vec![T::zero(); self.dim]
        } else {
            let scale = T::of(f64::from(g)) * op.alpha;
            mov.iter().map(|&v| scale * v).collect()
        };
        Ok(SteerDecision { mode, routed_domain: domain, intent_p, gate: g, mov, delta })
    }

    /// `v_domain[domain] + beta * v_global`, not renormalized.
    pub fn compose_mov(&self, domain: &str) -> Result<Vec<T>> {
        let mut mov = self.unit_for(domain)?.to_vec();
        axpy(self.beta, &self.v_global, &mut mov);
        Ok(mov)
    }

    fn unit_for(&self, domain: &str) -> Result<&[T]> {
        self.v_domain
            .get(domain)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownDomain(domain.to_string()))
    }
}

/// `h + delta`. The caller applies this at most once per generation, at the
/// configured layer and the final non-padding prompt position.
pub fn apply_injection<T: Scalar>(h: &[T], decision: &SteerDecision<T>) -> Result<Vec<T>> {
    check_dim(decision.delta.len(), h.len(), "apply_injection")?;
    if decision.gate == 0 {
        return Ok(h.to_vec());
    }
    Ok(h.iter().zip(&decision.delta).map(|(&x, &d)| x + d).collect())
}
