use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pairwise cosines between the four domain intent directions, in the
/// order code, math, search, translation.
pub const DEFAULT_GRAM: [[f64; 4]; 4] = [
    [1.00, 0.17, 0.37, 0.42],
    [0.17, 1.00, 0.29, 0.11],
    [0.37, 0.29, 1.00, 0.03],
    [0.42, 0.11, 0.03, 1.00],
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerGain {
    pub layer: u32,
    /// Multiplier on the intent margin at this layer.
    pub gain: f64,
}

/// Parameters of the synthetic world. Every field has a default, so a
/// config file may list only what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub dim: usize,
    pub domains: Vec<String>,
    /// Target cosines between domain intent directions, indexed like `domains`.
    pub gram: Vec<Vec<f64>>,
    /// Distance of each domain center from the origin; centers are mutually
    /// orthogonal and orthogonal to every intent direction.
    pub separation: f64,
    /// Displacement of Tool-Necessary states along their intent direction.
    pub intent_margin: f64,
    /// Standard deviation of the isotropic Gaussian noise.
    pub noise: f64,
    /// Trigger bias is `-laziness * intent_margin * mean_d(w_trig . u_d)`.
    pub laziness: f64,
    /// Fraction of Non-Tool samples carrying a spurious intent component.
    pub spurious_rate: f64,
    /// Size of that component as a fraction of `intent_margin`.
    pub spurious_strength: f64,
    /// Probability that an emitted call is corrupted.
    pub format_noise: f64,
    pub seed: u64,
    /// Layer id stamped on single-layer datasets.
    pub layer: u32,
    /// Per-layer signal gains for multi-layer dumps.
    pub layer_profile: Vec<LayerGain>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            domains: ["code", "math", "search", "translation"].map(String::from).to_vec(),
            gram: DEFAULT_GRAM.iter().map(|r| r.to_vec()).collect(),
            separation: 6.0,
            intent_margin: 18.0,
            noise: 1.0,
            laziness: 1.1,
            spurious_rate: 0.25,
            spurious_strength: 0.55,
            format_noise: 0.05,
            seed: 42,
            layer: 18,
            layer_profile: [(10, 0.08), (12, 0.15), (14, 0.3), (16, 0.6), (18, 1.0), (20, 0.85), (22, 0.6), (24, 0.4)]
                .map(|(layer, gain)| LayerGain { layer, gain })
                .to_vec(),
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let k = self.domains.len();
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if k == 0 {
            return bad("world needs at least one domain".into());
        }
        let mut sorted = self.domains.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != k {
            return bad("duplicate domain names".into());
        }
        if self.dim < 2 * k {
            return bad(format!("dim {} too small for {k} domains (need >= {})", self.dim, 2 * k));
        }
        if self.gram.len() != k || self.gram.iter().any(|r| r.len() != k) {
            return bad(format!("gram matrix must be {k}x{k}"));
        }
        for i in 0..k {
            if (self.gram[i][i] - 1.0).abs() > 1e-9 {
                return bad(format!("gram diagonal entry {i} is {}, expected 1", self.gram[i][i]));
            }
            for j in 0..k {
                let g = self.gram[i][j];
                if !g.is_finite() || (g - self.gram[j][i]).abs() > 1e-9 || g.abs() > 1.0 + 1e-9 {
                    return bad(format!("gram entry ({i},{j}) = {g} is not a symmetric cosine"));
                }
            }
        }
        let checks = [
            ("separation", self.separation, self.separation >= 0.0),
            ("intent_margin", self.intent_margin, self.intent_margin > 0.0),
            // zero noise is allowed for exact geometry checks
            ("noise", self.noise, self.noise >= 0.0),
            ("laziness", self.laziness, self.laziness > 0.0),
            ("spurious_rate", self.spurious_rate, (0.0..=1.0).contains(&self.spurious_rate)),
            ("spurious_strength", self.spurious_strength, self.spurious_strength >= 0.0),
            ("format_noise", self.format_noise, (0.0..=1.0).contains(&self.format_noise)),
        ];
        for (name, v, ok) in checks {
            if !v.is_finite() || !ok {
                return bad(format!("{name} = {v} out of range"));
            }
        }
        if self.layer_profile.is_empty() {
            return bad("layer_profile is empty".into());
        }
        let mut layers: Vec<u32> = self.layer_profile.iter().map(|l| l.layer).collect();
        layers.sort_unstable();
        layers.dedup();
        if layers.len() != self.layer_profile.len() {
            return bad("duplicate layer in layer_profile".into());
        }
        if self.layer_profile.iter().any(|l| !(l.gain.is_finite() && l.gain > 0.0)) {
            return bad("layer gains must be positive".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
