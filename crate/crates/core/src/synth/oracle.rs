use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::WorldConfig;
use crate::error::{check_dim, Error, Result};
use crate::parser::{CLOSE_TAG, OPEN_TAG};
use crate::scalar::Scalar;

pub const REFUSAL_TEXT: &str = "I can answer this directly without calling a tool.";
const TEXT_SALT: u64 = 0x7E47_0000_0000_0003;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolEmitter {
    pub tool: String,
    pub arguments: BTreeMap<String, String>,
}

impl ToolEmitter {
    fn for_domain(domain: &str) -> Self {
        let (tool, key, value) = match domain {
            "math" => ("calculator", "expression", "12 * (3 + 4)"),
            "code" => ("python_interpreter", "code", "print(sum(range(10)))"),
            "search" => ("web_search", "query", "sustainable living images"),
            "translation" => ("translator", "text", "Bonjour, comment allez-vous ?"),
            _ => ("", "input", "example"),
        };
        let tool = if tool.is_empty() { format!("{domain}_tool") } else { tool.to_string() };
        Self { tool, arguments: [(key.to_string(), value.to_string())].into() }
    }
}

/// Linear stand-in for the trigger-token logit: `z(h) = w_trig . h + b_trig`.
/// A tool call is emitted iff `z > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorOracle {
    pub w_trig: Vec<f64>,
    pub b_trig: f64,
    pub emitters: BTreeMap<String, ToolEmitter>,
    pub format_noise: f64,
    pub seed: u64,
}

impl BehaviorOracle {
    pub(crate) fn from_intent(config: &WorldConfig, intent: &[Vec<f64>]) -> Result<Self> {
        let d = config.dim;
        let mut w = vec![0.0; d];
        for u in intent {
            for (a, b) in w.iter_mut().zip(u) {
                *a += b;
            }
        }
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n < 1e-9 {
            return Err(Error::InvalidParameter("intent directions sum to zero; no trigger direction".into()));
        }
        w.iter_mut().for_each(|x| *x /= n);
        let k_mean = intent
            .iter()
            .map(|u| u.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
            .sum::<f64>()
            / intent.len() as f64;
        Ok(Self {
            b_trig: -config.laziness * config.intent_margin * k_mean,
            w_trig: w,
            emitters: config
                .domains
                .iter()
                .map(|dname| (dname.clone(), ToolEmitter::for_domain(dname)))
                .collect(),
            format_noise: config.format_noise,
            seed: config.seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.w_trig.len()
    }

    pub fn trigger_logit<T: Scalar>(&self, h: &[T]) -> Result<f64> {
        check_dim(self.dim(), h.len(), "trigger logit")?;
        Ok(h.iter().zip(&self.w_trig).map(|(x, w)| x.as_f64() * w).sum::<f64>() + self.b_trig)
    }

    pub fn tool_for(&self, domain: &str) -> &str {
        self.emitters.get(domain).map_or("", |e| e.tool.as_str())
    }

    /// Text the simulated model produces from state `h`. `key` selects the
    /// format-noise draw, so the same key always yields the same text.
    pub fn generate_text<T: Scalar>(&self, h: &[T], domain: &str, key: u64) -> Result<String> {
        let emitter = self
            .emitters
            .get(domain)
            .ok_or_else(|| Error::UnknownDomain(domain.to_string()))?;
        if self.trigger_logit(h)? <= 0.0 {
            return Ok(REFUSAL_TEXT.to_string());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ TEXT_SALT);
        rng.set_stream(key);
        let args: serde_json::Map<String, Value> =
            emitter.arguments.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        let mut payload = json!({"name": emitter.tool, "arguments": args}).to_string();
        if self.format_noise > 0.0 && rng.gen_bool(self.format_noise) {
            if rng.gen_bool(0.5) {
                payload.pop();
            } else {
                payload = json!({"name": emitter.tool}).to_string();
            }
        }
        Ok(format!("{OPEN_TAG}{payload}{CLOSE_TAG}<|im_end|>"))
    }
}
