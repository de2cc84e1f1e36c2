//! End-to-end desk-scale run on a synthetic world: layer sweep, split
//! isolation, vector estimation, router and probe fitting, bundle assembly,
//! α/τ sweep, ablations and the three diagnostic hypotheses. Everything is
//! derived from one seed and the report serializes deterministically.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::controller::{AssetBundle, Mode, Precision};
use crate::error::{Error, Result};
use crate::eval::{
    delta_logit_experiment, run_ablations, run_sweep, AblationResult, DeltaLogitTable, Direction, Harness,
    SweepGrid, SweepResult,
};
use crate::parser::ToolSchema;
use crate::probe::{
    fit_probes, fit_router, fit_standardizer, layer_sweep, probe_auc, routing_accuracy, shuffle_control,
    train_binary, LayerSweepResult, Probe, ShuffleSummary, TrainConfig,
};
use crate::scalar::{lift, Scalar};
use crate::steering::{build_vector, interference_matrix, Scope, SteeringVector};
use crate::store::{enforce_split_isolation, ActivationRecord, Dataset, IsolationReport, Split};
use crate::synth::{build_world, World, WorldConfig};

pub const DEFAULT_PROPORTIONS: [f64; 4] = [0.2, 0.4, 0.2, 0.2];
pub const DEFAULT_DELTA_LOGIT_ALPHAS: [f64; 3] = [1.0, 2.0, 4.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub world: WorldConfig,
    pub n_per_cell: usize,
    /// (cal, train, val, test)
    pub proportions: [f64; 4],
    pub grid: SweepGrid,
    pub ablation_modes: Vec<Mode>,
    pub beta: f64,
    pub shuffle_rounds: usize,
    pub delta_logit_n: usize,
    pub delta_logit_alphas: Vec<f64>,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            n_per_cell: 500,
            proportions: DEFAULT_PROPORTIONS,
            grid: SweepGrid::default(),
            ablation_modes: Mode::ALL.to_vec(),
            beta: 1.0,
            shuffle_rounds: 20,
            delta_logit_n: 200,
            delta_logit_alphas: DEFAULT_DELTA_LOGIT_ALPHAS.to_vec(),
            train: TrainConfig::default(),
            seed: 42,
        }
    }
}

/// Fitted components before an operating point is chosen.
#[derive(Debug, Clone)]
pub struct Trained<T> {
    pub bundle: AssetBundle<T>,
    pub global: SteeringVector<T>,
    pub domains: Vec<SteeringVector<T>>,
}

/// Estimates vectors on cal and fits standardizer, router and probes on
/// train. The bundle starts at alpha 1, tau 0.5.
pub fn train_bundle<T: Scalar>(data: &Dataset, beta: f64, cfg: &TrainConfig) -> Result<Trained<T>> {
    let domain_order = data.domains();
    let cal = data.split(Split::Cal);
    let train = data.split(Split::Train);
    let global = build_vector::<T>(&cal, &Scope::Global)?;
    let domains = domain_order
        .iter()
        .map(|d| build_vector::<T>(&cal, &Scope::Domain(d.clone())))
        .collect::<Result<Vec<_>>>()?;
    let standardizer = fit_standardizer::<T>(&train)?;
    let router = fit_router(&train, &standardizer, &domain_order, cfg)?;
    let probes = fit_probes(&train, &domain_order, cfg)?;
    let bundle = AssetBundle {
        dim: data.dim(),
        layer: data.records().first().map_or(0, |r| r.layer),
        alpha: T::one(),
        beta: T::of(beta),
        tau: T::of(0.5),
        domain_order,
        v_global: global.unit.clone(),
        v_domain: domains.iter().map(|v| (v.name.clone(), v.unit.clone())).collect(),
        router,
        probes,
        standardizer,
        precision: Precision::default(),
    };
    bundle.validate()?;
    Ok(Trained { bundle, global, domains })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReadout {
    /// Validation AUC of each domain's intent probe.
    pub domain_auc: BTreeMap<String, f64>,
    /// Validation AUC of a single probe trained on all domains.
    pub global_auc: f64,
    pub shuffle: ShuffleSummary,
    pub routing_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceCheck {
    pub domains: Vec<String>,
    pub estimated: Vec<Vec<f64>>,
    pub target: Vec<Vec<f64>>,
    pub max_abs_error: f64,
}

/// Domain-vector cosines estimated from cal records of `world`, against the
/// planted Gram matrix.
pub fn interference_check(world: &World, n_per_cell: usize, proportions: [f64; 4]) -> Result<InterferenceCheck> {
    let data = world.sample_records(n_per_cell, proportions)?;
    let cal = data.split(Split::Cal);
    let domains = &world.config.domains;
    let vectors = domains
        .iter()
        .map(|d| build_vector::<f64>(&cal, &Scope::Domain(d.clone())))
        .collect::<Result<Vec<_>>>()?;
    let m = interference_matrix(&vectors)?;
    let mut max_abs_error = 0.0_f64;
    for (i, row) in m.cells.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            max_abs_error = max_abs_error.max((c - world.config.gram[i][j]).abs());
        }
    }
    Ok(InterferenceCheck {
        domains: domains.clone(),
        estimated: m.cells,
        target: world.config.gram.clone(),
        max_abs_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LazyGap {
    pub baseline_recall: Option<f64>,
    pub min_probe_auc: f64,
    pub baseline_f1: Option<f64>,
    pub steered_f1: Option<f64>,
    pub relative_f1_gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub config: PipelineConfig,
    pub layer_sweep: LayerSweepResult,
    pub layer: u32,
    pub isolation: IsolationReport,
    pub vector_norms: BTreeMap<String, f64>,
    pub probes: ProbeReadout,
    pub sweep: SweepResult,
    pub ablation: AblationResult,
    pub delta_logit: DeltaLogitTable,
    pub interference: InterferenceCheck,
    pub lazy_gap: LazyGap,
}

impl PipelineReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// `n` records spread evenly over `records`.
fn spread<'a>(records: &[&'a ActivationRecord], n: usize) -> Vec<&'a ActivationRecord> {
    let len = records.len();
    if n >= len {
        return records.to_vec();
    }
    (0..n).map(|i| records[i * len / n]).collect()
}

/// Per-domain probe AUC, a pooled probe with its label-shuffle control, and
/// routing accuracy, all scored on validation.
pub fn probe_readout<T: Scalar>(
    data: &Dataset,
    bundle: &AssetBundle<T>,
    rounds: usize,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<ProbeReadout> {
    let train = data.split(Split::Train);
    let val = data.split(Split::Val);
    let mut domain_auc = BTreeMap::new();
    for (name, probe) in &bundle.probes {
        let subset: Vec<&ActivationRecord> = val.iter().copied().filter(|r| &r.domain == name).collect();
        domain_auc.insert(name.clone(), probe_auc(probe, &subset)?);
    }
    let tx: Vec<Vec<T>> = train.iter().map(|r| lift(&r.hidden)).collect();
    let ty: Vec<u8> = train.iter().map(|r| r.label).collect();
    let vx: Vec<Vec<T>> = val.iter().map(|r| lift(&r.hidden)).collect();
    let vy: Vec<u8> = val.iter().map(|r| r.label).collect();
    let fit = train_binary(&tx, &ty, cfg)?;
    let global = Probe { w: fit.w, b: fit.b, domain: "all".into() };
    Ok(ProbeReadout {
        domain_auc,
        global_auc: probe_auc(&global, &val)?,
        shuffle: shuffle_control(&tx, &ty, &vx, &vy, seed, rounds, cfg)?,
        routing_accuracy: routing_accuracy(&bundle.router, &bundle.standardizer, &val)?,
    })
}

pub fn run_pipeline<T: Scalar>(cfg: &PipelineConfig) -> Result<PipelineReport> {
    if cfg.delta_logit_n < 2 {
        return Err(Error::InvalidParameter("delta_logit_n must be >= 2".into()));
    }
    let world = build_world(&cfg.world)?;
    let dump = world.sample_layer_dump(cfg.n_per_cell, cfg.proportions)?;
    let sweep_layers = layer_sweep::<T>(&dump, &cfg.train)?;
    let layer = sweep_layers.selected;
    let data = dump.layer(layer).ok_or_else(|| Error::MissingSplit { layer, split: "all".into() })?;
    let isolation = enforce_split_isolation(data)?;

    let mut trained = train_bundle::<T>(data, cfg.beta, &cfg.train)?;
    let mut vector_norms = BTreeMap::new();
    for v in std::iter::once(&trained.global).chain(&trained.domains) {
        vector_norms.insert(v.name.clone(), crate::scalar::norm(&v.raw).as_f64());
    }
    let probes = probe_readout(data, &trained.bundle, cfg.shuffle_rounds, cfg.seed, &cfg.train)?;

    let schema = ToolSchema::default();
    let val = data.split(Split::Val);
    let test = data.split(Split::Test);
    let sweep = {
        let harness = Harness::new(&trained.bundle, &world.oracle, &schema, cfg.seed);
        run_sweep(&cfg.grid, &harness, &val, &test)?
    };
    trained.bundle.alpha = T::of(sweep.selected.alpha);
    trained.bundle.tau = T::of(sweep.selected.tau);
    let harness = Harness::new(&trained.bundle, &world.oracle, &schema, cfg.seed);
    let ablation = run_ablations(&cfg.ablation_modes, sweep.selected.alpha, sweep.selected.tau, &harness, &test)?;

    let states: Vec<Vec<T>> = spread(&test, cfg.delta_logit_n).iter().map(|r| lift(&r.hidden)).collect();
    let delta_logit =
        delta_logit_experiment(&world.oracle, &states, &trained.global.unit, &cfg.delta_logit_alphas, cfg.seed)?;
    let interference = interference_check(&world, cfg.n_per_cell, cfg.proportions)?;

    let full = sweep.test.f1;
    let base = sweep.test_baseline.f1;
    let lazy_gap = LazyGap {
        baseline_recall: sweep.test_baseline.recall,
        min_probe_auc: probes.domain_auc.values().copied().fold(f64::INFINITY, f64::min),
        baseline_f1: base,
        steered_f1: full,
        relative_f1_gain: match (full, base) {
            (Some(f), Some(b)) if b != 0.0 => Some((f - b) / b),
            _ => None,
        },
    };

    Ok(PipelineReport {
        seed: cfg.seed,
        config: cfg.clone(),
        layer_sweep: sweep_layers,
        layer,
        isolation,
        vector_norms,
        probes,
        sweep,
        ablation,
        delta_logit,
        interference,
        lazy_gap,
    })
}

impl DeltaLogitTable {
    /// Largest |ΔLogit(+v) + ΔLogit(−v)| over the alphas.
    pub fn max_sign_asymmetry(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.direction == Direction::Plus)
            .filter_map(|p| self.get(p.alpha, Direction::Minus).map(|m| (p.mean_delta_logit + m.mean_delta_logit).abs()))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_pipeline_runs() {
        let cfg = PipelineConfig {
            world: WorldConfig { dim: 16, ..WorldConfig::default() },
            n_per_cell: 60,
            shuffle_rounds: 2,
            delta_logit_n: 20,
            grid: SweepGrid { alphas: vec![1.0, 3.0], taus: vec![0.5, 0.6], modes: vec![Mode::Full] },
            ..PipelineConfig::default()
        };
        let r = run_pipeline::<f64>(&cfg).unwrap();
        assert_eq!(r.sweep.cells.len(), 4);
        assert_eq!(r.ablation.modes.len(), Mode::ALL.len());
        assert!(r.isolation.ok);
        assert_eq!(r.delta_logit.n, 20);
        assert_eq!(r.to_json().unwrap(), run_pipeline::<f64>(&cfg).unwrap().to_json().unwrap());
    }

    #[test]
    fn noise_free_interference_is_exact() {
        let world = build_world(&WorldConfig { noise: 0.0, ..WorldConfig::default() }).unwrap();
        let check = interference_check(&world, 20, DEFAULT_PROPORTIONS).unwrap();
        assert!(check.max_abs_error < 1e-6, "{}", check.max_abs_error);
    }
}
