use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::WorldConfig;
use super::oracle::BehaviorOracle;
use crate::error::{Error, Result};
use crate::store::{ActivationRecord, Dataset, MultiLayerDump, Split};

const PSD_TOLERANCE: f64 = 1e-9;
const SPLIT_SALT: u64 = 0x5B11_7C0D_E000_0001;
const ADV_SALT: u64 = 0xAD7E_25A1_0000_0002;

/// Unit vectors (rows) whose pairwise dot products reproduce `gram`.
pub fn factorize_gram(gram: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let k = gram.len();
    let m = DMatrix::from_fn(k, k, |i, j| gram[i][j]);
    let eig = SymmetricEigen::new(m);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOLERANCE {
        return Err(Error::NotPsd(min));
    }
    let roots: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    Ok((0..k)
        .map(|i| {
            let row: Vec<f64> = (0..k).map(|j| eig.eigenvectors[(i, j)] * roots[j]).collect();
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            row.into_iter().map(|x| x / n).collect()
        })
        .collect())
}

/// Largest-remainder allocation of `n` items to the four splits.
pub fn split_counts(n: usize, proportions: [f64; 4]) -> Result<[usize; 4]> {
    let total: f64 = proportions.iter().sum();
    if proportions.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "split proportions {proportions:?} must be non-negative and sum to 1"
        )));
    }
    let exact: Vec<f64> = proportions.iter().map(|p| p * n as f64).collect();
    let mut counts = [0usize; 4];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut order: Vec<usize> = (0..4).collect();
    // largest fractional part first, lower index on ties
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(n - assigned) {
        counts[i] += 1;
    }
    Ok(counts)
}

/// A built world: planted geometry plus the behavior oracle.
#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    /// Unit intent direction per domain, in `config.domains` order.
    pub intent: Vec<Vec<f64>>,
    pub centers: Vec<Vec<f64>>,
    pub oracle: BehaviorOracle,
}

/// Layout of one generated sample, shared by every layer of a dump.
#[derive(Debug, Clone, Copy)]
struct Slot {
    index: u64,
    domain: usize,
    label: u8,
    within_cell: usize,
    split: Split,
    adversarial: bool,
}

pub fn build_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let k = config.domains.len();
    let d = config.dim;
    let rows = factorize_gram(&config.gram)?;
    // intent directions live in the first k coordinates, centers in the next k
    let intent: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![0.0; d];
            v[..k].copy_from_slice(r);
            v
        })
        .collect();
    let centers = (0..k)
        .map(|i| {
            let mut c = vec![0.0; d];
            c[k + i] = config.separation;
            c
        })
        .collect();
    let oracle = BehaviorOracle::from_intent(config, &intent)?;
    Ok(World { config: config.clone(), intent, centers, oracle })
}

impl World {
    pub fn domain_index(&self, name: &str) -> Result<usize> {
        self.config
            .domains
            .iter()
            .position(|d| d == name)
            .ok_or_else(|| Error::UnknownDomain(name.to_string()))
    }

    fn slots(&self, n_per_cell: usize, proportions: [f64; 4]) -> Result<Vec<Slot>> {
        if n_per_cell == 0 {
            return Err(Error::InvalidParameter("n_per_cell must be >= 1".into()));
        }
        let counts = split_counts(n_per_cell, proportions)?;
        let seed = self.config.seed;
        let mut slots = Vec::with_capacity(n_per_cell * 2 * self.config.domains.len());
        for domain in 0..self.config.domains.len() {
            for label in [1u8, 0] {
                let cell = (domain * 2 + usize::from(label == 0)) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT);
                rng.set_stream(cell);
                let mut order: Vec<usize> = (0..n_per_cell).collect();
                order.shuffle(&mut rng);
                let mut split_of = vec![Split::Cal; n_per_cell];
                let mut pos = 0;
                for (split, &c) in Split::ALL.iter().zip(&counts) {
                    for &j in &order[pos..pos + c] {
                        split_of[j] = *split;
                    }
                    pos += c;
                }
                for (j, &split) in split_of.iter().enumerate() {
                    let index = slots.len() as u64;
                    let mut adv_rng = ChaCha8Rng::seed_from_u64(seed ^ ADV_SALT);
                    adv_rng.set_stream(index);
                    let adversarial = label == 0 && adv_rng.gen_bool(self.config.spurious_rate);
                    slots.push(Slot { index, domain, label, within_cell: j, split, adversarial });
                }
            }
        }
        Ok(slots)
    }

    /// Noise-free state of a slot at a given signal gain.
    fn mean_state(&self, slot: &Slot, gain: f64) -> Vec<f64> {
        let cfg = &self.config;
        let along = if slot.label == 1 {
            1.0
        } else if slot.adversarial {
            cfg.spurious_strength
        } else {
            0.0
        };
        let scale = along * gain * cfg.intent_margin;
        self.centers[slot.domain]
            .iter()
            .zip(&self.intent[slot.domain])
            .map(|(c, u)| c + scale * u)
            .collect()
    }

    fn record(&self, slot: &Slot, layer: u32, gain: f64) -> ActivationRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ u64::from(layer).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.set_stream(slot.index);
        let noise = self.config.noise;
        let hidden = self
            .mean_state(slot, gain)
            .into_iter()
            .map(|m| {
                let e: f64 = rng.sample(StandardNormal);
                (m + noise * e) as f32
            })
            .collect();
        let domain = &self.config.domains[slot.domain];
        let adv = if slot.adversarial { "-adv" } else { "" };
        ActivationRecord {
            id: format!("{domain}-{}-{:05}{adv}", slot.label, slot.within_cell),
            domain: domain.clone(),
            label: slot.label,
            split: slot.split,
            layer,
            hidden,
            reference_tool: (slot.label == 1).then(|| self.oracle.tool_for(domain).to_string()),
        }
    }

    /// Draws `n_per_cell` records for every (domain, label) cell at the
    /// configured layer, split per cell by `proportions` (cal, train, val, test).
    pub fn sample_records(&self, n_per_cell: usize, proportions: [f64; 4]) -> Result<Dataset> {
        let slots = self.slots(n_per_cell, proportions)?;
        let layer = self.config.layer;
        let records: Vec<ActivationRecord> =
            slots.par_iter().map(|s| self.record(s, layer, 1.0)).collect();
        Dataset::new(records, Some(self.config.dim))
    }

    /// The same samples observed at every layer of `layer_profile`, with the
    /// intent margin scaled by that layer's gain and fresh noise per layer.
    pub fn sample_layer_dump(&self, n_per_cell: usize, proportions: [f64; 4]) -> Result<MultiLayerDump> {
        let slots = self.slots(n_per_cell, proportions)?;
        let records: Vec<ActivationRecord> = self
            .config
            .layer_profile
            .par_iter()
            .flat_map_iter(|lg| slots.iter().map(move |s| self.record(s, lg.layer, lg.gain)))
            .collect();
        MultiLayerDump::new(records)
    }

    pub fn is_adversarial(record: &ActivationRecord) -> bool {
        record.id.ends_with("-adv")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::dot;
    use crate::synth::DEFAULT_GRAM;

    #[test]
    fn identity_gram_gives_orthonormal_rows() {
        let eye: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        let rows = factorize_gram(&eye).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&rows[i], &rows[j]) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn planted_cosines_match_targets() {
        let world = build_world(&WorldConfig::default()).unwrap();
        for (i, row) in DEFAULT_GRAM.iter().enumerate() {
            for (j, &want) in row.iter().enumerate() {
                assert!((dot(&world.intent[i], &world.intent[j]) - want).abs() < 1e-6);
                assert!(dot(&world.intent[i], &world.centers[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_indefinite_gram() {
        // unit diagonal, eigenvalues 1.55, 1.55, -0.1
        let a = 0.55;
        let g = vec![vec![1.0, a, a], vec![a, 1.0, -a], vec![a, -a, 1.0]];
        match factorize_gram(&g) {
            Err(Error::NotPsd(min)) => assert!((min + 0.1).abs() < 1e-9, "{min}"),
            other => panic!("{other:?}"),
        }
        // the boundary case (eigenvalue 0) is accepted
        let g = vec![vec![1.0, 0.5, 0.5], vec![0.5, 1.0, -0.5], vec![0.5, -0.5, 1.0]];
        let rows = factorize_gram(&g).unwrap();
        assert!((dot(&rows[1], &rows[2]) + 0.5).abs() < 1e-9);
    }

    #[test]
    fn split_counts_exact() {
        assert_eq!(split_counts(1000, [0.2, 0.4, 0.2, 0.2]).unwrap(), [200, 400, 200, 200]);
        assert_eq!(split_counts(7, [0.25, 0.25, 0.25, 0.25]).unwrap(), [2, 2, 2, 1]);
        assert_eq!(split_counts(3, [0.0, 1.0, 0.0, 0.0]).unwrap(), [0, 3, 0, 0]);
        assert!(split_counts(10, [0.5, 0.5, 0.5, 0.0]).is_err());
    }

    #[test]
    fn dataset_layout_and_determinism() {
        let world = build_world(&WorldConfig::default()).unwrap();
        let a = world.sample_records(125, [0.2, 0.4, 0.2, 0.2]).unwrap();
        let c = a.split_counts();
        assert_eq!((c.cal, c.train, c.val, c.test), (200, 400, 200, 200));
        let b = world.sample_records(125, [0.2, 0.4, 0.2, 0.2]).unwrap();
        assert_eq!(a.records(), b.records());
        assert!(a.records().iter().all(|r| (r.label == 1) == r.reference_tool.is_some()));
        let adv = a.records().iter().filter(|r| World::is_adversarial(r)).count() as f64;
        assert!((adv / 500.0 - 0.25).abs() < 0.06, "{adv}");
    }

    #[test]
    fn layer_dump_aligns_ids() {
        let mut cfg = WorldConfig::default();
        cfg.layer_profile.truncate(3);
        let world = build_world(&cfg).unwrap();
        let dump = world.sample_layer_dump(10, [0.2, 0.4, 0.2, 0.2]).unwrap();
        assert_eq!(dump.num_layers(), 3);
    }
}
