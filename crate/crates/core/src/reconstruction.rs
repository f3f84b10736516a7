//! Fitness-model reconstruction of bilateral exposures from aggregate
//! interbank positions.
//!
//! A link `i → j` (bank `i` lends to bank `j`) exists with probability
//! `p_ij = z A_i L_j / (1 + z A_i L_j)` and, when present, carries the weight
//! `(z⁻¹ + A_i L_j) / C`, so that `E[A_ij] = A_i L_j / C`. Self-loops are
//! never sampled.
//!
//! Sampling uses ChaCha8 keyed by `seed_from_u64(master_seed)` with the
//! ensemble index as the stream number: every network is a pure function of
//! `(snapshot, density, master_seed, index)`, whatever the thread count.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketSnapshot;

pub const DEFAULT_DENSITY: f64 = 0.10;
pub const DEFAULT_ENSEMBLE_SIZE: usize = 1000;

/// Bisection bracket on the normalized log-parameter.
const LOG_BRACKET: (f64, f64) = (-40.0, 40.0);
const MAX_BISECTIONS: usize = 200;
/// Calibration residual tolerance, per ordered pair.
pub const CALIBRATION_TOLERANCE: f64 = 1e-6;

/// `p = z a l / (1 + z a l)`.
pub fn link_probability(assets_i: f64, liabilities_j: f64, z: f64) -> f64 {
    let x = z * assets_i * liabilities_j;
    x / (1.0 + x)
}

fn positive_products(snapshot: &MarketSnapshot) -> Vec<f64> {
    let assets = snapshot.assets();
    let liabilities = snapshot.liabilities();
    let mut out = Vec::new();
    for (i, &a) in assets.iter().enumerate() {
        for (j, &l) in liabilities.iter().enumerate() {
            if i != j && a * l > 0.0 {
                out.push(a * l);
            }
        }
    }
    out
}

/// Expected number of links at parameter `z`, diagonal excluded.
pub fn expected_links(snapshot: &MarketSnapshot, z: f64) -> f64 {
    positive_products(snapshot)
        .iter()
        .map(|&x| {
            let zx = z * x;
            zx / (1.0 + zx)
        })
        .sum()
}

/// Solves `Σ_{i≠j} p_ij(z) = d · n(n−1)` for `z`.
///
/// The search runs on `ln z + ln s`, with `s` the mean positive `A_i L_j`,
/// so the bracket does not depend on the monetary unit.
pub fn calibrate_density(snapshot: &MarketSnapshot, density: f64) -> Result<f64> {
    if !(density > 0.0 && density < 1.0) {
        return Err(Error::InvalidInput(format!("target density must lie in (0, 1), got {density}")));
    }
    let n = snapshot.len() as f64;
    let pairs = n * (n - 1.0);
    let products = positive_products(snapshot);
    if products.is_empty() {
        return Err(Error::UnreachableDensity { requested: density, maximum: 0.0 });
    }
    let target = density * pairs;
    let attainable = products.len() as f64;
    if target >= attainable {
        return Err(Error::UnreachableDensity { requested: density, maximum: attainable / pairs });
    }

    let scale = products.iter().sum::<f64>() / attainable;
    let excess = |x: f64| -> f64 {
        let z = x.exp() / scale;
        products
            .iter()
            .map(|&p| {
                let zp = z * p;
                zp / (1.0 + zp)
            })
            .sum::<f64>()
            - target
    };

    let (mut lo, mut hi) = LOG_BRACKET;
    if excess(lo) > 0.0 || excess(hi) < 0.0 {
        return Err(Error::InvalidInput(format!(
            "density {density} not bracketed by the calibration search interval"
        )));
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let residual = excess(x).abs();
    if residual >= CALIBRATION_TOLERANCE * pairs {
        return Err(Error::Consistency(format!("density calibration residual {residual} exceeds tolerance")));
    }
    Ok(x.exp() / scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionParams {
    pub density: f64,
    pub z: f64,
    pub ensemble_size: usize,
    pub master_seed: u64,
}

impl ReconstructionParams {
    pub fn calibrate(
        snapshot: &MarketSnapshot,
        density: f64,
        ensemble_size: usize,
        master_seed: u64,
    ) -> Result<Self> {
        let z = calibrate_density(snapshot, density)?;
        Ok(ReconstructionParams { density, z, ensemble_size, master_seed })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exposure {
    pub lender: usize,
    pub borrower: usize,
    pub amount: f64,
}

/// One realization of the bilateral exposures, stored as sorted triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureMatrix {
    n: usize,
    entries: Vec<Exposure>,
}

impl ExposureMatrix {
    pub fn empty(n: usize) -> Self {
        ExposureMatrix { n, entries: Vec::new() }
    }

    /// Builds a matrix from `(lender, borrower, amount)` triplets. Zero
    /// amounts are dropped; duplicates, self-loops and negative or
    /// non-finite amounts are rejected.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut entries: Vec<Exposure> = Vec::new();
        for (lender, borrower, amount) in triplets {
            if lender >= n || borrower >= n {
                return Err(Error::InvalidInput(format!(
                    "exposure ({lender}, {borrower}) out of range for {n} banks"
                )));
            }
            if lender == borrower {
                return Err(Error::InvalidInput(format!("self-exposure at bank {lender}")));
            }
            if !(amount.is_finite() && amount >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "exposure ({lender}, {borrower}) has invalid amount {amount}"
                )));
            }
            if amount > 0.0 {
                entries.push(Exposure { lender, borrower, amount });
            }
        }
        entries.sort_by_key(|e| (e.lender, e.borrower));
        if entries.windows(2).any(|w| (w[0].lender, w[0].borrower) == (w[1].lender, w[1].borrower)) {
            return Err(Error::InvalidInput("duplicate exposure entry".into()));
        }
        Ok(ExposureMatrix { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[Exposure] {
        &self.entries
    }

    pub fn link_count(&self) -> usize {
        self.entries.len()
    }

    /// Links over the `n(n−1)` possible directed pairs.
    pub fn realized_density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.entries.len() as f64 / (self.n * (self.n - 1)) as f64
    }

    pub fn get(&self, lender: usize, borrower: usize) -> f64 {
        self.entries
            .binary_search_by_key(&(lender, borrower), |e| (e.lender, e.borrower))
            .map_or(0.0, |k| self.entries[k].amount)
    }

    /// `Σ_j A_ij` per lender.
    pub fn row_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for e in &self.entries {
            sums[e.lender] += e.amount;
        }
        sums
    }

    /// `Σ_i A_ij` per borrower.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for e in &self.entries {
            sums[e.borrower] += e.amount;
        }
        sums
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.amount).sum()
    }

    /// Multiplies every amount by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        ExposureMatrix {
            n: self.n,
            entries: self.entries.iter().map(|e| Exposure { amount: e.amount * factor, ..*e }).collect(),
        }
    }

    /// Writes the `lender_id,borrower_id,amount` triplet CSV.
    pub fn write_csv<W: Write>(&self, writer: W, snapshot: &MarketSnapshot) -> Result<()> {
        if snapshot.len() != self.n {
            return Err(Error::InvalidInput("exposure matrix and snapshot disagree on bank count".into()));
        }
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["lender_id", "borrower_id", "amount"])?;
        let banks = snapshot.banks();
        for e in &self.entries {
            wtr.write_record([
                banks[e.lender].bank_id.as_str(),
                banks[e.borrower].bank_id.as_str(),
                &e.amount.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, snapshot: &MarketSnapshot) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file, snapshot)
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    lender: u32,
    borrower: u32,
    probability: f64,
    weight: f64,
}

/// Pre-computed link probabilities and weights for one calibrated market.
#[derive(Debug, Clone)]
pub struct NetworkSampler {
    n: usize,
    params: ReconstructionParams,
    candidates: Vec<Candidate>,
}

impl NetworkSampler {
    pub fn new(snapshot: &MarketSnapshot, params: ReconstructionParams) -> Result<Self> {
        if !(params.z > 0.0 && params.z.is_finite()) {
            return Err(Error::InvalidInput(format!("z must be positive, got {}", params.z)));
        }
        let assets = snapshot.assets();
        let liabilities = snapshot.liabilities();
        let volume = snapshot.total_volume();
        let inv_z = 1.0 / params.z;
        let mut candidates = Vec::new();
        for (i, &a) in assets.iter().enumerate() {
            for (j, &l) in liabilities.iter().enumerate() {
                if i == j {
                    continue;
                }
                let probability = link_probability(a, l, params.z);
                if probability > 0.0 {
                    candidates.push(Candidate {
                        lender: i as u32,
                        borrower: j as u32,
                        probability,
                        weight: (inv_z + a * l) / volume,
                    });
                }
            }
        }
        Ok(NetworkSampler { n: snapshot.len(), params, candidates })
    }

    pub fn params(&self) -> &ReconstructionParams {
        &self.params
    }

    /// Probability and weight of the ordered pair, zero if impossible.
    pub fn pair(&self, lender: usize, borrower: usize) -> (f64, f64) {
        self.candidates
            .binary_search_by_key(&(lender as u32, borrower as u32), |c| (c.lender, c.borrower))
            .map_or((0.0, 0.0), |k| (self.candidates[k].probability, self.candidates[k].weight))
    }

    pub fn expected_density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let links: f64 = self.candidates.iter().map(|c| c.probability).sum();
        links / (self.n * (self.n - 1)) as f64
    }

    pub fn sample(&self, index: u64) -> ExposureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.master_seed);
        rng.set_stream(index);
        let entries = self
            .candidates
            .iter()
            .filter(|c| rng.random::<f64>() < c.probability)
            .map(|c| Exposure { lender: c.lender as usize, borrower: c.borrower as usize, amount: c.weight })
            .collect();
        ExposureMatrix { n: self.n, entries }
    }

    /// The ensemble in index order.
    pub fn iter(&self) -> impl Iterator<Item = ExposureMatrix> + '_ {
        (0..self.params.ensemble_size as u64).map(move |k| self.sample(k))
    }

    /// The whole ensemble, sampled in parallel on the current rayon pool.
    pub fn par_ensemble(&self) -> Vec<ExposureMatrix> {
        (0..self.params.ensemble_size as u64).into_par_iter().map(|k| self.sample(k)).collect()
    }
}

pub fn sample_network(
    snapshot: &MarketSnapshot,
    params: &ReconstructionParams,
    index: u64,
) -> Result<ExposureMatrix> {
    Ok(NetworkSampler::new(snapshot, *params)?.sample(index))
}

pub fn sample_ensemble(
    snapshot: &MarketSnapshot,
    params: &ReconstructionParams,
) -> Result<impl Iterator<Item = ExposureMatrix>> {
    let sampler = NetworkSampler::new(snapshot, *params)?;
    Ok((0..params.ensemble_size as u64).map(move |k| sampler.sample(k)))
}
