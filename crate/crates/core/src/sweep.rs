//! Scenario sweeps over exposure ensembles.
//!
//! Runs fan out over a rayon pool of a fixed size; results are collected in
//! task order and reduced sequentially, so every output is independent of
//! the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contagion::{Contagion, Lgd, ShockParams, Termination};
use crate::error::{Error, Result};
use crate::market::MarketSnapshot;
use crate::metrics::{
    ds_rank, group_shock, individual_outcome, leverage_profile, BankRiskProfile, LeverageProfile,
};
use crate::reconstruction::{ExposureMatrix, NetworkSampler, ReconstructionParams};
use crate::scalar::CompensatedSum;

/// A fixed-size worker pool.
pub struct Runner {
    pool: rayon::ThreadPool,
}

impl Runner {
    /// `jobs = 0` means the available parallelism.
    pub fn new(jobs: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
        Ok(Runner { pool })
    }

    pub fn jobs(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

/// A market together with the engines of every ensemble member.
pub struct Ensemble {
    snapshot: MarketSnapshot,
    members: Vec<Contagion<f64>>,
}

impl Ensemble {
    /// Samples and prepares `params.ensemble_size` networks.
    pub fn sample(runner: &Runner, snapshot: MarketSnapshot, params: ReconstructionParams) -> Result<Self> {
        let sampler = NetworkSampler::new(&snapshot, params)?;
        let networks = runner.install(|| sampler.par_ensemble());
        Self::from_networks(runner, snapshot, &networks)
    }

    pub fn from_networks(
        runner: &Runner,
        snapshot: MarketSnapshot,
        networks: &[ExposureMatrix],
    ) -> Result<Self> {
        let members = runner.install(|| {
            networks.par_iter().map(|m| Contagion::new(m, &snapshot)).collect::<Result<Vec<_>>>()
        })?;
        Ok(Ensemble { snapshot, members })
    }

    pub fn snapshot(&self) -> &MarketSnapshot {
        &self.snapshot
    }

    pub fn members(&self) -> &[Contagion<f64>] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Mean, sample standard deviation and count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Stats { mean: f64::NAN, std: f64::NAN, count };
        }
        let mean = values.iter().copied().collect::<CompensatedSum>().value() / count as f64;
        let std = if count < 2 {
            0.0
        } else {
            let ss = values.iter().map(|v| (v - mean) * (v - mean)).collect::<CompensatedSum>().value();
            (ss / (count - 1) as f64).sqrt()
        };
        Stats { mean, std, count }
    }

    pub fn standard_error(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.std / (self.count as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Scenario {
    Group { psi: f64 },
    Individual { bank_id: String },
}

/// Ensemble statistics for one scenario under one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub year: i32,
    pub rho: f64,
    pub lambda: f64,
    pub damping: String,
    pub ds: Stats,
    pub gamma_max: f64,
    pub t_star: f64,
    /// Runs that hit the step limit; left out of every mean.
    pub max_step_runs: usize,
    /// Mean `h_i(t*)` per bank (group scenarios only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terminal_mean: Vec<f64>,
    /// DS per ensemble member, `None` for excluded runs.
    #[serde(skip)]
    pub member_ds: Vec<Option<f64>>,
}

/// Shock parameters for one ensemble member; the beta LGD stream is
/// re-keyed by member so that every network gets its own draws.
pub fn member_params(params: &ShockParams<f64>, member: usize) -> ShockParams<f64> {
    let mut p = *params;
    if let Lgd::Beta { alpha, beta, seed } = params.lgd {
        p.lgd = Lgd::Beta { alpha, beta, seed: seed ^ (member as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) };
    }
    p
}

struct RunSummary {
    ds: f64,
    gamma_max: f64,
    t_star: usize,
    termination: Termination,
    terminal: Vec<f64>,
}

fn summarize(
    rows: &[RunSummary],
    scenario: Scenario,
    year: i32,
    params: &ShockParams<f64>,
    keep_terminal: bool,
) -> ScenarioResult {
    let kept: Vec<&RunSummary> = rows.iter().filter(|r| r.termination != Termination::MaxSteps).collect();
    let ds: Vec<f64> = kept.iter().map(|r| r.ds).collect();
    let mean_of = |f: &dyn Fn(&RunSummary) -> f64| {
        if kept.is_empty() {
            f64::NAN
        } else {
            kept.iter().map(|r| f(r)).collect::<CompensatedSum>().value() / kept.len() as f64
        }
    };
    let terminal_mean = if keep_terminal && !kept.is_empty() {
        let n = kept[0].terminal.len();
        (0..n)
            .map(|i| {
                kept.iter().map(|r| r.terminal[i]).collect::<CompensatedSum>().value() / kept.len() as f64
            })
            .collect()
    } else {
        Vec::new()
    };
    ScenarioResult {
        scenario,
        year,
        rho: params.rho,
        lambda: params.lgd.mean(),
        damping: params.damping.label(),
        ds: Stats::of(&ds),
        gamma_max: mean_of(&|r| r.gamma_max),
        t_star: mean_of(&|r| r.t_star as f64),
        max_step_runs: rows.len() - kept.len(),
        terminal_mean,
        member_ds: rows.iter().map(|r| (r.termination != Termination::MaxSteps).then_some(r.ds)).collect(),
    }
}

/// Group shocks on every `(variant, ψ, member)` combination.
///
/// Results are ordered by variant, then by ψ.
pub fn group_sweep(
    runner: &Runner,
    ensemble: &Ensemble,
    psi_grid: &[f64],
    variants: &[ShockParams<f64>],
) -> Result<Vec<ScenarioResult>> {
    for v in variants {
        v.validate()?;
    }
    let snapshot = &ensemble.snapshot;
    let n = snapshot.len();
    let members = ensemble.members.len();
    let per_variant = psi_grid.len() * members;
    let tasks = variants.len() * per_variant;

    let runs = runner.install(|| {
        (0..tasks)
            .into_par_iter()
            .map(|k| {
                let v = k / per_variant;
                let psi = psi_grid[(k % per_variant) / members];
                let m = k % members;
                let params = member_params(&variants[v], m);
                let traj = ensemble.members[m].run_with(&group_shock(n, psi)?, &params, false)?;
                Ok(RunSummary {
                    ds: ds_rank(&traj, snapshot)?,
                    gamma_max: traj.gamma_max(),
                    t_star: traj.t_star,
                    termination: traj.termination,
                    terminal: traj.terminal,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut out = Vec::with_capacity(variants.len() * psi_grid.len());
    for (v, params) in variants.iter().enumerate() {
        for (g, &psi) in psi_grid.iter().enumerate() {
            let start = v * per_variant + g * members;
            out.push(summarize(
                &runs[start..start + members],
                Scenario::Group { psi },
                snapshot.year(),
                params,
                true,
            ));
        }
    }
    Ok(out)
}

/// Individual-default results for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualSweep {
    pub year: i32,
    pub rho: f64,
    pub lambda: f64,
    pub damping: String,
    /// Ensemble-mean profiles in bank order.
    pub profiles: Vec<BankRiskProfile>,
    /// `DS(t*|u)` statistics per bank.
    pub results: Vec<ScenarioResult>,
}

/// Every single-bank default on every member; impact and vulnerability
/// are computed per network and averaged over the ensemble.
pub fn individual_sweep(
    runner: &Runner,
    ensemble: &Ensemble,
    variants: &[ShockParams<f64>],
) -> Result<Vec<IndividualSweep>> {
    for v in variants {
        v.validate()?;
    }
    let snapshot = &ensemble.snapshot;
    let members = ensemble.members.len();
    let tasks = variants.len() * members;

    let outcomes = runner.install(|| {
        (0..tasks)
            .into_par_iter()
            .map(|k| {
                let (v, m) = (k / members, k % members);
                let params = member_params(&variants[v], m);
                individual_outcome(&ensemble.members[m], snapshot, &params)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let n = snapshot.len();
    let mut out = Vec::with_capacity(variants.len());
    for (v, params) in variants.iter().enumerate() {
        let chunk = &outcomes[v * members..(v + 1) * members];
        let lambda = params.lgd.mean();
        let leverage: Vec<LeverageProfile> =
            ensemble.members.iter().map(|c| leverage_profile(c.matrices(), lambda, params.rho)).collect();
        let mean = |f: &dyn Fn(usize) -> f64| -> f64 {
            if members == 0 {
                f64::NAN
            } else {
                (0..members).map(f).collect::<CompensatedSum>().value() / members as f64
            }
        };

        let mut profiles = Vec::with_capacity(n);
        let mut results = Vec::with_capacity(n);
        for (u, bank) in snapshot.banks().iter().enumerate() {
            profiles.push(BankRiskProfile {
                bank_id: bank.bank_id.clone(),
                impact: mean(&|m| chunk[m].impact[u]),
                vulnerability: mean(&|m| chunk[m].vulnerability[u]),
                leverage: mean(&|m| leverage[m].leverage[u]),
                ext_leverage: mean(&|m| leverage[m].extended[u]),
                nu: snapshot.weights()[u],
            });
            let rows: Vec<RunSummary> = chunk
                .iter()
                .map(|o| RunSummary {
                    ds: o.ds[u],
                    gamma_max: o.gamma_max[u],
                    t_star: o.t_star[u],
                    termination: if o.hit_max_steps[u] {
                        Termination::MaxSteps
                    } else {
                        Termination::Converged
                    },
                    terminal: Vec::new(),
                })
                .collect();
            results.push(summarize(
                &rows,
                Scenario::Individual { bank_id: bank.bank_id.clone() },
                snapshot.year(),
                params,
                false,
            ));
        }
        out.push(IndividualSweep {
            year: snapshot.year(),
            rho: params.rho,
            lambda,
            damping: params.damping.label(),
            profiles,
            results,
        });
    }
    Ok(out)
}

/// Extra DS from liquidity shocks at the loss-maximizing initial shock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaPoint {
    pub year: i32,
    pub damping: String,
    pub rho: f64,
    /// Grid point maximizing the ensemble-mean `DS^[ρ]`.
    pub psi_star: f64,
    pub ds_rho: f64,
    pub ds_zero: f64,
    /// Paired per-member differences `DS^[ρ] − DS^[0]` at `psi_star`.
    pub delta: Stats,
}

/// `Δ^[ρ]DS = DS^[ρ] − DS^[0]` for every `(year, damping, ρ)` present in
/// `results` alongside a `ρ = 0` counterpart on the same ψ grid.
pub fn delta_sweep(results: &[ScenarioResult]) -> Vec<DeltaPoint> {
    let group: Vec<(&ScenarioResult, f64)> = results
        .iter()
        .filter_map(|r| match r.scenario {
            Scenario::Group { psi } => Some((r, psi)),
            _ => None,
        })
        .collect();

    let mut keys: Vec<(i32, String, f64)> = Vec::new();
    for (r, _) in &group {
        let key = (r.year, r.damping.clone(), r.rho);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }

    let mut out = Vec::new();
    for (year, damping, rho) in keys {
        let curve: Vec<&(&ScenarioResult, f64)> =
            group.iter().filter(|(r, _)| r.year == year && r.damping == damping && r.rho == rho).collect();
        let Some(best) = curve.iter().fold(None::<&&(&ScenarioResult, f64)>, |acc, c| match acc {
            Some(a) if a.0.ds.mean >= c.0.ds.mean || c.0.ds.mean.is_nan() => Some(a),
            _ => Some(c),
        }) else {
            continue;
        };
        let (top, psi_star) = (best.0, best.1);
        let Some(zero) = group
            .iter()
            .find(|(r, psi)| r.year == year && r.damping == damping && r.rho == 0.0 && *psi == psi_star)
            .map(|(r, _)| *r)
        else {
            continue;
        };
        let diffs: Vec<f64> =
            top.member_ds.iter().zip(&zero.member_ds).filter_map(|(a, b)| Some((*a)? - (*b)?)).collect();
        out.push(DeltaPoint {
            year,
            damping,
            rho,
            psi_star,
            ds_rho: top.ds.mean,
            ds_zero: zero.ds.mean,
            delta: Stats::of(&diffs),
        });
    }
    out
}

/// Ensemble-mean original and extended leverage per bank, plus the pooled
/// distributions over all members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeverageSummary {
    pub year: i32,
    pub lambda: f64,
    pub rho: f64,
    pub bank_ids: Vec<String>,
    pub mean_leverage: Vec<f64>,
    pub mean_extended: Vec<f64>,
    pub pooled: LeverageProfile,
}

pub fn leverage_sweep(ensemble: &Ensemble, lambda: f64, rho: f64) -> LeverageSummary {
    let snapshot = &ensemble.snapshot;
    let n = snapshot.len();
    let profiles: Vec<LeverageProfile> =
        ensemble.members.iter().map(|c| leverage_profile(c.matrices(), lambda, rho)).collect();
    let members = profiles.len().max(1) as f64;
    let mean_at = |pick: &dyn Fn(&LeverageProfile) -> &Vec<f64>, i: usize| {
        profiles.iter().map(|p| pick(p)[i]).collect::<CompensatedSum>().value() / members
    };
    let mean_leverage = (0..n).map(|i| mean_at(&|p| &p.leverage, i)).collect();
    let mean_extended = (0..n).map(|i| mean_at(&|p| &p.extended, i)).collect();
    let pooled = LeverageProfile::from_values(
        profiles.iter().flat_map(|p| p.leverage.iter().copied()).collect(),
        profiles.iter().flat_map(|p| p.extended.iter().copied()).collect(),
    );
    LeverageSummary {
        year: snapshot.year(),
        lambda,
        rho,
        bank_ids: snapshot.banks().iter().map(|b| b.bank_id.clone()).collect(),
        mean_leverage,
        mean_extended,
        pooled,
    }
}

/// `count` evenly spaced points on `[min, max]`, endpoints included.
pub fn uniform_grid(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite() && min <= max) {
        return Err(Error::InvalidInput(format!("invalid grid bounds [{min}, {max}]")));
    }
    Ok(match count {
        0 => Vec::new(),
        1 => vec![min],
        _ => (0..count)
            .map(|k| if k == count - 1 { max } else { min + (max - min) * k as f64 / (count - 1) as f64 })
            .collect(),
    })
}
