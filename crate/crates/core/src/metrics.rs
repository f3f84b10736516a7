//! Shock scenarios and the risk measures derived from completed runs.

use serde::{Deserialize, Serialize};

use crate::contagion::{Contagion, LeverageMatrices, ShockParams, Trajectory};
use crate::error::{Error, Result};
use crate::market::MarketSnapshot;
use crate::reconstruction::ExposureMatrix;
use crate::scalar::Scalar;

/// Bins per decade of the logarithmic leverage histograms.
pub const BINS_PER_DECADE: usize = 30;

/// DS Rank `Σ_i [h_i(t*) − h_i(1)] ν_i`.
///
/// Also evaluates the equity form `[E(1) − E(t*)] / E(0)` and fails if the
/// two disagree beyond rounding.
pub fn ds_rank<T: Scalar>(trajectory: &Trajectory<T>, snapshot: &MarketSnapshot) -> Result<T> {
    let n = snapshot.len();
    if trajectory.initial.len() != n || trajectory.terminal.len() != n {
        return Err(Error::InvalidInput("trajectory and snapshot disagree on bank count".into()));
    }
    let weighted: T = trajectory
        .terminal
        .iter()
        .zip(&trajectory.initial)
        .zip(snapshot.weights())
        .map(|((&end, &start), &nu)| (end - start) * T::of(nu))
        .sum();

    let equity_at = |h: &[T]| -> T {
        h.iter().zip(snapshot.banks()).map(|(&h, bank)| T::of(bank.equity.max(0.0)) * (T::one() - h)).sum()
    };
    let total = T::of(snapshot.total_equity());
    let equity_form = (equity_at(&trajectory.initial) - equity_at(&trajectory.terminal)) / total;

    if (weighted - equity_form).abs() > T::identity_tolerance() {
        return Err(Error::Consistency(format!(
            "DS accounting identity violated: {weighted} vs {equity_form}"
        )));
    }
    Ok(weighted)
}

/// Uniform initial distress `h_i(1) = ψ`.
pub fn group_shock<T: Scalar>(n: usize, psi: T) -> Result<Vec<T>> {
    if !(psi >= T::zero() && psi <= T::one()) {
        return Err(Error::InvalidInput(format!("psi must lie in [0, 1], got {psi}")));
    }
    Ok(vec![psi; n])
}

/// Initial default of bank `bank_id` alone.
pub fn individual_shock<T: Scalar>(snapshot: &MarketSnapshot, bank_id: &str) -> Result<Vec<T>> {
    let u = snapshot.index_of(bank_id).ok_or_else(|| Error::UnknownBank(bank_id.to_string()))?;
    Ok(unit_shock(snapshot.len(), u))
}

pub(crate) fn unit_shock<T: Scalar>(n: usize, u: usize) -> Vec<T> {
    let mut h = vec![T::zero(); n];
    h[u] = T::one();
    h
}

/// First-round group DS when nobody defaults: `ψ C [λ + ρ γ(1)] / E(0)`
/// with `γ(1) = ρψ / (1 − ρψ)`.
pub fn analytic_no_fail<T: Scalar>(psi: T, lambda: T, rho: T, snapshot: &MarketSnapshot) -> Result<T> {
    if rho * psi >= T::one() {
        return Err(Error::InvalidInput(format!("no-fail limit requires rho * psi < 1, got {}", rho * psi)));
    }
    let gamma = rho * psi / (T::one() - rho * psi);
    let volume = T::of(snapshot.total_volume());
    let equity = T::of(snapshot.total_equity());
    Ok(psi * volume * (lambda + rho * gamma) / equity)
}

/// Group DS when every bank ends in default: `1 − ψ`.
pub fn analytic_full_fail<T: Scalar>(psi: T) -> T {
    T::one() - psi
}

/// `I_u = DS(t*|u) / (1 − ν_u)`.
pub fn impact<T: Scalar>(
    bank_id: &str,
    exposures: &ExposureMatrix,
    snapshot: &MarketSnapshot,
    params: &ShockParams<T>,
) -> Result<T> {
    let u = snapshot.index_of(bank_id).ok_or_else(|| Error::UnknownBank(bank_id.to_string()))?;
    let engine = Contagion::new(exposures, snapshot)?;
    let traj = engine.run_with(&unit_shock(snapshot.len(), u), params, false)?;
    impact_from_ds(ds_rank(&traj, snapshot)?, snapshot.weights()[u])
}

pub(crate) fn impact_from_ds<T: Scalar>(ds: T, nu: f64) -> Result<T> {
    if nu >= 1.0 {
        return Err(Error::SingleBankMarket);
    }
    Ok(ds / T::of(1.0 - nu))
}

/// `V_u = ⟨h_u(t*|j)⟩_{j≠u}`.
pub fn vulnerability<T: Scalar>(
    bank_id: &str,
    exposures: &ExposureMatrix,
    snapshot: &MarketSnapshot,
    params: &ShockParams<T>,
) -> Result<T> {
    let u = snapshot.index_of(bank_id).ok_or_else(|| Error::UnknownBank(bank_id.to_string()))?;
    let n = snapshot.len();
    if n < 2 {
        return Err(Error::InvalidInput("vulnerability needs at least 2 banks".into()));
    }
    let engine = Contagion::new(exposures, snapshot)?;
    let mut total = T::zero();
    for j in (0..n).filter(|&j| j != u) {
        let traj = engine.run_with(&unit_shock(n, j), params, false)?;
        total = total + traj.terminal[u];
    }
    Ok(total / T::of((n - 1) as f64))
}

/// Per-bank outcome of the `n` individual-default runs on one network.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualOutcome<T> {
    /// `DS(t*|u)`.
    pub ds: Vec<T>,
    pub impact: Vec<T>,
    pub vulnerability: Vec<T>,
    pub gamma_max: Vec<T>,
    pub t_star: Vec<usize>,
    /// Whether the run seeded at `u` hit the step limit.
    pub hit_max_steps: Vec<bool>,
    /// Runs that hit the step limit.
    pub max_step_runs: usize,
}

/// Runs every individual default on one network and derives impact and
/// vulnerability for all banks at once.
pub fn individual_outcome<T: Scalar>(
    engine: &Contagion<T>,
    snapshot: &MarketSnapshot,
    params: &ShockParams<T>,
) -> Result<IndividualOutcome<T>> {
    let n = snapshot.len();
    if n < 2 {
        return Err(Error::InvalidInput("individual scenarios need at least 2 banks".into()));
    }
    let runs =
        (0..n).map(|u| engine.run_with(&unit_shock(n, u), params, false)).collect::<Result<Vec<_>>>()?;
    outcome_from_runs(&runs, snapshot)
}

pub(crate) fn outcome_from_runs<T: Scalar>(
    runs: &[Trajectory<T>],
    snapshot: &MarketSnapshot,
) -> Result<IndividualOutcome<T>> {
    let n = runs.len();
    let weights = snapshot.weights();
    let mut ds = Vec::with_capacity(n);
    let mut impact = Vec::with_capacity(n);
    for (u, traj) in runs.iter().enumerate() {
        let d = ds_rank(traj, snapshot)?;
        ds.push(d);
        impact.push(impact_from_ds(d, weights[u])?);
    }
    let denom = T::of((n - 1) as f64);
    let vulnerability = (0..n)
        .map(|u| {
            runs.iter().enumerate().filter(|&(j, _)| j != u).map(|(_, r)| r.terminal[u]).sum::<T>() / denom
        })
        .collect();
    Ok(IndividualOutcome {
        ds,
        impact,
        vulnerability,
        gamma_max: runs.iter().map(|r| r.gamma_max()).collect(),
        t_star: runs.iter().map(|r| r.t_star).collect(),
        hit_max_steps: runs
            .iter()
            .map(|r| r.termination == crate::contagion::Termination::MaxSteps)
            .collect(),
        max_step_runs: runs
            .iter()
            .filter(|r| r.termination == crate::contagion::Termination::MaxSteps)
            .count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankRiskProfile {
    pub bank_id: String,
    pub impact: f64,
    pub vulnerability: f64,
    pub leverage: f64,
    pub ext_leverage: f64,
    pub nu: f64,
}

/// Logarithmically binned histogram of positive values; zeros are counted
/// apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub zeros: usize,
}

impl LogHistogram {
    pub fn new(values: &[f64], bins_per_decade: usize) -> Self {
        let zeros = values.iter().filter(|&&v| v <= 0.0).count();
        let positive: Vec<f64> = values.iter().copied().filter(|&v| v > 0.0).collect();
        if positive.is_empty() || bins_per_decade == 0 {
            return LogHistogram { edges: Vec::new(), counts: Vec::new(), zeros };
        }
        let lo = positive.iter().copied().fold(f64::INFINITY, f64::min).log10().floor();
        let mut hi = positive.iter().copied().fold(f64::NEG_INFINITY, f64::max).log10().ceil();
        if hi <= lo {
            hi = lo + 1.0;
        }
        let bins = ((hi - lo) as usize) * bins_per_decade;
        let edges: Vec<f64> =
            (0..=bins).map(|k| 10f64.powf(lo + k as f64 / bins_per_decade as f64)).collect();
        let mut counts = vec![0; bins];
        for v in positive {
            let pos = ((v.log10() - lo) * bins_per_decade as f64).floor();
            let k = (pos.max(0.0) as usize).min(bins - 1);
            counts[k] += 1;
        }
        LogHistogram { edges, counts, zeros }
    }

    /// Probability density per bin (count / (total · width)).
    pub fn density(&self) -> Vec<f64> {
        let total = (self.counts.iter().sum::<usize>() + self.zeros) as f64;
        self.counts
            .iter()
            .zip(self.edges.windows(2))
            .map(|(&c, w)| if total == 0.0 { 0.0 } else { c as f64 / (total * (w[1] - w[0])) })
            .collect()
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let m = sorted.len() / 2;
    Some(if sorted.len().is_multiple_of(2) { 0.5 * (sorted[m - 1] + sorted[m]) } else { sorted[m] })
}

/// Original and extended interbank leverage per bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeverageProfile {
    /// `Λ_u`.
    pub leverage: Vec<f64>,
    /// `λ Λ_u + ρ Υ_u`, taking `γ = 1`.
    pub extended: Vec<f64>,
    pub leverage_histogram: LogHistogram,
    pub extended_histogram: LogHistogram,
    pub leverage_median: f64,
    pub extended_median: f64,
}

impl LeverageProfile {
    pub fn from_values(leverage: Vec<f64>, extended: Vec<f64>) -> Self {
        LeverageProfile {
            leverage_histogram: LogHistogram::new(&leverage, BINS_PER_DECADE),
            extended_histogram: LogHistogram::new(&extended, BINS_PER_DECADE),
            leverage_median: median(&leverage).unwrap_or(0.0),
            extended_median: median(&extended).unwrap_or(0.0),
            leverage,
            extended,
        }
    }
}

pub fn leverage_profile<T: Scalar>(matrices: &LeverageMatrices<T>, lambda: T, rho: T) -> LeverageProfile {
    let leverage: Vec<f64> = matrices.leverage().iter().map(|x| x.as_f64()).collect();
    let extended = matrices
        .leverage()
        .iter()
        .zip(matrices.funding_leverage())
        .map(|(&l, &u)| (lambda * l + rho * u).as_f64())
        .collect();
    LeverageProfile::from_values(leverage, extended)
}
