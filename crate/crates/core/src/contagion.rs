//! Debt-Solvency Rank distress dynamics.
//!
//! Distress `h_i(t) = 1 − E_i(t)/E_i(0)` evolves as
//!
//! ```text
//! h_i(t+1) = min{1, h_i(t) + Σ_{j∈𝒜(t)} [λ Λ_ij + ρ γ(t) Υ_ij] Δh_j(t) D(t − t_j)}
//! ```
//!
//! where `Λ_ij = A_ij / E_i` carries credit losses from borrower `j` to lender
//! `i`, `Υ_ij = A_ji / E_i` carries funding losses from lender `j` to borrower
//! `i`, `𝒜(t)` is the set of banks not yet defaulted at `t − 1`, and the
//! fire-sale factor `γ(t)` follows from the damped liquidation volume
//! `Q(t) = Σ_{j∈𝒜(t)} Σ_k A_jk Δh_j(t) D(t − t_j)` under linear price impact.
//!
//! Time starts at `t = 1` with the exogenous shock; `h(0) = 0`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketSnapshot;
use crate::reconstruction::ExposureMatrix;
use crate::scalar::Scalar;

pub const DEFAULT_STOP_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_STEPS: usize = 10_000;
pub const DEFAULT_GAMMA_CAP: f64 = 1e6;
/// Shape parameters of the empirical loss-given-default beta distribution.
pub const EMPIRICAL_LGD_ALPHA: f64 = 0.28;
pub const EMPIRICAL_LGD_BETA: f64 = 0.35;

/// Sparse per-sender adjacency: for each sender `j`, the receivers `i` and
/// the impact coefficient on them.
#[derive(Debug, Clone, PartialEq)]
struct Fanout<T> {
    offsets: Vec<usize>,
    receivers: Vec<usize>,
    coefficients: Vec<T>,
}

impl<T: Scalar> Fanout<T> {
    /// `edges` are `(sender, receiver, coefficient)`.
    fn build(n: usize, mut edges: Vec<(usize, usize, T)>) -> Self {
        edges.sort_by_key(|&(s, r, _)| (s, r));
        let mut offsets = vec![0; n + 1];
        for &(s, _, _) in &edges {
            offsets[s + 1] += 1;
        }
        for k in 0..n {
            offsets[k + 1] += offsets[k];
        }
        Fanout {
            offsets,
            receivers: edges.iter().map(|e| e.1).collect(),
            coefficients: edges.iter().map(|e| e.2).collect(),
        }
    }

    fn range(&self, sender: usize) -> std::ops::Range<usize> {
        self.offsets[sender]..self.offsets[sender + 1]
    }

    fn len(&self) -> usize {
        self.receivers.len()
    }
}

/// Credit (`Λ`) and funding (`Υ`) impact matrices of one exposure network.
#[derive(Debug, Clone, PartialEq)]
pub struct LeverageMatrices<T> {
    n: usize,
    credit: Fanout<T>,
    funding: Fanout<T>,
    lending: Vec<T>,
    leverage: Vec<T>,
    funding_leverage: Vec<T>,
}

impl<T: Scalar> LeverageMatrices<T> {
    /// Builds `Λ_ij = A_ij / E_i` and `Υ_ij = A_ji / E_i`.
    ///
    /// Banks the snapshot marks as defaulted receive no impact (their
    /// distress is already 1); any other bank must have positive equity.
    pub fn new(exposures: &ExposureMatrix, snapshot: &MarketSnapshot) -> Result<Self> {
        let n = snapshot.len();
        if exposures.n() != n {
            return Err(Error::InvalidInput(format!(
                "exposure matrix has {} banks, snapshot has {n}",
                exposures.n()
            )));
        }
        let defaulted = snapshot.defaulted();
        for (bank, &gone) in snapshot.banks().iter().zip(defaulted) {
            if !gone && bank.equity <= 0.0 {
                return Err(Error::NonPositiveEquity(bank.bank_id.clone()));
            }
        }
        let equity: Vec<f64> = snapshot.equities();

        let mut credit = Vec::with_capacity(exposures.link_count());
        let mut funding = Vec::with_capacity(exposures.link_count());
        let mut lending = vec![T::zero(); n];
        for e in exposures.entries() {
            let amount = T::of(e.amount);
            lending[e.lender] = lending[e.lender] + amount;
            // Credit: the borrower's distress hits the lender.
            if !defaulted[e.lender] {
                credit.push((e.borrower, e.lender, amount / T::of(equity[e.lender])));
            }
            // Funding: the lender's distress hits the borrower.
            if !defaulted[e.borrower] {
                funding.push((e.lender, e.borrower, amount / T::of(equity[e.borrower])));
            }
        }

        let mut leverage = vec![T::zero(); n];
        for &(_, receiver, c) in &credit {
            leverage[receiver] = leverage[receiver] + c;
        }
        let mut funding_leverage = vec![T::zero(); n];
        for &(_, receiver, c) in &funding {
            funding_leverage[receiver] = funding_leverage[receiver] + c;
        }

        Ok(LeverageMatrices {
            n,
            credit: Fanout::build(n, credit),
            funding: Fanout::build(n, funding),
            lending,
            leverage,
            funding_leverage,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Interbank leverage `Λ_i = Σ_j Λ_ij`.
    pub fn leverage(&self) -> &[T] {
        &self.leverage
    }

    /// `Υ_i = Σ_j Υ_ij`.
    pub fn funding_leverage(&self) -> &[T] {
        &self.funding_leverage
    }

    /// `Σ_k A_jk`, the interbank lending of each bank in this network.
    pub fn lending(&self) -> &[T] {
        &self.lending
    }

    pub fn credit_entry(&self, i: usize, j: usize) -> T {
        lookup(&self.credit, j, i)
    }

    pub fn funding_entry(&self, i: usize, j: usize) -> T {
        lookup(&self.funding, j, i)
    }

    /// Dense row-major `(Λ, Υ)`; intended for small markets and tests.
    pub fn to_dense(&self) -> (Vec<Vec<T>>, Vec<Vec<T>>) {
        let mut credit = vec![vec![T::zero(); self.n]; self.n];
        let mut funding = vec![vec![T::zero(); self.n]; self.n];
        for j in 0..self.n {
            for k in self.credit.range(j) {
                credit[self.credit.receivers[k]][j] = self.credit.coefficients[k];
            }
            for k in self.funding.range(j) {
                funding[self.funding.receivers[k]][j] = self.funding.coefficients[k];
            }
        }
        (credit, funding)
    }

    pub fn credit_edge_count(&self) -> usize {
        self.credit.len()
    }
}

fn lookup<T: Scalar>(fan: &Fanout<T>, sender: usize, receiver: usize) -> T {
    let r = fan.range(sender);
    fan.receivers[r.clone()].binary_search(&receiver).map_or(T::zero(), |k| fan.coefficients[r.start + k])
}

pub fn leverage_matrices<T: Scalar>(
    exposures: &ExposureMatrix,
    snapshot: &MarketSnapshot,
) -> Result<LeverageMatrices<T>> {
    LeverageMatrices::new(exposures, snapshot)
}

/// Fire-sale devaluation `γ = 1 / (C/Q − 1)` under linear price impact
/// `Δp/p = −Q/C`, capped at `cap` once the liquidation reaches the market
/// volume.
pub fn fire_sale_gamma<T: Scalar>(liquidation: T, volume: T, cap: T) -> T {
    if liquidation.is_nan() {
        return liquidation;
    }
    if liquidation <= T::zero() {
        return T::zero();
    }
    if liquidation >= volume {
        return cap;
    }
    let gamma = (volume / liquidation - T::one()).recip();
    if gamma > cap || gamma.is_nan() {
        cap
    } else {
        gamma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Damping<T> {
    /// Each bank spreads its distress only at its first-distress step (τ → 0).
    Once,
    /// `D(x) = exp(−x/τ)`.
    Exponential(T),
    /// Banks keep propagating until they default (τ → ∞).
    Persistent,
}

impl<T: Scalar> Damping<T> {
    /// `D(elapsed / τ)`.
    pub fn factor(&self, elapsed: usize) -> T {
        match *self {
            Damping::Once => {
                if elapsed == 0 {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Damping::Exponential(tau) => (-T::of(elapsed as f64) / tau).exp(),
            Damping::Persistent => T::one(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Damping::Once => "once".to_string(),
            Damping::Exponential(tau) => format!("exp:{tau}"),
            Damping::Persistent => "persistent".to_string(),
        }
    }
}

impl<T: Scalar> std::fmt::Display for Damping<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

impl<T: Scalar> std::str::FromStr for Damping<T> {
    type Err = Error;

    /// Accepts `once`, `persistent`, or `exp:<τ>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "once" => Ok(Damping::Once),
            "persistent" => Ok(Damping::Persistent),
            other => {
                let tau =
                    other.strip_prefix("exp:").and_then(|t| t.parse::<f64>().ok()).ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "damping must be `once`, `persistent` or `exp:<tau>`, got `{other}`"
                        ))
                    })?;
                if !(tau > 0.0 && tau.is_finite()) {
                    return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
                }
                Ok(Damping::Exponential(T::of(tau)))
            }
        }
    }
}

/// `D[(t − t_j)/τ]`; zero before the bank is first distressed.
pub fn damping<T: Scalar>(t: usize, first_distress: usize, mode: &Damping<T>) -> T {
    if t < first_distress {
        return T::zero();
    }
    mode.factor(t - first_distress)
}

/// Loss given default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lgd<T> {
    Constant(T),
    /// One `λ_ij ~ Beta(α, β)` per credit edge, drawn once per run.
    Beta {
        alpha: T,
        beta: T,
        seed: u64,
    },
}

impl<T: Scalar> Lgd<T> {
    pub fn empirical(seed: u64) -> Self {
        Lgd::Beta { alpha: T::of(EMPIRICAL_LGD_ALPHA), beta: T::of(EMPIRICAL_LGD_BETA), seed }
    }

    /// The constant, or the mean `α/(α+β)` of the beta law.
    pub fn mean(&self) -> T {
        match *self {
            Lgd::Constant(l) => l,
            Lgd::Beta { alpha, beta, .. } => alpha / (alpha + beta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockParams<T> {
    pub lgd: Lgd<T>,
    /// Fraction of lost funding that must be replaced by asset sales.
    pub rho: T,
    pub damping: Damping<T>,
    pub stop_tol: T,
    pub max_steps: usize,
    pub gamma_cap: T,
}

impl<T: Scalar> Default for ShockParams<T> {
    fn default() -> Self {
        ShockParams {
            lgd: Lgd::Constant(T::one()),
            rho: T::one(),
            damping: Damping::Once,
            stop_tol: T::of(DEFAULT_STOP_TOL),
            max_steps: DEFAULT_MAX_STEPS,
            gamma_cap: T::of(DEFAULT_GAMMA_CAP),
        }
    }
}

impl<T: Scalar> ShockParams<T> {
    pub fn new(lambda: T, rho: T, damping: Damping<T>) -> Self {
        ShockParams { lgd: Lgd::Constant(lambda), rho, damping, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: T| x >= T::zero() && x <= T::one();
        match self.lgd {
            Lgd::Constant(l) if !unit(l) => {
                return Err(Error::InvalidInput(format!("lambda must lie in [0, 1], got {l}")))
            }
            Lgd::Beta { alpha, beta, .. } if !(alpha > T::zero() && beta > T::zero()) => {
                return Err(Error::InvalidInput("beta LGD shapes must be positive".into()))
            }
            _ => {}
        }
        if !unit(self.rho) {
            return Err(Error::InvalidInput(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        if let Damping::Exponential(tau) = self.damping {
            if !(tau > T::zero() && tau.is_finite()) {
                return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
            }
        }
        if self.stop_tol.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::InvalidInput("stop_tol must be positive".into()));
        }
        if self.gamma_cap.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::InvalidInput("gamma_cap must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidInput("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Loss given default resolved per credit edge for one run.
#[derive(Debug, Clone, PartialEq)]
pub enum EdgeLgd<T> {
    Uniform(T),
    /// Aligned with the credit edges of one [`LeverageMatrices`].
    PerEdge(Vec<T>),
}

impl<T: Scalar> EdgeLgd<T> {
    pub fn resolve(matrices: &LeverageMatrices<T>, lgd: &Lgd<T>) -> Result<Self> {
        match *lgd {
            Lgd::Constant(l) => Ok(EdgeLgd::Uniform(l)),
            Lgd::Beta { alpha, beta, seed } => {
                let dist = Beta::new(alpha.as_f64(), beta.as_f64())
                    .map_err(|e| Error::InvalidInput(format!("beta LGD: {e}")))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let draws = (0..matrices.credit_edge_count()).map(|_| T::of(dist.sample(&mut rng))).collect();
                Ok(EdgeLgd::PerEdge(draws))
            }
        }
    }

    fn at(&self, edge: usize) -> T {
        match self {
            EdgeLgd::Uniform(l) => *l,
            EdgeLgd::PerEdge(v) => v[edge],
        }
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    AllDefaulted,
    MaxSteps,
}

/// The state one step reads: `h(t)`, `h(t−1)`, first-distress times and `t`.
#[derive(Debug, Clone, Copy)]
pub struct StepState<'a, T> {
    pub t: usize,
    pub current: &'a [T],
    pub previous: &'a [T],
    pub first_distress: &'a [Option<usize>],
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput<T> {
    /// `h(t+1)`.
    pub next: Vec<T>,
    /// `γ(t)`.
    pub gamma: T,
    /// `Q(t)`, before the `ρ` factor.
    pub liquidation: T,
}

/// Advances the dynamics from `t` to `t + 1`.
pub fn step<T: Scalar>(
    state: StepState<'_, T>,
    matrices: &LeverageMatrices<T>,
    lgd: &EdgeLgd<T>,
    params: &ShockParams<T>,
    volume: T,
) -> Result<StepOutput<T>> {
    let n = matrices.n;
    let one = T::one();
    let blow_up = || Error::NumericalBlowUp { step: state.t };

    // Damped increments of the active senders.
    let mut spread = vec![T::zero(); n];
    let mut liquidation = T::zero();
    #[allow(clippy::needless_range_loop)]
    for j in 0..n {
        if state.previous[j] >= one {
            continue;
        }
        let delta = state.current[j] - state.previous[j];
        if delta <= T::zero() {
            continue;
        }
        let Some(tj) = state.first_distress[j] else {
            return Err(Error::Consistency(format!(
                "bank {j} has a distress increment but no first-distress step"
            )));
        };
        let w = delta * damping(state.t, tj, &params.damping);
        spread[j] = w;
        liquidation = liquidation + matrices.lending[j] * w;
    }
    if !liquidation.is_finite() {
        return Err(blow_up());
    }
    let gamma = fire_sale_gamma(params.rho * liquidation, volume, params.gamma_cap);
    let funding_scale = params.rho * gamma;
    if !funding_scale.is_finite() {
        return Err(blow_up());
    }

    let mut received = vec![T::zero(); n];
    for (j, &w) in spread.iter().enumerate() {
        if w <= T::zero() {
            continue;
        }
        for k in matrices.credit.range(j) {
            let i = matrices.credit.receivers[k];
            received[i] = received[i] + lgd.at(k) * matrices.credit.coefficients[k] * w;
        }
        if funding_scale > T::zero() {
            for k in matrices.funding.range(j) {
                let i = matrices.funding.receivers[k];
                received[i] = received[i] + funding_scale * matrices.funding.coefficients[k] * w;
            }
        }
    }

    let mut next = Vec::with_capacity(n);
    for (h, r) in state.current.iter().zip(&received) {
        if !r.is_finite() {
            return Err(blow_up());
        }
        next.push((*h + *r).min(one));
    }
    Ok(StepOutput { next, gamma, liquidation })
}

/// A completed run of the dynamics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory<T> {
    /// `h(1)`.
    pub initial: Vec<T>,
    /// `h(t*)`.
    pub terminal: Vec<T>,
    /// `t_j`, the first step with `h_j > 0`.
    pub first_distress: Vec<Option<usize>>,
    /// `γ(t)` for every evaluated step `t = 1, 2, …`.
    pub gamma: Vec<T>,
    /// `Q(t)` for every evaluated step.
    pub liquidation: Vec<T>,
    pub t_star: usize,
    pub termination: Termination,
    /// `h(1) … h(t*)`, when recorded.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<Vec<T>>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn gamma_max(&self) -> T {
        self.gamma.iter().copied().fold(T::zero(), T::max)
    }

    /// Serializes without the per-step history unless `full` is set.
    pub fn to_json(&self, full: bool) -> Result<serde_json::Value>
    where
        T: Serialize,
    {
        if full || self.history.is_none() {
            return Ok(serde_json::to_value(self)?);
        }
        let mut slim = self.clone();
        slim.history = None;
        Ok(serde_json::to_value(&slim)?)
    }
}

/// A market and one exposure network, ready to run shock scenarios.
#[derive(Debug, Clone)]
pub struct Contagion<T> {
    matrices: LeverageMatrices<T>,
    volume: T,
    defaulted: Vec<bool>,
}

impl<T: Scalar> Contagion<T> {
    pub fn new(exposures: &ExposureMatrix, snapshot: &MarketSnapshot) -> Result<Self> {
        Ok(Contagion {
            matrices: LeverageMatrices::new(exposures, snapshot)?,
            volume: T::of(snapshot.total_volume()),
            defaulted: snapshot.defaulted().to_vec(),
        })
    }

    pub fn matrices(&self) -> &LeverageMatrices<T> {
        &self.matrices
    }

    pub fn n(&self) -> usize {
        self.matrices.n
    }

    /// Runs to termination, recording the full distress history.
    pub fn run(&self, initial: &[T], params: &ShockParams<T>) -> Result<Trajectory<T>> {
        self.run_with(initial, params, true)
    }

    /// Runs to termination; `record` keeps every `h(t)`.
    pub fn run_with(&self, initial: &[T], params: &ShockParams<T>, record: bool) -> Result<Trajectory<T>> {
        params.validate()?;
        let n = self.n();
        if initial.len() != n {
            return Err(Error::InvalidInput(format!(
                "initial shock has {} entries for {n} banks",
                initial.len()
            )));
        }
        if initial.iter().any(|&h| !(h >= T::zero() && h <= T::one())) {
            return Err(Error::InvalidInput("initial distress must lie in [0, 1]".into()));
        }
        let lgd = EdgeLgd::resolve(&self.matrices, &params.lgd)?;
        let one = T::one();

        let mut current: Vec<T> =
            initial.iter().zip(&self.defaulted).map(|(&h, &gone)| if gone { one } else { h }).collect();
        let mut previous = vec![T::zero(); n];
        let mut first_distress: Vec<Option<usize>> =
            current.iter().map(|&h| (h > T::zero()).then_some(1)).collect();
        let initial = current.clone();
        let mut history = record.then(|| vec![current.clone()]);
        let mut gamma = Vec::new();
        let mut liquidation = Vec::new();
        let mut t = 1;

        let max_increment = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&x, &y)| x - y).fold(T::zero(), T::max);

        let termination = if current.iter().all(|&h| h >= one) {
            Termination::AllDefaulted
        } else if max_increment(&current, &previous) < params.stop_tol {
            Termination::Converged
        } else {
            loop {
                if t >= params.max_steps {
                    break Termination::MaxSteps;
                }
                let out = step(
                    StepState { t, current: &current, previous: &previous, first_distress: &first_distress },
                    &self.matrices,
                    &lgd,
                    params,
                    self.volume,
                )?;
                gamma.push(out.gamma);
                liquidation.push(out.liquidation);

                let increment = max_increment(&out.next, &current);
                if increment <= T::zero() {
                    break Termination::Converged;
                }
                for (tj, &h) in first_distress.iter_mut().zip(&out.next) {
                    if tj.is_none() && h > T::zero() {
                        *tj = Some(t + 1);
                    }
                }
                previous = std::mem::replace(&mut current, out.next);
                t += 1;
                if let Some(hist) = history.as_mut() {
                    hist.push(current.clone());
                }
                if current.iter().all(|&h| h >= one) {
                    break Termination::AllDefaulted;
                }
                if increment < params.stop_tol {
                    break Termination::Converged;
                }
            }
        };

        Ok(Trajectory {
            initial,
            terminal: current,
            first_distress,
            gamma,
            liquidation,
            t_star: t,
            termination,
            history,
        })
    }
}

/// One-shot convenience wrapper around [`Contagion::run`].
pub fn run<T: Scalar>(
    initial: &[T],
    exposures: &ExposureMatrix,
    snapshot: &MarketSnapshot,
    params: &ShockParams<T>,
) -> Result<Trajectory<T>> {
    Contagion::new(exposures, snapshot)?.run(initial, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::BalanceSheet;

    fn two_banks() -> (MarketSnapshot, ExposureMatrix) {
        let snap = MarketSnapshot::new(
            0,
            vec![BalanceSheet::new("B1", 5.0, 4.0, 10.0), BalanceSheet::new("B2", 4.0, 5.0, 10.0)],
        )
        .unwrap();
        let m = ExposureMatrix::from_triplets(2, [(0, 1, 5.0), (1, 0, 4.0)]).unwrap();
        (snap, m)
    }

    #[test]
    fn two_bank_leverage() {
        let (snap, m) = two_banks();
        let lm: LeverageMatrices<f64> = leverage_matrices(&m, &snap).unwrap();
        let (credit, funding) = lm.to_dense();
        assert_eq!(credit, vec![vec![0.0, 0.5], vec![0.4, 0.0]]);
        assert_eq!(funding, vec![vec![0.0, 0.4], vec![0.5, 0.0]]);
        assert_eq!(lm.leverage(), &[0.5, 0.4]);
        assert_eq!(lm.funding_leverage(), &[0.4, 0.5]);
        assert_eq!(lm.credit_entry(0, 1), 0.5);
        assert_eq!(lm.funding_entry(1, 0), 0.5);
    }

    #[test]
    fn empty_network_has_zero_leverage() {
        let (snap, _) = two_banks();
        let lm: LeverageMatrices<f64> = leverage_matrices(&ExposureMatrix::empty(2), &snap).unwrap();
        assert_eq!(lm.leverage(), &[0.0, 0.0]);
        assert_eq!(lm.funding_leverage(), &[0.0, 0.0]);
    }

    #[test]
    fn non_positive_equity_is_rejected() {
        let snap = MarketSnapshot::new(
            0,
            vec![BalanceSheet::new("B1", 5.0, 4.0, 10.0), BalanceSheet::new("B2", 4.0, 5.0, -1.0)],
        )
        .unwrap();
        let m = ExposureMatrix::from_triplets(2, [(0, 1, 5.0)]).unwrap();
        assert!(matches!(
            leverage_matrices::<f64>(&m, &snap),
            Err(Error::NonPositiveEquity(id)) if id == "B2"
        ));
    }

    #[test]
    fn gamma_values() {
        assert_eq!(fire_sale_gamma(0.0, 9.0, 1e6), 0.0);
        assert_eq!(fire_sale_gamma(4.5, 9.0, 1e6), 1.0);
        assert!((fire_sale_gamma::<f64>(0.9 * 9.0, 9.0, 1e6) - 9.0).abs() < 1e-12);
        assert_eq!(fire_sale_gamma(9.0, 9.0, 1e6), 1e6);
        assert_eq!(fire_sale_gamma(20.0, 9.0, 50.0), 50.0);
        assert_eq!(fire_sale_gamma(4.0_f32, 9.0, 1e6), 0.8);
    }

    #[test]
    fn damping_modes() {
        for mode in [Damping::Once, Damping::Exponential(2.0), Damping::Persistent] {
            assert_eq!(damping(3, 3, &mode), 1.0);
            assert_eq!(damping(2, 3, &mode), 0.0);
        }
        assert!((damping::<f64>(2, 1, &Damping::Exponential(1.0)) - 0.367879441171).abs() < 1e-12);
        assert_eq!(damping(2, 1, &Damping::<f64>::Once), 0.0);
        assert_eq!(damping(500, 1, &Damping::<f64>::Persistent), 1.0);
    }

    #[test]
    fn damping_parses() {
        assert_eq!("once".parse::<Damping<f64>>().unwrap(), Damping::Once);
        assert_eq!("exp:2.5".parse::<Damping<f64>>().unwrap(), Damping::Exponential(2.5));
        assert!("exp:0".parse::<Damping<f64>>().is_err());
        assert!("sometimes".parse::<Damping<f64>>().is_err());
        assert_eq!(Damping::Exponential(2.5_f64).label(), "exp:2.5");
    }

    #[test]
    fn two_bank_step() {
        let (snap, m) = two_banks();
        let lm = LeverageMatrices::<f64>::new(&m, &snap).unwrap();
        let params = ShockParams::new(1.0, 1.0, Damping::Once);
        let out = step(
            StepState { t: 1, current: &[0.0, 1.0], previous: &[0.0, 0.0], first_distress: &[None, Some(1)] },
            &lm,
            &EdgeLgd::Uniform(1.0),
            &params,
            9.0,
        )
        .unwrap();
        assert_eq!(out.liquidation, 4.0);
        assert!((out.gamma - 0.8).abs() < 1e-15);
        assert!((out.next[0] - 0.82).abs() < 1e-15);
        assert_eq!(out.next[1], 1.0);

        let credit_only = ShockParams::new(1.0, 0.0, Damping::Once);
        let out = step(
            StepState { t: 1, current: &[0.0, 1.0], previous: &[0.0, 0.0], first_distress: &[None, Some(1)] },
            &lm,
            &EdgeLgd::Uniform(1.0),
            &credit_only,
            9.0,
        )
        .unwrap();
        assert_eq!(out.next[0], 0.5);
        assert_eq!(out.gamma, 0.0);
    }

    #[test]
    fn step_fixed_point() {
        let (snap, m) = two_banks();
        let lm = LeverageMatrices::<f64>::new(&m, &snap).unwrap();
        let out = step(
            StepState {
                t: 4,
                current: &[0.3, 0.2],
                previous: &[0.3, 0.2],
                first_distress: &[Some(1), Some(1)],
            },
            &lm,
            &EdgeLgd::Uniform(1.0),
            &ShockParams::default(),
            9.0,
        )
        .unwrap();
        assert_eq!(out.next, vec![0.3, 0.2]);
        assert_eq!(out.liquidation, 0.0);
        assert_eq!(out.gamma, 0.0);
    }

    #[test]
    fn two_bank_run() {
        let (snap, m) = two_banks();
        let traj = run(&[0.0, 1.0], &m, &snap, &ShockParams::new(1.0, 1.0, Damping::Once)).unwrap();
        assert_eq!(traj.t_star, 2);
        assert!((traj.terminal[0] - 0.82f64).abs() < 1e-15);
        assert_eq!(traj.terminal[1], 1.0);
        assert_eq!(traj.first_distress, vec![Some(2), Some(1)]);
        assert_eq!(traj.termination, Termination::Converged);
        assert_eq!(traj.history.as_ref().unwrap().len(), 2);
    }

    #[test]
    fn zero_shock_stops_immediately() {
        let (snap, m) = two_banks();
        let traj = run(&[0.0, 0.0], &m, &snap, &ShockParams::<f64>::default()).unwrap();
        assert_eq!(traj.t_star, 1);
        assert_eq!(traj.termination, Termination::Converged);
        assert!(traj.gamma.is_empty());
    }

    #[test]
    fn full_shock_is_all_defaulted() {
        let (snap, m) = two_banks();
        let traj = run(&[1.0, 1.0], &m, &snap, &ShockParams::<f64>::default()).unwrap();
        assert_eq!(traj.t_star, 1);
        assert_eq!(traj.termination, Termination::AllDefaulted);
    }

    #[test]
    fn max_steps_is_reported_not_raised() {
        let (snap, m) = two_banks();
        let mut params = ShockParams::new(1.0, 0.0, Damping::Persistent);
        params.max_steps = 2;
        let traj = run(&[0.01, 0.0], &m, &snap, &params).unwrap();
        assert_eq!(traj.termination, Termination::MaxSteps);
        assert_eq!(traj.t_star, 2);
    }

    #[test]
    fn marked_default_starts_at_one() {
        let snap = MarketSnapshot::new(
            0,
            vec![BalanceSheet::new("B1", 5.0, 4.0, 10.0), BalanceSheet::new("B2", 4.0, 5.0, -2.0)],
        )
        .unwrap();
        let (snap, _) =
            crate::market::validate(&snap, crate::market::AdmissionPolicy::MarkDefaulted).unwrap();
        let m = ExposureMatrix::from_triplets(2, [(0, 1, 5.0), (1, 0, 4.0)]).unwrap();
        let traj = run(&[0.0, 0.0], &m, &snap, &ShockParams::new(1.0, 0.0, Damping::Once)).unwrap();
        assert_eq!(traj.initial, vec![0.0, 1.0]);
        assert_eq!(traj.terminal, vec![0.5, 1.0]);
    }

    #[test]
    fn invalid_inputs() {
        let (snap, m) = two_banks();
        let c = Contagion::<f64>::new(&m, &snap).unwrap();
        let p = ShockParams::default();
        assert!(c.run(&[0.5], &p).is_err());
        assert!(c.run(&[1.5, 0.0], &p).is_err());
        let mut bad = p;
        bad.rho = 2.0;
        assert!(c.run(&[0.1, 0.0], &bad).is_err());
        bad = p;
        bad.stop_tol = 0.0;
        assert!(c.run(&[0.1, 0.0], &bad).is_err());
    }

    #[test]
    fn beta_lgd_is_seeded() {
        let (snap, m) = two_banks();
        let c = Contagion::<f64>::new(&m, &snap).unwrap();
        let mut p = ShockParams::new(1.0, 0.0, Damping::Once);
        p.lgd = Lgd::empirical(5);
        let a = c.run(&[0.0, 1.0], &p).unwrap();
        let b = c.run(&[0.0, 1.0], &p).unwrap();
        assert_eq!(a, b);
        assert!(a.terminal[0] >= 0.0 && a.terminal[0] <= 0.5);
        let mean: f64 = Lgd::<f64>::empirical(0).mean();
        assert!((mean - 0.28 / 0.63).abs() < 1e-15);
    }

    #[test]
    fn runs_in_f32() {
        let (snap, m) = two_banks();
        let traj = run(&[0.0_f32, 1.0], &m, &snap, &ShockParams::new(1.0, 1.0, Damping::Once)).unwrap();
        assert!((traj.terminal[0] - 0.82).abs() < 1e-6);
    }
}
