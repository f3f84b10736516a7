//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use dsrank::market::{synth_market, BalanceSheet, MarketSnapshot, SynthSpec, EUROPEAN_AGGREGATES};
use dsrank::metrics::{ds_rank, impact};
use dsrank::reconstruction::{ExposureMatrix, NetworkSampler, ReconstructionParams};
use dsrank::sweep::{
    delta_sweep, group_sweep, uniform_grid, Ensemble, Runner, Scenario, ScenarioResult, Stats,
};
use dsrank::{Contagion, Damping, ShockParams, Termination};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (u8, &'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

/// Random directed network with link probability `p`; every bank lends at
/// least once when `all_lend` is set. Balance sheets are the row and
/// column sums, so the aggregates match the network exactly.
fn random_instance(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: f64,
    equity: (f64, f64),
    all_lend: bool,
) -> (MarketSnapshot, ExposureMatrix) {
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            if i != j && rng.random::<f64>() < p {
                *cell = rng.random_range(0.1..10.0);
            }
        }
        if all_lend && row.iter().all(|&x| x == 0.0) {
            let j = (i + 1 + rng.random_range(0..n - 1)) % n;
            row[j] = rng.random_range(0.1..10.0);
        }
    }
    if a.iter().flatten().all(|&x| x == 0.0) {
        a[0][1] = 1.0;
    }
    let banks = (0..n)
        .map(|i| {
            let lent: f64 = a[i].iter().sum();
            let borrowed: f64 = a.iter().map(|r| r[i]).sum();
            BalanceSheet::new(format!("B{i:02}"), lent, borrowed, rng.random_range(equity.0..equity.1))
        })
        .collect();
    let snapshot = MarketSnapshot::new(2008, banks).unwrap();
    let triplets = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, a[i][j]));
    (snapshot, ExposureMatrix::from_triplets(n, triplets.collect::<Vec<_>>()).unwrap())
}

fn dense(m: &ExposureMatrix) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; m.n()]; m.n()];
    for x in m.entries() {
        a[x.lender][x.borrower] = x.amount;
    }
    a
}

/// Textbook DebtRank on a dense matrix: credit losses only, with the same
/// first-distress damping and stopping conventions as the engine.
fn reference_debtrank(
    a: &[Vec<f64>],
    equity: &[f64],
    h1: &[f64],
    lambda: f64,
    persistent: bool,
    tol: f64,
) -> Vec<Vec<f64>> {
    let n = equity.len();
    let mut history = vec![h1.to_vec()];
    if h1.iter().all(|&h| h >= 1.0) {
        return history;
    }
    let mut prev = vec![0.0; n];
    let mut first: Vec<Option<usize>> = h1.iter().map(|&h| (h > 0.0).then_some(1)).collect();
    let start_inc = h1.iter().cloned().fold(0.0, f64::max);
    if start_inc < tol {
        return history;
    }
    let mut t = 1;
    loop {
        let cur = history.last().unwrap().clone();
        let mut next = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                if prev[j] >= 1.0 {
                    continue;
                }
                let d = match first[j] {
                    Some(tj) if persistent || tj == t => 1.0,
                    _ => 0.0,
                };
                s += lambda * a[i][j] / equity[i] * (cur[j] - prev[j]) * d;
            }
            next[i] = (cur[i] + s).min(1.0);
        }
        let inc = next.iter().zip(&cur).map(|(x, y)| x - y).fold(0.0, f64::max);
        if inc <= 0.0 {
            break;
        }
        for (f, &h) in first.iter_mut().zip(&next) {
            if f.is_none() && h > 0.0 {
                *f = Some(t + 1);
            }
        }
        prev = cur;
        history.push(next);
        t += 1;
        if history.last().unwrap().iter().all(|&h| h >= 1.0) || inc < tol {
            break;
        }
    }
    history
}

/// Both sides of the accounting identity, from raw equities.
fn identity_sides(snapshot: &MarketSnapshot, h1: &[f64], ht: &[f64]) -> (f64, f64) {
    let eq: Vec<f64> = snapshot.banks().iter().map(|b| b.equity).collect();
    let e0: f64 = eq.iter().sum();
    let weighted: f64 = (0..eq.len()).map(|i| (ht[i] - h1[i]) * eq[i] / e0).sum();
    let e_at = |h: &[f64]| -> f64 { (0..eq.len()).map(|i| eq[i] * (1.0 - h[i])).sum() };
    (weighted, (e_at(h1) - e_at(ht)) / e0)
}

fn random_damping(rng: &mut ChaCha8Rng, k: usize) -> Damping {
    match k % 3 {
        0 => Damping::Once,
        1 => Damping::Exponential(rng.random_range(0.2..8.0)),
        _ => Damping::Persistent,
    }
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let n = rng.random_range(2..30);
        let snapshot = synth_market(&SynthSpec {
            n_banks: n,
            total_volume: rng.random_range(10.0..1e5),
            total_equity: rng.random_range(10.0..1e5),
            shape: rng.random_range(0.0..2.0),
            seed: rng.random(),
            year: 2008,
        })
        .map_err(e)?;
        let density = rng.random_range(0.05..0.6);
        let params = ReconstructionParams::calibrate(&snapshot, density, 1, rng.random()).map_err(e)?;
        let net = NetworkSampler::new(&snapshot, params).map_err(e)?.sample(k as u64);
        let engine: Contagion = Contagion::new(&net, &snapshot).map_err(e)?;
        let rho = [0.0, 0.5, 1.0][k % 3];
        let shock = ShockParams::new(rng.random_range(0.1..1.0), rho, random_damping(&mut rng, k / 3));
        let h1: Vec<f64> = match k % 4 {
            0 => vec![rng.random_range(0.0..1.0); n],
            1 => {
                let mut h = vec![0.0; n];
                h[rng.random_range(0..n)] = 1.0;
                h
            }
            _ => {
                (0..n).map(|_| if rng.random::<bool>() { rng.random_range(0.0..1.0) } else { 0.0 }).collect()
            }
        };
        let traj = engine.run_with(&h1, &shock, false).map_err(e)?;
        let (lhs, rhs) = identity_sides(&snapshot, &traj.initial, &traj.terminal);
        worst = worst.max((lhs - rhs).abs());
        ensure((lhs - rhs).abs() < 1e-12, || format!("run {k}: |{lhs} - {rhs}| >= 1e-12"))?;
    }
    Ok(format!("1000 runs, max gap {worst:.2e}"))
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let (snapshot, net) = {
            let p = rng.random_range(0.1..0.6);
            random_instance(&mut rng, 20, p, (5.0, 200.0), false)
        };
        let engine: Contagion = Contagion::new(&net, &snapshot).map_err(e)?;
        let c = snapshot.total_volume();
        let e0: f64 = snapshot.banks().iter().map(|b| b.equity).sum();
        for rho in [0.0, 1.0] {
            let lambda = rng.random_range(0.1..1.0);
            let reach = snapshot
                .banks()
                .iter()
                .map(|b| (lambda * b.interbank_assets + rho * b.interbank_liabilities) / b.equity)
                .fold(0.0, f64::max);
            let psi = rng.random_range(0.1..0.99) * (1.0 / (1.0 + reach)).min(0.5);
            let traj = engine
                .run_with(&[psi; 20], &ShockParams::new(lambda, rho, Damping::Once), false)
                .map_err(e)?;
            ensure(traj.terminal.iter().all(|&h| h < 1.0), || format!("instance {k}: a bank defaulted"))?;
            let gamma1 = rho * psi / (1.0 - rho * psi);
            let expected = psi * c * (lambda + rho * gamma1) / e0;
            let got = ds_rank(&traj, &snapshot).map_err(e)?;
            let rel = ((got - expected) / expected).abs();
            worst = worst.max(rel);
            ensure(rel <= 1e-9, || format!("instance {k} rho {rho}: {got} vs {expected}"))?;
        }
    }
    Ok(format!("200 runs, max relative error {worst:.2e}"))
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut runs = 0;
    for k in 0..60 {
        let n = rng.random_range(3..20);
        let (snapshot, net) = random_instance(&mut rng, n, 0.4, (1.0, 20.0), true);
        let engine: Contagion = Contagion::new(&net, &snapshot).map_err(e)?;
        let threshold =
            snapshot.banks().iter().map(|b| 1.0 / (1.0 + b.interbank_assets / b.equity)).fold(0.0, f64::max);
        for (m, rho) in [(0usize, 0.0), (1, 1.0), (2, 0.5)] {
            let mode = random_damping(&mut rng, m + k);
            let psi = threshold + (1.0 - threshold) * rng.random_range(0.05..0.9);
            let traj = engine.run_with(&vec![psi; n], &ShockParams::new(1.0, rho, mode), false).map_err(e)?;
            ensure(traj.termination == Termination::AllDefaulted, || {
                format!("instance {k}: psi {psi} did not default every bank")
            })?;
            let ds = ds_rank(&traj, &snapshot).map_err(e)?;
            worst = worst.max((ds - (1.0 - psi)).abs());
            ensure((ds - (1.0 - psi)).abs() <= 1e-12, || format!("instance {k}: DS {ds} vs {}", 1.0 - psi))?;

            let full = engine.run_with(&vec![1.0; n], &ShockParams::new(1.0, rho, mode), false).map_err(e)?;
            let ds1 = ds_rank(&full, &snapshot).map_err(e)?;
            ensure(ds1 == 0.0, || format!("instance {k}: DS at psi = 1 is {ds1}"))?;
            runs += 2;
        }
    }
    Ok(format!("{runs} runs, max |DS - (1 - psi)| {worst:.2e}, DS(1) = 0 exactly"))
}

fn criterion_4() -> Check {
    let snapshot = MarketSnapshot::new(
        2008,
        vec![BalanceSheet::new("B1", 5.0, 4.0, 10.0), BalanceSheet::new("B2", 4.0, 5.0, 10.0)],
    )
    .map_err(e)?;
    let net = ExposureMatrix::from_triplets(2, [(0, 1, 5.0), (1, 0, 4.0)]).map_err(e)?;
    let engine: Contagion = Contagion::new(&net, &snapshot).map_err(e)?;
    let mut lines = Vec::new();
    for (rho, h1, ds, i2) in [(1.0, 0.82, 0.41, 0.82), (0.0, 0.5, 0.25, 0.5)] {
        let params = ShockParams::new(1.0, rho, Damping::Once);
        let traj = engine.run(&[0.0, 1.0], &params).map_err(e)?;
        let got_ds = ds_rank(&traj, &snapshot).map_err(e)?;
        let got_i = impact("B2", &net, &snapshot, &params).map_err(e)?;
        for (what, got, want) in [("h1", traj.terminal[0], h1), ("DS", got_ds, ds), ("I2", got_i, i2)] {
            ensure((got - want).abs() <= 1e-15, || format!("rho {rho}: {what} = {got}, expected {want}"))?;
        }
        lines.push(format!("rho={rho}: h1={} DS={got_ds} I2={got_i}", traj.terminal[0]));
    }
    Ok(lines.join("; "))
}

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let (snapshot, net) = {
            let p = rng.random_range(0.2..0.7);
            random_instance(&mut rng, 10, p, (2.0, 60.0), false)
        };
        let engine: Contagion = Contagion::new(&net, &snapshot).map_err(e)?;
        let a = dense(&net);
        let equity: Vec<f64> = snapshot.banks().iter().map(|b| b.equity).collect();
        let h1: Vec<f64> = (0..10)
            .map(|_| if rng.random::<f64>() < 0.4 { rng.random_range(0.01..1.0) } else { 0.0 })
            .collect();
        let lambda = rng.random_range(0.2..1.0);
        for (mode, persistent) in [(Damping::Once, false), (Damping::Persistent, true)] {
            let params = ShockParams::new(lambda, 0.0, mode);
            let traj = engine.run(&h1, &params).map_err(e)?;
            let ours = traj.history.as_ref().ok_or("history not recorded")?;
            let reference = reference_debtrank(&a, &equity, &h1, lambda, persistent, params.stop_tol);
            ensure(ours.len() == reference.len(), || {
                format!("instance {k} {mode}: {} steps vs reference {}", ours.len(), reference.len())
            })?;
            for (x, y) in ours.iter().flatten().zip(reference.iter().flatten()) {
                worst = worst.max((x - y).abs());
            }
            ensure(worst <= 1e-12, || format!("instance {k} {mode}: deviation {worst:e}"))?;
        }
    }
    Ok(format!("200 trajectories, max deviation {worst:.2e}"))
}

fn criterion_6() -> Check {
    let snapshot = synth_market(&SynthSpec {
        n_banks: 20,
        total_volume: 5000.0,
        total_equity: 2500.0,
        shape: 1.0,
        seed: 6,
        year: 2008,
    })
    .map_err(e)?;
    let size = 1000;
    let params = ReconstructionParams::calibrate(&snapshot, 0.10, size, 66).map_err(e)?;
    let sampler = NetworkSampler::new(&snapshot, params).map_err(e)?;
    let n = snapshot.len();
    let mut sums = vec![vec![0.0; n]; n];
    let mut densities = Vec::with_capacity(size);
    for net in sampler.iter() {
        densities.push(net.realized_density());
        for x in net.entries() {
            sums[x.lender][x.borrower] += x.amount;
        }
    }
    let d = Stats::of(&densities);
    let se = d.standard_error();
    ensure((d.mean - 0.10).abs() <= 3.0 * se, || format!("mean density {} outside 0.10 ± 3·{se:e}", d.mean))?;

    let c = snapshot.total_volume();
    let (assets, liabilities) = (snapshot.assets(), snapshot.liabilities());
    let mut worst = 0.0f64;
    let mut pairs = 0;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let target = assets[i] * liabilities[j] / c;
            let (p, w) = sampler.pair(i, j);
            if p <= 0.0 {
                continue;
            }
            let pair_se = w * (p * (1.0 - p) / size as f64).sqrt();
            let mean = sums[i][j] / size as f64;
            let z = (mean - target).abs() / pair_se;
            worst = worst.max(z);
            pairs += 1;
            ensure(z <= 4.0, || format!("pair ({i}, {j}): mean {mean} vs {target}, {z:.2} SE"))?;
        }
    }
    Ok(format!("mean density {:.5} (SE {se:.1e}); {pairs} pairs, worst {worst:.2} SE", d.mean))
}

fn scaled_instance(
    snapshot: &MarketSnapshot,
    net: &ExposureMatrix,
    s: f64,
) -> (MarketSnapshot, ExposureMatrix) {
    let banks = snapshot
        .banks()
        .iter()
        .map(|b| {
            BalanceSheet::new(
                b.bank_id.clone(),
                b.interbank_assets * s,
                b.interbank_liabilities * s,
                b.equity * s,
            )
        })
        .collect();
    (MarketSnapshot::new(snapshot.year(), banks).unwrap(), net.scaled(s))
}

fn criterion_7() -> Check {
    let strategy = (
        2usize..9,
        any::<u64>(),
        0usize..3,
        0.1f64..10.0,
        prop_oneof![Just(0.0), Just(0.5), Just(1.0), 0.0f64..=1.0],
        0.0f64..=1.0,
        -30i32..30,
    );
    let mut runner =
        TestRunner::new(Config { cases: 10_000, failure_persistence: None, ..Config::default() });
    let fail = |m: String| TestCaseError::fail(m);
    let outcome = runner.run(&strategy, |(n, seed, mode, tau, rho, lambda, exp)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (snapshot, net) = {
            let p = rng.random_range(0.2..0.9);
            random_instance(&mut rng, n, p, (0.5, 40.0), false)
        };
        let damping = match mode {
            0 => Damping::Once,
            1 => Damping::Exponential(tau),
            _ => Damping::Persistent,
        };
        let h1: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < 0.5 { rng.random_range(0.0..=1.0) } else { 0.0 })
            .collect();
        let params = ShockParams::new(lambda, rho, damping);
        let traj = Contagion::new(&net, &snapshot)
            .and_then(|c| c.run(&h1, &params))
            .map_err(|x| fail(x.to_string()))?;
        let hist = traj.history.clone().unwrap();
        for h in &hist {
            if h.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(fail(format!("h out of [0, 1]: {h:?}")));
            }
        }
        for w in hist.windows(2) {
            for (i, (&before, &after)) in w[0].iter().zip(&w[1]).enumerate() {
                if after < before {
                    return Err(fail(format!("h_{i} decreased")));
                }
                if before >= 1.0 && after != 1.0 {
                    return Err(fail(format!("bank {i} left default")));
                }
            }
        }
        if mode < 2 && traj.termination == Termination::MaxSteps {
            return Err(fail(format!("{damping} hit the step limit")));
        }
        if rho == 0.0 && traj.gamma.iter().any(|&g| g != 0.0) {
            return Err(fail("gamma nonzero with rho = 0".into()));
        }
        let (s_snap, s_net) = scaled_instance(&snapshot, &net, 2f64.powi(exp));
        let scaled = Contagion::new(&s_net, &s_snap)
            .and_then(|c| c.run(&h1, &params))
            .map_err(|x| fail(x.to_string()))?;
        if scaled.history != traj.history || scaled.t_star != traj.t_star {
            return Err(fail(format!("rescaling by 2^{exp} changed the trajectory")));
        }
        Ok(())
    });
    outcome.map_err(|x| x.to_string())?;
    Ok("10000 generated cases".into())
}

/// Group sweep over every year of the published aggregates.
fn shape_sweep(runner: &Runner) -> Result<Vec<ScenarioResult>, String> {
    let grid = uniform_grid(0.0, 1.0, 101).map_err(e)?;
    let mut variants = Vec::new();
    for damping in [Damping::Once, Damping::Persistent] {
        for rho in [0.0, 0.25, 0.5, 0.75, 1.0] {
            variants.push(ShockParams::new(1.0, rho, damping));
        }
    }
    let mut out = Vec::new();
    for &(year, _, _) in EUROPEAN_AGGREGATES.iter() {
        let spec = SynthSpec::european(year, 1.0, 8000 + year as u64).ok_or("missing aggregates")?;
        let snapshot = synth_market(&spec).map_err(e)?;
        let params = ReconstructionParams::calibrate(&snapshot, 0.10, 100, 8).map_err(e)?;
        let ensemble = Ensemble::sample(runner, snapshot, params).map_err(e)?;
        out.extend(group_sweep(runner, &ensemble, &grid, &variants).map_err(e)?);
    }
    Ok(out)
}

fn curve<'a>(
    results: &'a [ScenarioResult],
    year: i32,
    damping: &str,
    rho: f64,
) -> Vec<(f64, &'a ScenarioResult)> {
    results
        .iter()
        .filter(|r| r.year == year && r.damping == damping && r.rho == rho)
        .filter_map(|r| match r.scenario {
            Scenario::Group { psi } => Some((psi, r)),
            _ => None,
        })
        .collect()
}

fn criterion_8() -> Check {
    let start = Instant::now();
    let runner = Runner::new(0).map_err(e)?;
    let results = shape_sweep(&runner)?;
    let years: Vec<i32> = EUROPEAN_AGGREGATES.iter().map(|r| r.0).collect();
    let rhos = [0.0, 0.25, 0.5, 0.75, 1.0];

    // (a) inverse U that closes onto the 1 − ψ line
    for &year in &years {
        for rho in rhos {
            let c = curve(&results, year, "once", rho);
            let ds: Vec<f64> = c.iter().map(|(_, r)| r.ds.mean).collect();
            let last = ds.len() - 1;
            ensure(ds[0] == 0.0 && ds[last] == 0.0, || format!("{year} rho {rho}: DS(0), DS(1) not zero"))?;
            let top = (0..ds.len()).fold(0, |b, k| if ds[k] > ds[b] { k } else { b });
            ensure(top > 0 && top < last, || format!("{year} rho {rho}: maximum not interior"))?;
            ensure(
                ds[..=top].windows(2).all(|w| w[1] >= w[0]) && ds[top..].windows(2).all(|w| w[1] <= w[0]),
                || format!("{year} rho {rho}: DS is not unimodal"),
            )?;
            let gap: Vec<f64> =
                c[..last].iter().map(|(psi, r)| (1.0 - psi - r.ds.mean) / (1.0 - psi)).collect();
            ensure(gap.iter().all(|&g| g >= -1e-12), || format!("{year} rho {rho}: DS above 1 - psi"))?;
            ensure(gap[top..].windows(2).all(|w| w[1] <= w[0] + 1e-12), || {
                format!("{year} rho {rho}: DS does not approach 1 - psi monotonically")
            })?;
            ensure(gap[last - 1] <= 0.05, || {
                format!("{year} rho {rho}: gap to 1 - psi at psi = 0.99 is {:.3}", gap[last - 1])
            })?;
        }
    }

    // (b) ρ = 1 dominates ρ = 0 within paired error bars
    let mut worst_b = f64::INFINITY;
    for &year in &years {
        for damping in ["once", "persistent"] {
            for ((psi, one), (_, zero)) in
                curve(&results, year, damping, 1.0).iter().zip(curve(&results, year, damping, 0.0))
            {
                let diffs: Vec<f64> = one
                    .member_ds
                    .iter()
                    .zip(&zero.member_ds)
                    .filter_map(|(a, b)| Some((*a)? - (*b)?))
                    .collect();
                let s = Stats::of(&diffs);
                let margin = s.mean + 3.0 * s.standard_error();
                worst_b = worst_b.min(s.mean);
                ensure(margin >= 0.0, || {
                    format!("{year} {damping} psi {psi}: DS1 - DS0 = {} ± {}", s.mean, s.standard_error())
                })?;
            }
        }
    }

    // (c) Δ at the loss-maximizing ψ is nondecreasing in ρ
    let delta = delta_sweep(&results);
    let mut slopes = Vec::new();
    for &year in &years {
        for damping in ["once", "persistent"] {
            let mut row: Vec<(f64, f64)> = delta
                .iter()
                .filter(|p| p.year == year && p.damping == damping)
                .map(|p| (p.rho, p.delta.mean))
                .collect();
            row.sort_by(|a, b| a.0.total_cmp(&b.0));
            ensure(row.len() == 5, || format!("{year} {damping}: {} delta points", row.len()))?;
            ensure(row.windows(2).all(|w| w[1].1 >= w[0].1), || {
                format!("{year} {damping}: delta not monotone: {row:?}")
            })?;
            slopes.push(row[4].1);
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(600), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "10 years, 101 psi, 100 networks; min mean DS1-DS0 {worst_b:.2e}; delta(rho=1) in [{:.3}, {:.3}]; {:.0}s",
        slopes.iter().cloned().fold(f64::INFINITY, f64::min),
        slopes.iter().cloned().fold(0.0, f64::max),
        elapsed.as_secs_f64()
    ))
}

fn dsrank(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dsrank")).args(args).current_dir(dir).output().map_err(e)?;
    ensure(out.status.success(), || {
        format!("dsrank {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|x| x.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn criterion_9() -> Check {
    let tmp = tempfile::tempdir().map_err(e)?;
    let dir = tmp.path();
    let runs: [(&str, &[&str]); 3] = [
        (
            "group-shock",
            &[
                "--synth",
                "--years",
                "2008,2012",
                "--ensemble-size",
                "12",
                "--psi-count",
                "21",
                "--rho",
                "0,0.5,1",
                "--damping",
                "once",
                "--damping",
                "exp:2",
                "--lgd",
                "beta",
            ],
        ),
        (
            "individual-shock",
            &[
                "--synth",
                "--years",
                "2010",
                "--ensemble-size",
                "6",
                "--rho",
                "0,1",
                "--damping",
                "persistent",
            ],
        ),
        ("leverage", &["--synth", "--years", "2004,2013", "--ensemble-size", "10", "--rho", "0.5,1"]),
    ];
    let mut compared = 0;
    for (cmd, args) in runs {
        let first = format!("{cmd}-a");
        let mut a: Vec<&str> = vec![cmd];
        a.extend_from_slice(args);
        a.extend_from_slice(&["--seed", "99", "--jobs", "1", "--out", &first]);
        dsrank(&a, dir)?;
        let manifest = format!("{first}/manifest.json");
        for (tag, jobs) in [("b", "4"), ("c", "3")] {
            let again = format!("{cmd}-{tag}");
            dsrank(&[cmd, "--config", &manifest, "--jobs", jobs, "--out", &again], dir)?;
            let (x, y) = (csv_files(&dir.join(&first)), csv_files(&dir.join(&again)));
            ensure(!x.is_empty() && x == y, || {
                format!("{cmd}: CSV outputs differ between --jobs 1 and --jobs {jobs}")
            })?;
            compared += x.len();
        }
    }
    Ok(format!("{compared} CSV files byte-identical across manifest reruns with --jobs 1/3/4"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "accounting identity", criterion_1),
        (2, "no-fail analytic oracle", criterion_2),
        (3, "full-fail plateau", criterion_3),
        (4, "two-bank hand oracle", criterion_4),
        (5, "DebtRank reduction", criterion_5),
        (6, "sampler statistics", criterion_6),
        (7, "trajectory properties", criterion_7),
        (8, "qualitative shape", criterion_8),
        (9, "determinism", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == &id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("criterion {id} FAIL  {name}: {why} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
