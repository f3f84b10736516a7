use std::path::{Path, PathBuf};

use dsrank::market::{write_markets, EUROPEAN_AGGREGATES};
use dsrank::report;
use dsrank::sweep::{self, uniform_grid, Ensemble, Runner};
use dsrank::{
    load_market, synth_market, validate as admit, AdmissionPolicy, MarketSnapshot, NetworkSampler,
    ReconstructionParams,
};
use serde::Serialize;

use crate::config::{Kind, ScenarioConfig, SynthConfig};
use crate::manifest::{hash_outputs, sha256_file, FileHash, Manifest};
use crate::{CliError, RunArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Synth,
    Reconstruct,
    Group,
    Individual,
    Leverage,
}

impl Task {
    fn name(self) -> &'static str {
        match self {
            Task::Synth => "synth",
            Task::Reconstruct => "reconstruct",
            Task::Group => "group-shock",
            Task::Individual => "individual-shock",
            Task::Leverage => "leverage",
        }
    }

    fn accepts(self, kind: Kind) -> bool {
        matches!(
            (self, kind),
            (Task::Synth | Task::Reconstruct, _)
                | (Task::Group, Kind::Group | Kind::DeltaSweep)
                | (Task::Individual, Kind::Individual)
                | (Task::Leverage, Kind::Leverage)
        )
    }
}

fn usage(m: impl Into<String>) -> CliError {
    CliError::Usage(m.into())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    usage(format!("cannot write {}: {e}", path.display()))
}

pub fn validate(
    config: Option<PathBuf>,
    input: Option<PathBuf>,
    year: Option<i32>,
    policy: Option<AdmissionPolicy>,
) -> Result<u8, CliError> {
    let cfg = match &config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    let input = input.or(cfg.input).ok_or_else(|| usage("validate needs --input"))?;
    let year = year.or_else(|| cfg.years.first().copied()).ok_or_else(|| usage("validate needs --year"))?;
    let snapshot = load_market(&input, year)?;
    let (_, report) = admit(&snapshot, policy.unwrap_or(cfg.policy))?;
    println!("{}", report.to_json()?);
    Ok(if report.is_admissible() { 0 } else { 2 })
}

fn parse_lgd(spec: &str, cfg: &mut ScenarioConfig) -> Result<(), CliError> {
    let spec = spec.trim();
    if spec == "beta" {
        cfg.lgd_beta = Some([dsrank::contagion::EMPIRICAL_LGD_ALPHA, dsrank::contagion::EMPIRICAL_LGD_BETA]);
    } else if let Some(rest) = spec.strip_prefix("beta:") {
        let parts: Vec<f64> = rest
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| usage(format!("cannot parse --lgd `{spec}`")))?;
        let [a, b] = parts[..] else {
            return Err(usage(format!("--lgd beta needs two parameters, got `{spec}`")));
        };
        cfg.lgd_beta = Some([a, b]);
    } else {
        cfg.lambda = spec
            .parse()
            .map_err(|_| usage(format!("--lgd must be a number, `beta` or `beta:<a>,<b>`, got `{spec}`")))?;
        cfg.lgd_beta = None;
    }
    Ok(())
}

fn apply_overrides(cfg: &mut ScenarioConfig, a: &RunArgs) -> Result<(), CliError> {
    if let Some(p) = &a.input {
        cfg.input = Some(p.clone());
        cfg.synth = None;
    }
    if a.synth || a.synth_shape.is_some() {
        let synth = cfg.synth.get_or_insert_with(SynthConfig::default);
        if let Some(s) = a.synth_shape {
            synth.shape = s;
        }
        if a.input.is_none() {
            cfg.input = None;
        }
    }
    if !a.years.is_empty() {
        cfg.years = a.years.clone();
    }
    if let Some(p) = a.policy {
        cfg.policy = p.into();
    }
    if let Some(d) = a.density {
        cfg.density = d;
    }
    if let Some(n) = a.ensemble_size {
        cfg.ensemble_size = n;
    }
    if let Some(l) = a.lambda {
        cfg.lambda = l;
        cfg.lgd_beta = None;
    }
    if let Some(spec) = &a.lgd {
        parse_lgd(spec, cfg)?;
    }
    if !a.rho.is_empty() {
        cfg.rho = a.rho.clone();
    }
    if !a.damping.is_empty() {
        cfg.damping = a.damping.clone();
    }
    if let Some(t) = a.stop_tol {
        cfg.stop_tol = t;
    }
    if let Some(m) = a.max_steps {
        cfg.max_steps = m;
    }
    if let Some(g) = a.gamma_cap {
        cfg.gamma_cap = g;
    }
    if let Some(v) = a.psi_min {
        cfg.psi.min = v;
    }
    if let Some(v) = a.psi_max {
        cfg.psi.max = v;
    }
    if let Some(v) = a.psi_count {
        cfg.psi.count = v;
    }
    if let Some(o) = &a.out {
        cfg.out = Some(o.clone());
    }
    Ok(())
}

fn prepare_out(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() {
        if !dir.is_dir() {
            return Err(usage(format!("output path {} is not a directory", dir.display())));
        }
        let occupied = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?.next().is_some();
        if occupied && !force {
            return Err(usage(format!(
                "output directory {} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Loads or generates the market of `year` and applies the admission policy.
fn market(cfg: &ScenarioConfig, year: i32) -> Result<MarketSnapshot, CliError> {
    let raw = match (&cfg.input, &cfg.synth) {
        (Some(path), _) => load_market(path, year)?,
        (None, Some(synth)) => synth_market(&synth.spec(year, cfg.seed())?)?,
        (None, None) => return Err(usage("no market: pass --input or --synth")),
    };
    let (snapshot, report) = admit(&raw, cfg.policy)?;
    for issue in &report.issues {
        eprintln!("warning: {year} {}: {}", issue.bank_id, issue.detail);
    }
    Ok(snapshot)
}

fn save_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    Ok(report::save_json(path, value)?)
}

pub fn run(task: Task, a: RunArgs) -> Result<u8, CliError> {
    let mut cfg = match &a.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    apply_overrides(&mut cfg, &a)?;
    let (seed, seed_source) = cfg.resolve_seed(a.seed)?;
    match cfg.kind {
        Some(kind) if !task.accepts(kind) => {
            return Err(usage(format!("config kind {kind:?} cannot run under `{}`", task.name())));
        }
        None => {
            cfg.kind = match task {
                Task::Group => Some(Kind::Group),
                Task::Individual => Some(Kind::Individual),
                Task::Leverage => Some(Kind::Leverage),
                Task::Synth | Task::Reconstruct => None,
            }
        }
        _ => {}
    }
    if cfg.years.is_empty() {
        if cfg.synth.is_some() {
            cfg.years = EUROPEAN_AGGREGATES.iter().map(|r| r.0).collect();
        } else {
            return Err(usage("no year given: pass --years"));
        }
    }
    if task == Task::Synth && cfg.synth.is_none() {
        cfg.synth = Some(SynthConfig::default());
        cfg.input = None;
    }
    cfg.check()?;
    let out = cfg.out.clone().ok_or_else(|| usage("no output directory: pass --out"))?;
    prepare_out(&out, a.force)?;
    let runner = Runner::new(a.jobs)?;

    let markets = cfg.years.iter().map(|&y| market(&cfg, y)).collect::<Result<Vec<_>, _>>()?;

    match task {
        Task::Synth => {
            let path = out.join("markets.csv");
            let file = std::fs::File::create(&path).map_err(|e| io_err(&path, e))?;
            write_markets(std::io::BufWriter::new(file), &markets)?;
        }
        Task::Reconstruct => reconstruct(&cfg, &runner, &markets, &out)?,
        Task::Group => group(&cfg, &runner, markets, &out, a.full_trajectory)?,
        Task::Individual => individual(&cfg, &runner, markets, &out)?,
        Task::Leverage => leverage(&cfg, &runner, markets, &out)?,
    }

    let inputs = match &cfg.input {
        Some(p) => vec![FileHash { path: p.to_string_lossy().into_owned(), sha256: sha256_file(p)? }],
        None => Vec::new(),
    };
    Manifest {
        tool: "dsrank",
        version: env!("CARGO_PKG_VERSION"),
        command: task.name().to_string(),
        master_seed: seed,
        seed_source: seed_source.to_string(),
        outputs: hash_outputs(&out)?,
        config: cfg,
        inputs,
    }
    .write(&out)?;
    Ok(0)
}

fn params_for(cfg: &ScenarioConfig, snapshot: &MarketSnapshot) -> Result<ReconstructionParams, CliError> {
    Ok(ReconstructionParams::calibrate(snapshot, cfg.density, cfg.ensemble_size, cfg.seed())?)
}

#[derive(Serialize)]
struct Calibration {
    year: i32,
    density: f64,
    z: f64,
    expected_density: f64,
    mean_realized_density: f64,
    networks: usize,
}

fn reconstruct(
    cfg: &ScenarioConfig,
    runner: &Runner,
    markets: &[MarketSnapshot],
    out: &Path,
) -> Result<(), CliError> {
    let mut calibration = Vec::new();
    for snapshot in markets {
        let params = params_for(cfg, snapshot)?;
        let sampler = NetworkSampler::new(snapshot, params)?;
        let networks = runner.install(|| sampler.par_ensemble());
        let dir = out.join(format!("exposures_{}", snapshot.year()));
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        for (k, net) in networks.iter().enumerate() {
            net.save_csv(dir.join(format!("network_{k:05}.csv")), snapshot)?;
        }
        let realized: f64 =
            networks.iter().map(|n| n.realized_density()).sum::<f64>() / networks.len() as f64;
        calibration.push(Calibration {
            year: snapshot.year(),
            density: params.density,
            z: params.z,
            expected_density: sampler.expected_density(),
            mean_realized_density: realized,
            networks: networks.len(),
        });
    }
    save_json(&out.join("calibration.json"), &calibration)
}

fn ensemble(cfg: &ScenarioConfig, runner: &Runner, snapshot: MarketSnapshot) -> Result<Ensemble, CliError> {
    let params = params_for(cfg, &snapshot)?;
    Ok(Ensemble::sample(runner, snapshot, params)?)
}

#[derive(Serialize)]
struct TrajectoryDump {
    year: i32,
    rho: f64,
    damping: String,
    psi: f64,
    trajectory: serde_json::Value,
}

fn group(
    cfg: &ScenarioConfig,
    runner: &Runner,
    markets: Vec<MarketSnapshot>,
    out: &Path,
    full_trajectory: bool,
) -> Result<(), CliError> {
    let grid = uniform_grid(cfg.psi.min, cfg.psi.max, cfg.psi.count)?;
    let variants = cfg.variants()?;
    let mut results = Vec::new();
    let mut dumps = Vec::new();
    for snapshot in markets {
        let ens = ensemble(cfg, runner, snapshot)?;
        results.extend(sweep::group_sweep(runner, &ens, &grid, &variants)?);
        if full_trajectory {
            let n = ens.snapshot().len();
            for v in &variants {
                let params = sweep::member_params(v, 0);
                for &psi in &grid {
                    let traj = ens.members()[0].run(&dsrank::metrics::group_shock(n, psi)?, &params)?;
                    dumps.push(TrajectoryDump {
                        year: ens.snapshot().year(),
                        rho: v.rho,
                        damping: v.damping.label(),
                        psi,
                        trajectory: traj.to_json(true)?,
                    });
                }
            }
        }
    }
    report::save_results(&out.join("results.csv"), &results)?;
    save_json(&out.join("results.json"), &results)?;
    let delta = sweep::delta_sweep(&results);
    if cfg.kind == Some(Kind::DeltaSweep) || cfg.rho.len() > 1 {
        report::save_delta(&out.join("delta.csv"), &delta)?;
    }
    if full_trajectory {
        save_json(&out.join("trajectories_member0.json"), &dumps)?;
    }
    Ok(())
}

fn file_tag(year: i32, damping: &str, rho: f64) -> String {
    let damping: String =
        damping.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '-' }).collect();
    format!("{year}_{damping}_rho{rho}")
}

fn individual(
    cfg: &ScenarioConfig,
    runner: &Runner,
    markets: Vec<MarketSnapshot>,
    out: &Path,
) -> Result<(), CliError> {
    let variants = cfg.variants()?;
    let mut results = Vec::new();
    let mut all = Vec::new();
    for snapshot in markets {
        let ens = ensemble(cfg, runner, snapshot)?;
        for s in sweep::individual_sweep(runner, &ens, &variants)? {
            let tag = file_tag(s.year, &s.damping, s.rho);
            report::save_profiles(&out.join(format!("profiles_{tag}.csv")), &s.profiles)?;
            results.extend(s.results.iter().cloned());
            all.push(s);
        }
    }
    report::save_results(&out.join("results.csv"), &results)?;
    save_json(&out.join("profiles.json"), &all)
}

fn leverage(
    cfg: &ScenarioConfig,
    runner: &Runner,
    markets: Vec<MarketSnapshot>,
    out: &Path,
) -> Result<(), CliError> {
    let lambda = cfg.lgd().mean();
    let mut summaries = Vec::new();
    for snapshot in markets {
        let ens = ensemble(cfg, runner, snapshot)?;
        for &rho in &cfg.rho {
            summaries.push(sweep::leverage_sweep(&ens, lambda, rho));
        }
    }
    report::save_leverage(&out.join("leverage.csv"), &summaries)?;
    report::save_histograms(&out.join("leverage_histograms.csv"), &summaries)?;
    Ok(())
}

pub fn plot(
    results: Option<PathBuf>,
    profiles: Option<PathBuf>,
    out: PathBuf,
    force: bool,
) -> Result<u8, CliError> {
    if out.exists() && !force {
        return Err(usage(format!("{} exists; pass --force to overwrite", out.display())));
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    match (results, profiles) {
        (Some(r), None) => {
            let rows = report::load_results(&r)?;
            dsrank::plot::emit_heatmap(&out, &dsrank::plot::heatmaps_from_results(&rows)?)?;
        }
        (None, Some(p)) => {
            dsrank::plot::emit_scatter(&out, &report::load_profiles(&p)?)?;
        }
        _ => return Err(usage("plot needs exactly one of --results or --profiles")),
    }
    Ok(0)
}
