//! Balance-sheet ingestion, validation and synthetic market generation.
//!
//! All money amounts are in million USD and stored as `f64`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact header of the balance-sheet CSV format.
pub const CSV_HEADER: [&str; 8] = [
    "bank_id",
    "name",
    "year",
    "interbank_assets",
    "interbank_liabilities",
    "equity",
    "external_assets",
    "external_liabilities",
];

/// Relative tolerance for the balance-sheet identity `E = (Ã + A) − (L̃ + L)`.
pub const IDENTITY_TOLERANCE: f64 = 1e-6;

/// Aggregate total equity and interbank volume of the 183-bank European
/// panel, 2004-2013, in million USD: `(year, total_equity, total_volume)`.
pub const EUROPEAN_AGGREGATES: [(i32, f64, f64); 10] = [
    (2004, 496_976.0, 1_424_469.0),
    (2005, 900_950.0, 2_453_230.0),
    (2006, 1_207_734.0, 3_063_762.0),
    (2007, 1_542_098.0, 3_874_003.0),
    (2008, 1_291_499.0, 3_040_012.0),
    (2009, 1_680_088.0, 2_728_253.0),
    (2010, 1_708_205.0, 2_371_510.0),
    (2011, 1_629_743.0, 2_286_400.0),
    (2012, 1_699_175.0, 2_137_298.0),
    (2013, 1_778_428.0, 2_008_040.0),
];

/// Number of banks in the European panel.
pub const EUROPEAN_PANEL_SIZE: usize = 183;

/// `(total_volume, total_equity)` for a panel year, if published.
pub fn european_targets(year: i32) -> Option<(f64, f64)> {
    EUROPEAN_AGGREGATES.iter().find(|(y, _, _)| *y == year).map(|&(_, equity, volume)| (volume, equity))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceSheet {
    pub bank_id: String,
    pub name: String,
    pub interbank_assets: f64,
    pub interbank_liabilities: f64,
    pub equity: f64,
    pub external_assets: Option<f64>,
    pub external_liabilities: Option<f64>,
}

impl BalanceSheet {
    pub fn new(
        bank_id: impl Into<String>,
        interbank_assets: f64,
        interbank_liabilities: f64,
        equity: f64,
    ) -> Self {
        let bank_id = bank_id.into();
        BalanceSheet {
            name: bank_id.clone(),
            bank_id,
            interbank_assets,
            interbank_liabilities,
            equity,
            external_assets: None,
            external_liabilities: None,
        }
    }

    pub fn with_external(mut self, assets: f64, liabilities: f64) -> Self {
        self.external_assets = Some(assets);
        self.external_liabilities = Some(liabilities);
        self
    }

    /// `|E − [(Ã + A) − (L̃ + L)]|` relative to the balance-sheet scale, when
    /// external positions are known.
    pub fn identity_gap(&self) -> Option<f64> {
        let (ext_a, ext_l) = (self.external_assets?, self.external_liabilities?);
        let implied = (ext_a + self.interbank_assets) - (ext_l + self.interbank_liabilities);
        let scale = self.equity.abs().max(implied.abs()).max(f64::MIN_POSITIVE);
        Some((self.equity - implied).abs() / scale)
    }

    pub fn is_isolated(&self) -> bool {
        self.interbank_assets == 0.0 && self.interbank_liabilities == 0.0
    }
}

/// All banks of one year together with the market aggregates.
///
/// Banks with non-positive equity carry zero equity weight: `E0` sums the
/// positive equities and `ν_i = max(E_i, 0) / E0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketSnapshot {
    year: i32,
    banks: Vec<BalanceSheet>,
    defaulted: Vec<bool>,
    total_volume: f64,
    total_equity: f64,
    weights: Vec<f64>,
}

impl MarketSnapshot {
    pub fn new(year: i32, banks: Vec<BalanceSheet>) -> Result<Self> {
        let defaulted = vec![false; banks.len()];
        Self::with_defaults(year, banks, defaulted)
    }

    fn with_defaults(year: i32, banks: Vec<BalanceSheet>, defaulted: Vec<bool>) -> Result<Self> {
        if banks.is_empty() {
            return Err(Error::EmptyMarket("no banks".into()));
        }
        let mut seen = HashSet::with_capacity(banks.len());
        for bank in &banks {
            if !seen.insert(bank.bank_id.as_str()) {
                return Err(Error::DuplicateBank(bank.bank_id.clone()));
            }
            let finite = bank.interbank_assets.is_finite()
                && bank.interbank_liabilities.is_finite()
                && bank.equity.is_finite();
            if !finite || bank.interbank_assets < 0.0 || bank.interbank_liabilities < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "bank `{}` has negative or non-finite interbank positions",
                    bank.bank_id
                )));
            }
        }
        let total_volume: f64 = banks.iter().map(|b| b.interbank_assets).sum();
        let total_equity: f64 = banks.iter().map(|b| b.equity.max(0.0)).sum();
        if total_volume <= 0.0 {
            return Err(Error::EmptyMarket("zero interbank volume".into()));
        }
        if total_equity <= 0.0 {
            return Err(Error::EmptyMarket("no bank with positive equity".into()));
        }
        let weights = banks.iter().map(|b| b.equity.max(0.0) / total_equity).collect();
        Ok(MarketSnapshot { year, banks, defaulted, total_volume, total_equity, weights })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn banks(&self) -> &[BalanceSheet] {
        &self.banks
    }

    pub fn len(&self) -> usize {
        self.banks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.banks.is_empty()
    }

    /// Market volume `C = Σ A_i`.
    pub fn total_volume(&self) -> f64 {
        self.total_volume
    }

    /// Market equity `E0`.
    pub fn total_equity(&self) -> f64 {
        self.total_equity
    }

    /// Relative equity weights `ν_i`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Banks admitted as already defaulted (`h = 1` from the first step).
    pub fn defaulted(&self) -> &[bool] {
        &self.defaulted
    }

    pub fn index_of(&self, bank_id: &str) -> Option<usize> {
        self.banks.iter().position(|b| b.bank_id == bank_id)
    }

    /// `|Σ A_i − Σ L_i| / C`; zero for a closed market.
    pub fn aggregate_gap(&self) -> f64 {
        let liabilities: f64 = self.banks.iter().map(|b| b.interbank_liabilities).sum();
        (self.total_volume - liabilities).abs() / self.total_volume
    }

    pub fn assets(&self) -> Vec<f64> {
        self.banks.iter().map(|b| b.interbank_assets).collect()
    }

    pub fn liabilities(&self) -> Vec<f64> {
        self.banks.iter().map(|b| b.interbank_liabilities).collect()
    }

    pub fn equities(&self) -> Vec<f64> {
        self.banks.iter().map(|b| b.equity).collect()
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    bank_id: String,
    name: String,
    year: i32,
    interbank_assets: f64,
    interbank_liabilities: f64,
    equity: f64,
    external_assets: Option<f64>,
    external_liabilities: Option<f64>,
}

#[derive(Serialize)]
struct CsvRowOut<'a> {
    bank_id: &'a str,
    name: &'a str,
    year: i32,
    interbank_assets: f64,
    interbank_liabilities: f64,
    equity: f64,
    external_assets: Option<f64>,
    external_liabilities: Option<f64>,
}

/// Reads the banks of `year` from a balance-sheet CSV file.
pub fn load_market(path: impl AsRef<Path>, year: i32) -> Result<MarketSnapshot> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_market(file, year)
}

pub fn read_market<R: Read>(reader: R, year: i32) -> Result<MarketSnapshot> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::BadHeader {
            expected: CSV_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut banks = Vec::new();
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::MalformedRow { line, message: e.to_string() }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: CsvRow = record
            .deserialize(Some(&header))
            .map_err(|e| Error::MalformedRow { line, message: e.to_string() })?;
        if row.year != year {
            continue;
        }
        let bad = |what: &str| Error::MalformedRow {
            line,
            message: format!("{what} must be finite and non-negative"),
        };
        if !(row.interbank_assets.is_finite() && row.interbank_assets >= 0.0) {
            return Err(bad("interbank_assets"));
        }
        if !(row.interbank_liabilities.is_finite() && row.interbank_liabilities >= 0.0) {
            return Err(bad("interbank_liabilities"));
        }
        if !row.equity.is_finite() {
            return Err(Error::MalformedRow { line, message: "equity must be finite".into() });
        }
        if !seen.insert(row.bank_id.clone()) {
            return Err(Error::DuplicateBank(row.bank_id));
        }
        banks.push(BalanceSheet {
            bank_id: row.bank_id,
            name: row.name,
            interbank_assets: row.interbank_assets,
            interbank_liabilities: row.interbank_liabilities,
            equity: row.equity,
            external_assets: row.external_assets,
            external_liabilities: row.external_liabilities,
        });
    }
    if banks.is_empty() {
        return Err(Error::NoRowsForYear(year));
    }
    MarketSnapshot::new(year, banks)
}

pub fn save_market(path: impl AsRef<Path>, snapshot: &MarketSnapshot) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_markets(file, std::slice::from_ref(snapshot))
}

/// Writes one or more yearly snapshots into a single balance-sheet CSV.
pub fn write_markets<W: Write>(writer: W, snapshots: &[MarketSnapshot]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record(CSV_HEADER)?;
    for snapshot in snapshots {
        for bank in snapshot.banks() {
            wtr.serialize(CsvRowOut {
                bank_id: &bank.bank_id,
                name: &bank.name,
                year: snapshot.year,
                interbank_assets: bank.interbank_assets,
                interbank_liabilities: bank.interbank_liabilities,
                equity: bank.equity,
                external_assets: bank.external_assets,
                external_liabilities: bank.external_liabilities,
            })?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// What to do with banks whose equity is not positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdmissionPolicy {
    /// Keep the bank and start it in default (`h = 1`).
    #[default]
    MarkDefaulted,
    /// Remove the bank from the market.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueKind {
    NegativeEquity,
    IsolatedBank,
    IdentityViolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub bank_id: String,
    pub kind: IssueKind,
    pub detail: String,
}

impl Issue {
    /// Isolated banks are reported but are inert in the dynamics.
    pub fn is_blocking(&self) -> bool {
        self.kind != IssueKind::IsolatedBank
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
    pub aggregate_gap: f64,
    pub admitted: usize,
}

impl ValidationReport {
    /// No issue other than informational ones.
    pub fn is_admissible(&self) -> bool {
        self.issues.iter().all(|i| !i.is_blocking())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Applies the admission policy and reports every issue found.
pub fn validate(
    snapshot: &MarketSnapshot,
    policy: AdmissionPolicy,
) -> Result<(MarketSnapshot, ValidationReport)> {
    let mut issues = Vec::new();
    let mut banks = Vec::with_capacity(snapshot.len());
    let mut defaulted = Vec::with_capacity(snapshot.len());

    for (bank, &already) in snapshot.banks.iter().zip(&snapshot.defaulted) {
        if let Some(gap) = bank.identity_gap() {
            if gap > IDENTITY_TOLERANCE {
                issues.push(Issue {
                    bank_id: bank.bank_id.clone(),
                    kind: IssueKind::IdentityViolation,
                    detail: format!("balance-sheet identity off by {gap:e} (relative)"),
                });
            }
        }
        if bank.is_isolated() {
            issues.push(Issue {
                bank_id: bank.bank_id.clone(),
                kind: IssueKind::IsolatedBank,
                detail: "no interbank assets or liabilities; retained".into(),
            });
        }
        if bank.equity <= 0.0 {
            let action = match policy {
                AdmissionPolicy::MarkDefaulted => "marked as initially defaulted",
                AdmissionPolicy::Drop => "dropped",
            };
            issues.push(Issue {
                bank_id: bank.bank_id.clone(),
                kind: IssueKind::NegativeEquity,
                detail: format!("equity {} ≤ 0; {action}", bank.equity),
            });
            if policy == AdmissionPolicy::Drop {
                continue;
            }
            banks.push(bank.clone());
            defaulted.push(true);
        } else {
            banks.push(bank.clone());
            defaulted.push(already);
        }
    }

    if banks.is_empty() {
        return Err(Error::EmptyMarket("all banks excluded".into()));
    }
    let admitted = MarketSnapshot::with_defaults(snapshot.year, banks, defaulted).map_err(|e| match e {
        Error::EmptyMarket(msg) => Error::EmptyMarket(format!("after admission: {msg}")),
        other => other,
    })?;
    let report =
        ValidationReport { issues, aggregate_gap: admitted.aggregate_gap(), admitted: admitted.len() };
    Ok((admitted, report))
}

/// Parameters of the synthetic market generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_banks: usize,
    /// Target `Σ A_i = Σ L_i`.
    pub total_volume: f64,
    /// Target `Σ E_i`.
    pub total_equity: f64,
    /// Log-normal σ of the marginals; 0 gives identical banks.
    pub shape: f64,
    pub seed: u64,
    #[serde(default)]
    pub year: i32,
}

impl SynthSpec {
    /// Generator calibrated to the published aggregates of `year`.
    pub fn european(year: i32, shape: f64, seed: u64) -> Option<Self> {
        let (total_volume, total_equity) = european_targets(year)?;
        Some(SynthSpec { n_banks: EUROPEAN_PANEL_SIZE, total_volume, total_equity, shape, seed, year })
    }
}

/// Draws log-normal interbank assets, liabilities and equities, rescaled so
/// the aggregates hit their targets. Deterministic in `spec.seed`.
pub fn synth_market(spec: &SynthSpec) -> Result<MarketSnapshot> {
    if spec.n_banks < 2 {
        return Err(Error::InvalidInput("synthetic market needs at least 2 banks".into()));
    }
    if !(spec.total_volume > 0.0 && spec.total_equity > 0.0) {
        return Err(Error::InvalidInput("synthetic market targets must be positive".into()));
    }
    if !(spec.shape >= 0.0 && spec.shape.is_finite()) {
        return Err(Error::InvalidInput("shape must be finite and ≥ 0".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_banks;
    let mut draw = |count: usize| -> Vec<f64> {
        if spec.shape == 0.0 {
            return vec![1.0; count];
        }
        let dist = LogNormal::new(0.0, spec.shape).expect("validated shape");
        (0..count).map(|_| dist.sample(&mut rng)).collect()
    };
    let assets = draw(n);
    let liabilities = draw(n);
    let equities = draw(n);

    let rescale = |raw: &[f64], target: f64| -> Vec<f64> {
        let total: f64 = raw.iter().sum();
        raw.iter().map(|x| x / total * target).collect()
    };
    let assets = rescale(&assets, spec.total_volume);
    let liabilities = rescale(&liabilities, spec.total_volume);
    let equities = rescale(&equities, spec.total_equity);

    let width = n.to_string().len().max(3);
    let banks = (0..n)
        .map(|i| BalanceSheet {
            bank_id: format!("B{:0width$}", i + 1),
            name: format!("Synthetic Bank {:0width$}", i + 1),
            interbank_assets: assets[i],
            interbank_liabilities: liabilities[i],
            equity: equities[i],
            external_assets: None,
            external_liabilities: None,
        })
        .collect();
    MarketSnapshot::new(spec.year, banks)
}
