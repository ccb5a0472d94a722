//! Experiment runner: flat `key=value` configuration, deterministic result
//! tables, CSV/JSON/manifest persistence, and the eight experiment families
//! that drive the library end to end.
//!
//! Determinism contract: a run is a pure function of `(experiment id,
//! resolved parameters, seed)`.  Rows are emitted in parameter order (never
//! completion order), floats are serialized with the shortest round-trip
//! decimal form, and the CSV and JSON artifacts are byte-identical across
//! reruns; wall-clock time lives only in the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use crate::cusp::{tau_oracle, CuspFormSpec};
use crate::error::{HoroError, Result};
use crate::models::{foliated_norm, l2nu_norm, solve_flow_coeqn, u_tau};
use crate::returns::{
    active_c, count_bound_check, detection_step, find_beta_returns, separation_check,
    width_integral, Calibration,
};
use crate::sparse::{map_sum_vs_flow, sparse_average, NormalizedLift};
use crate::spectral::{Poly, PolyFactor, SobolevIndex, SpectralFunction, TwistParams};
use crate::surface::{loglaw_statistic, sample_point};
use crate::twisted::{cusp_coefficient, exponent_fit, QuadratureSpec};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Allowed keys and their defaults, per experiment family.  A key outside
/// this table is a configuration error, so typos fail loudly instead of
/// silently running with defaults.
const FAMILIES: &[(&str, &[(&str, &str)])] = &[
    ("tau", &[("n_max", "20")]),
    ("good-bound", &[("j_max", "9")]),
    (
        "utau",
        &[
            ("nu_list", "0.25,0.5,0.75"),
            ("tau_list", "1,8,64"),
            ("bumps", "20"),
            ("lambda", "1"),
        ],
    ),
    (
        "coeqn",
        &[
            ("rescale_list", "1,10,100"),
            ("lambda_m_list", "0.1,1,10"),
            ("s_list", "2,4"),
        ],
    ),
    (
        "sparse",
        &[
            ("delta", "0.05"),
            ("shah_n_list", "1000,10000,100000"),
            ("map_exp_min", "7"),
            ("map_exp_max", "13"),
            ("map_l", "1"),
            ("map_points", "5"),
        ],
    ),
    ("returns", &[("rescale", "1"), ("horizons", "10,30"), ("points", "20")]),
    ("scaling", &[("rescale_list", "1,2,4"), ("horizons", "10,20,40")]),
    (
        "loglaw",
        &[("horizons", "1000,10000,100000"), ("points", "50"), ("step", "0.1")],
    ),
];

/// The experiment ids accepted by [`ExperimentConfig::resolve`].
pub fn experiment_ids() -> Vec<&'static str> {
    FAMILIES.iter().map(|(id, _)| *id).collect()
}

fn family_keys(id: &str) -> Result<&'static [(&'static str, &'static str)]> {
    FAMILIES
        .iter()
        .find(|(fid, _)| *fid == id)
        .map(|(_, keys)| *keys)
        .ok_or_else(|| {
            HoroError::InvalidArgument(format!(
                "unknown experiment id {id:?}; expected one of {}",
                experiment_ids().join(", ")
            ))
        })
}

/// A fully resolved run request: family id, parameter map with defaults
/// applied, and the seed.  Everything an experiment computes is a function
/// of these three values.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub id: String,
    pub params: BTreeMap<String, String>,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Validates raw parameters against the family's key table and fills in
    /// defaults.  Unknown keys are rejected with the allowed set named.
    pub fn resolve(id: &str, raw: &BTreeMap<String, String>, seed: u64) -> Result<Self> {
        let keys = family_keys(id)?;
        for key in raw.keys() {
            if !keys.iter().any(|(k, _)| k == key) {
                let allowed: Vec<&str> = keys.iter().map(|(k, _)| *k).collect();
                return Err(HoroError::InvalidArgument(format!(
                    "unknown key {key:?} for experiment {id:?}; allowed keys: {}",
                    allowed.join(", ")
                )));
            }
        }
        let mut params = BTreeMap::new();
        for (key, default) in keys {
            let value = raw.get(*key).map(String::as_str).unwrap_or(default);
            params.insert((*key).to_string(), value.to_string());
        }
        Ok(ExperimentConfig { id: id.to_string(), params, seed })
    }

    /// FNV-1a hash of the canonical serialization `(id, seed, sorted
    /// parameters)`, as 16 hex digits.  Explicitly writing a default value
    /// hashes the same as omitting it.
    pub fn hash(&self) -> String {
        let mut text = format!("{}\nseed={}\n", self.id, self.seed);
        for (k, v) in &self.params {
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        format!("{:016x}", fnv1a64(text.as_bytes()))
    }

    fn get(&self, key: &str) -> &str {
        self.params.get(key).map(String::as_str).unwrap_or_else(|| {
            panic!("key {key:?} missing after resolution; family table out of sync")
        })
    }

    fn f64(&self, key: &str) -> Result<f64> {
        parse_f64(key, self.get(key))
    }

    fn u64(&self, key: &str) -> Result<u64> {
        let raw = self.get(key);
        raw.parse::<u64>().map_err(|_| {
            HoroError::InvalidArgument(format!("key {key:?} needs a nonnegative integer, got {raw:?}"))
        })
    }

    fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.get(key);
        let mut out = Vec::new();
        for part in raw.split(',') {
            out.push(parse_f64(key, part.trim())?);
        }
        if out.is_empty() {
            return Err(HoroError::InvalidArgument(format!("key {key:?} needs a nonempty list")));
        }
        Ok(out)
    }

    fn u64_list(&self, key: &str) -> Result<Vec<u64>> {
        self.f64_list(key)?
            .into_iter()
            .map(|v| {
                if v.fract() == 0.0 && v >= 0.0 && v <= u64::MAX as f64 {
                    Ok(v as u64)
                } else {
                    Err(HoroError::InvalidArgument(format!(
                        "key {key:?} needs nonnegative integers, got {v}"
                    )))
                }
            })
            .collect()
    }
}

fn parse_f64(key: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| {
            HoroError::InvalidArgument(format!("key {key:?} needs a finite number, got {raw:?}"))
        })
}

/// Parses a flat `key=value` file: one pair per line, `#` comments and
/// blank lines ignored, duplicate keys rejected.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| {
        HoroError::InvalidArgument(format!("cannot read config {}: {e}", path.display()))
    })?;
    parse_config_text(&text)
}

/// [`parse_config_file`] on in-memory text.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            HoroError::InvalidArgument(format!(
                "config line {} is not key=value: {line:?}",
                lineno + 1
            ))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(HoroError::InvalidArgument(format!(
                "config line {} has an empty key",
                lineno + 1
            )));
        }
        if out.insert(key.clone(), value).is_some() {
            return Err(HoroError::InvalidArgument(format!(
                "config key {key:?} appears twice"
            )));
        }
    }
    Ok(out)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

// ---------------------------------------------------------------------------
// Calibration lookup
// ---------------------------------------------------------------------------

/// Resolves the calibration: the file named by `HOROLAB_CALIBRATION` when
/// set, the bundled constants otherwise.  Returns the calibration, a source
/// label, and the FNV-1a hash of its canonical serialization (so the hash
/// does not depend on incidental whitespace in an external file).
pub fn load_calibration() -> Result<(Calibration, String, String)> {
    let (calib, source) = match std::env::var("HOROLAB_CALIBRATION") {
        Ok(path) if !path.is_empty() => {
            let calib = Calibration::load(Path::new(&path))?;
            (calib, path)
        }
        _ => (Calibration::builtin(), "builtin".to_string()),
    };
    let hash = format!("{:016x}", fnv1a64(calib.to_file_string().as_bytes()));
    Ok((calib, source, hash))
}

// ---------------------------------------------------------------------------
// Result tables
// ---------------------------------------------------------------------------

/// One table cell.  Numbers render with Rust's shortest round-trip decimal
/// form ('.' decimal point, no locale), so artifacts are byte-stable.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
    Flag(bool),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => format!("{v}"),
            Cell::Text(s) => csv_quote(s),
            Cell::Flag(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => Value::from(*v),
            // Non-finite values have no JSON number form; they become null.
            Cell::Num(v) => Value::from(*v),
            Cell::Text(s) => Value::from(s.as_str()),
            Cell::Flag(b) => Value::from(*b),
        }
    }
}

fn csv_quote(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// A named-column result table; every row carries the config hash as its
/// first CSV column so no numeric output is ever untagged.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Table { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width mismatch");
        self.rows.push(row);
    }

    fn to_csv(&self, config_hash: &str) -> String {
        let mut out = String::from("config_hash");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(config_hash);
            for cell in row {
                out.push(',');
                out.push_str(&cell.csv());
            }
            out.push('\n');
        }
        out
    }

    fn json_rows(&self) -> Vec<Value> {
        self.rows
            .iter()
            .map(|row| {
                let mut obj = serde_json::Map::new();
                for (name, cell) in self.columns.iter().zip(row) {
                    obj.insert((*name).to_string(), cell.json());
                }
                Value::Object(obj)
            })
            .collect()
    }
}

/// What a family computes: the row table, a summary map (aggregates and
/// their pass verdicts), the overall verdict, and whether resource limits
/// forced some rows to be dropped (`partial`).
pub struct FamilyOutput {
    pub table: Table,
    pub summary: BTreeMap<String, Value>,
    pub pass: bool,
    pub partial: bool,
}

/// A finished run with its artifacts' shared metadata.
pub struct RunArtifacts {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub calibration_source: String,
    pub calibration_hash: String,
    pub output: FamilyOutput,
    pub wall_ms: u128,
}

// ---------------------------------------------------------------------------
// Running and persistence
// ---------------------------------------------------------------------------

/// Executes the named experiment.  `jobs` bounds the worker threads used
/// for independent rows; it never affects the output bytes.
pub fn run(config: &ExperimentConfig, jobs: usize) -> Result<RunArtifacts> {
    let (calib, calibration_source, calibration_hash) = load_calibration()?;
    let started = Instant::now();
    let output = match config.id.as_str() {
        "tau" => run_tau(config)?,
        "good-bound" => run_good_bound(config, jobs)?,
        "utau" => run_utau(config)?,
        "coeqn" => run_coeqn(config)?,
        "sparse" => run_sparse(config, jobs)?,
        "returns" => run_returns(config, jobs, &calib)?,
        "scaling" => run_scaling(config, jobs, &calib)?,
        "loglaw" => run_loglaw(config, jobs)?,
        other => {
            return Err(HoroError::InvalidArgument(format!(
                "unknown experiment id {other:?}"
            )))
        }
    };
    Ok(RunArtifacts {
        config: config.clone(),
        config_hash: config.hash(),
        calibration_source,
        calibration_hash,
        output,
        wall_ms: started.elapsed().as_millis(),
    })
}

/// Writes `<id>.csv`, `<id>.json`, and `<id>.manifest.json` under `dir`
/// (created if missing) and returns the three paths.  CSV and JSON are
/// byte-identical across reruns of the same config; the manifest carries
/// the timestamp and wall time.
pub fn write_artifacts(dir: &Path, arts: &RunArtifacts) -> Result<(PathBuf, PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let base = dir.join(&arts.config.id);

    let csv_path = base.with_extension("csv");
    fs::write(&csv_path, arts.output.table.to_csv(&arts.config_hash))?;

    let mirror = json!({
        "experiment": arts.config.id,
        "seed": arts.config.seed,
        "config": arts.config.params,
        "config_hash": arts.config_hash,
        "columns": arts.output.table.columns,
        "rows": arts.output.table.json_rows(),
        "summary": arts.output.summary,
        "partial": arts.output.partial,
        "pass": arts.output.pass,
    });
    let json_path = base.with_extension("json");
    fs::write(&json_path, pretty(&mirror))?;

    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = json!({
        "experiment": arts.config.id,
        "seed": arts.config.seed,
        "config": arts.config.params,
        "config_hash": arts.config_hash,
        "calibration_source": arts.calibration_source,
        "calibration_hash": arts.calibration_hash,
        "rows": arts.output.table.rows.len(),
        "partial": arts.output.partial,
        "pass": arts.output.pass,
        "timestamp_unix": timestamp,
        "wall_ms": arts.wall_ms as u64,
    });
    let manifest_path = dir.join(format!("{}.manifest.json", arts.config.id));
    fs::write(&manifest_path, pretty(&manifest))?;

    Ok((csv_path, json_path, manifest_path))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON serialization cannot fail");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// Worker pool
// ---------------------------------------------------------------------------

/// Applies `f` to every input on up to `jobs` threads and returns results
/// in input order, so callers' row order never depends on scheduling.
pub fn parallel_map<I, O, F>(inputs: &[I], jobs: usize, f: F) -> Vec<Result<O>>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> Result<O> + Sync,
{
    let jobs = jobs.clamp(1, inputs.len().max(1));
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<O>>> = Vec::new();
    slots.resize_with(inputs.len(), || None);
    let slots = Mutex::new(slots);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= inputs.len() {
                    break;
                }
                let r = f(&inputs[i]);
                slots.lock().expect("result lock poisoned")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result lock poisoned")
        .into_iter()
        .map(|o| o.expect("every slot is filled before the scope ends"))
        .collect()
}

/// Splits task results into survivors and dropped labels: resource and
/// precision limits drop the task (partial results, flagged); any other
/// error aborts the run.
fn sift_limits<T>(
    results: Vec<Result<T>>,
    label: impl Fn(usize) -> String,
) -> Result<(Vec<(usize, T)>, Vec<String>)> {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => kept.push((i, t)),
            Err(e @ (HoroError::ResourceLimit(_) | HoroError::PrecisionLimit(_))) => {
                dropped.push(format!("{}: {e}", label(i)));
            }
            Err(e) => return Err(e),
        }
    }
    Ok((kept, dropped))
}

fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("median input must be ordered"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn num(v: f64) -> Value {
    Value::from(v)
}

// ---------------------------------------------------------------------------
// Family: tau — coefficient recovery against the exact integer oracle
// ---------------------------------------------------------------------------

fn run_tau(cfg: &ExperimentConfig) -> Result<FamilyOutput> {
    let n_max = cfg.u64("n_max")?;
    if !(1..=10_000).contains(&n_max) {
        return Err(HoroError::InvalidArgument(format!(
            "n_max must lie in 1..=10000, got {n_max}"
        )));
    }
    let form = CuspFormSpec::default_delta();
    let quad = QuadratureSpec::default_spec();
    let oracle = tau_oracle(n_max as usize)?;

    let mut table = Table::new(vec!["n", "computed", "oracle", "rel_err", "pass"]);
    let mut max_rel = 0.0f64;
    let mut all = true;
    for n in 1..=n_max {
        let computed = cusp_coefficient(n as u32, &form, &quad)?;
        let exact = oracle.coeff(n as usize)? as f64;
        let rel = (computed - exact).norm() / exact.abs();
        let pass = rel <= 1e-6;
        max_rel = max_rel.max(rel);
        all &= pass;
        table.push(vec![
            Cell::Int(n as i64),
            Cell::Num(computed.re),
            Cell::Num(exact),
            Cell::Num(rel),
            Cell::Flag(pass),
        ]);
    }

    let mut summary = BTreeMap::new();
    summary.insert("max_rel_err".into(), num(max_rel));
    summary.insert("rel_tol".into(), num(1e-6));
    summary.insert("pass".into(), Value::from(all));
    Ok(FamilyOutput { table, summary, pass: all, partial: false })
}

// ---------------------------------------------------------------------------
// Family: good-bound — coefficient-growth slope on a dyadic ladder
// ---------------------------------------------------------------------------

/// Weight-12 growth budget `k/2 - 1/6` plus the accepted slack.
const GOOD_BOUND_SLOPE: f64 = 12.0 / 2.0 - 1.0 / 6.0 + 0.05;

fn run_good_bound(cfg: &ExperimentConfig, jobs: usize) -> Result<FamilyOutput> {
    let j_max = cfg.u64("j_max")?;
    if !(4..=13).contains(&j_max) {
        return Err(HoroError::InvalidArgument(format!(
            "j_max must lie in 4..=13 (at least four dyadic samples), got {j_max}"
        )));
    }
    let form = CuspFormSpec::default_delta();
    let quad = QuadratureSpec::default_spec();
    let oracle = tau_oracle(1 << j_max)?;

    let js: Vec<u64> = (1..=j_max).collect();
    let results = parallel_map(&js, jobs, |&j| {
        let n = 1u64 << j;
        let computed = cusp_coefficient(n as u32, &form, &quad)?;
        Ok((j, n, computed))
    });

    let mut table = Table::new(vec!["j", "n", "computed_abs", "oracle_abs", "rel_err"]);
    let mut samples = Vec::new();
    for r in results {
        let (j, n, computed) = r?;
        let exact = oracle.coeff(n as usize)? as f64;
        let rel = (computed - exact).norm() / exact.abs();
        samples.push((n as f64, computed.norm()));
        table.push(vec![
            Cell::Int(j as i64),
            Cell::Int(n as i64),
            Cell::Num(computed.norm()),
            Cell::Num(exact.abs()),
            Cell::Num(rel),
        ]);
    }

    let fit = exponent_fit(&samples)?;
    let pass = fit.slope <= GOOD_BOUND_SLOPE;
    let mut summary = BTreeMap::new();
    summary.insert("slope".into(), num(fit.slope));
    summary.insert("slope_bound".into(), num(GOOD_BOUND_SLOPE));
    summary.insert("fit_residual_max".into(), num(fit.residual_max));
    summary.insert("pass".into(), Value::from(pass));
    Ok(FamilyOutput { table, summary, pass, partial: false })
}

// ---------------------------------------------------------------------------
// Family: utau — dilation-operator norm ratios on the model spaces
// ---------------------------------------------------------------------------

/// Complementary-series ratio window `[3^{-1/2}, 3^{1/2}]` with the
/// accepted numerical slack.
const UTAU_SLACK: f64 = 1e-3;
/// Principal-series isometry tolerance.
const UTAU_ISOMETRY_TOL: f64 = 1e-9;

/// One deterministic bump family inside the interval `[lambda/2,
/// 3 lambda/2]`: center, halfwidth, edge flatness, and a linear factor, all
/// drawn from the seeded stream.
fn draw_bump(rng: &mut ChaCha8Rng, lambda: f64) -> Result<(Arc<PolyFactor>, [f64; 2], f64)> {
    let center = lambda * (0.85 + 0.3 * rng.gen::<f64>());
    let halfwidth = lambda * (0.08 + 0.12 * rng.gen::<f64>());
    let a0 = 0.5 + rng.gen::<f64>();
    let a1 = rng.gen::<f64>() - 0.5;
    let theta = rng.gen::<f64>();
    let fam = PolyFactor::bump(center, halfwidth, 6, Poly::real(&[a0, a1]))?;
    let support = fam
        .support_hint()
        .expect("bump families always carry a cutoff support");
    Ok((Arc::new(fam), support, theta))
}

fn run_utau(cfg: &ExperimentConfig) -> Result<FamilyOutput> {
    let nu_list = cfg.f64_list("nu_list")?;
    let tau_list = cfg.f64_list("tau_list")?;
    let bumps = cfg.u64("bumps")?;
    let lambda = cfg.f64("lambda")?;
    if bumps == 0 {
        return Err(HoroError::InvalidArgument("bumps must be at least 1".into()));
    }
    if !(lambda > 0.0) {
        return Err(HoroError::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }

    let lo = 3.0f64.powf(-0.5) - UTAU_SLACK;
    let hi = 3.0f64.powf(0.5) + UTAU_SLACK;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7574_6175);
    let families: Vec<(Arc<PolyFactor>, [f64; 2], f64)> = (0..bumps)
        .map(|_| draw_bump(&mut rng, lambda))
        .collect::<Result<_>>()?;

    let mut table =
        Table::new(vec!["series", "bump", "nu", "tau", "ratio", "lo", "hi", "pass"]);
    let mut all = true;
    let mut comp_min = f64::INFINITY;
    let mut comp_max = f64::NEG_INFINITY;
    let mut principal_dev = 0.0f64;

    for (b, (fam, support, _)) in families.iter().enumerate() {
        for &nu in &nu_list {
            let f = SpectralFunction::complementary(nu, 1, *support, fam.clone())?;
            let base = l2nu_norm(&f)?;
            for &tau in &tau_list {
                let ratio = l2nu_norm(&u_tau(&f, tau, lambda)?)? / base;
                let pass = ratio >= lo && ratio <= hi;
                comp_min = comp_min.min(ratio);
                comp_max = comp_max.max(ratio);
                all &= pass;
                table.push(vec![
                    Cell::Text("complementary".into()),
                    Cell::Int(b as i64),
                    Cell::Num(nu),
                    Cell::Num(tau),
                    Cell::Num(ratio),
                    Cell::Num(lo),
                    Cell::Num(hi),
                    Cell::Flag(pass),
                ]);
            }
        }
    }
    for (b, (fam, support, theta)) in families.iter().enumerate() {
        let f = SpectralFunction::principal(*theta, 1, *support, fam.clone())?;
        let base = l2nu_norm(&f)?;
        for &tau in &tau_list {
            let ratio = l2nu_norm(&u_tau(&f, tau, lambda)?)? / base;
            let dev = (ratio - 1.0).abs();
            let pass = dev <= UTAU_ISOMETRY_TOL;
            principal_dev = principal_dev.max(dev);
            all &= pass;
            table.push(vec![
                Cell::Text("principal".into()),
                Cell::Int(b as i64),
                Cell::Num(*theta),
                Cell::Num(tau),
                Cell::Num(ratio),
                Cell::Num(1.0 - UTAU_ISOMETRY_TOL),
                Cell::Num(1.0 + UTAU_ISOMETRY_TOL),
                Cell::Flag(pass),
            ]);
        }
    }

    let mut summary = BTreeMap::new();
    summary.insert("complementary_min".into(), num(comp_min));
    summary.insert("complementary_max".into(), num(comp_max));
    summary.insert("principal_max_dev".into(), num(principal_dev));
    summary.insert("pass".into(), Value::from(all));
    Ok(FamilyOutput { table, summary, pass: all, partial: false })
}

// ---------------------------------------------------------------------------
// Family: coeqn — transfer-solution Sobolev ratios across the sweep
// ---------------------------------------------------------------------------

/// Accepted max/min spread of the normalized ratio over the whole sweep.
const COEQN_SPREAD: f64 = 10.0;

fn run_coeqn(cfg: &ExperimentConfig) -> Result<FamilyOutput> {
    let rescales = cfg.f64_list("rescale_list")?;
    let lambda_ms = cfg.f64_list("lambda_m_list")?;
    let ss = cfg.u64_list("s_list")?;
    for &s in &ss {
        if s % 2 != 0 || s == 0 {
            return Err(HoroError::InvalidArgument(format!(
                "s_list entries must be positive even integers, got {s}"
            )));
        }
    }

    let mut table = Table::new(vec!["rescale", "lambda_m", "s", "ratio", "pass"]);
    let mut ratios = Vec::new();
    let mut all = true;
    for &rescale in &rescales {
        for &lm in &lambda_ms {
            let twist = TwistParams::new(lm, 1, rescale)?;
            // Compact bump on [lm/2, 3lm/2], the interval mirrored across the
            // origin from the multiplier zero at -lm.  Keeping the support a
            // distance ~lm from the zero makes the transfer-solution a plain
            // well-conditioned division at every quadrature node, so all
            // eighteen cells complete and the measured ratios are exact; the
            // edge order 16 keeps derivatives trustworthy through the order-12
            // requests of the s = 4 norms.
            let fam = PolyFactor::bump(lm, lm / 2.0, 16, Poly::real(&[1.0]))?;
            let support = fam
                .support_hint()
                .expect("compact bumps always carry a support hint");
            let f = SpectralFunction::principal(0.0, 1, support, Arc::new(fam))?;
            let g = solve_flow_coeqn(&f, &twist)?;
            for &s in &ss {
                let s = s as u32;
                let numer = foliated_norm(&g, SobolevIndex::new(0.0, s)?, rescale)?
                    * rescale.powf(1.0 / 3.0)
                    * lm.abs();
                let denom = (1.0 + lm.abs().powi(-(s as i32)))
                    * foliated_norm(&f, SobolevIndex::new(s as f64, s + 2)?, rescale)?;
                let ratio = numer / denom;
                let pass = ratio.is_finite() && ratio > 0.0;
                all &= pass;
                if pass {
                    ratios.push(ratio);
                }
                table.push(vec![
                    Cell::Num(rescale),
                    Cell::Num(lm),
                    Cell::Int(s as i64),
                    Cell::Num(ratio),
                    Cell::Flag(pass),
                ]);
            }
        }
    }

    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = max / min;
    let pass = all && spread <= COEQN_SPREAD;
    let mut summary = BTreeMap::new();
    summary.insert("ratio_min".into(), num(min));
    summary.insert("ratio_max".into(), num(max));
    summary.insert("spread".into(), num(spread));
    summary.insert("spread_bound".into(), num(COEQN_SPREAD));
    summary.insert("pass".into(), Value::from(pass));
    Ok(FamilyOutput { table, summary, pass, partial: false })
}

// ---------------------------------------------------------------------------
// Family: sparse — sparse-time decay and map-vs-flow exponent
// ---------------------------------------------------------------------------

/// Map-sum growth budget `5/6` plus the accepted slack.
const MAP_SLOPE_BOUND: f64 = 5.0 / 6.0 + 0.1;
/// Absolute floor of the sparse decay threshold for the normalized
/// observable (sup 1 on the sampling batch).
const SPARSE_DECAY_FLOOR: f64 = 0.05;

enum SparseTask {
    Shah { n: u64 },
    Map { exp: u32, point: u64 },
}

fn run_sparse(cfg: &ExperimentConfig, jobs: usize) -> Result<FamilyOutput> {
    let delta = cfg.f64("delta")?;
    let shah_ns = cfg.u64_list("shah_n_list")?;
    let exp_min = cfg.u64("map_exp_min")?;
    let exp_max = cfg.u64("map_exp_max")?;
    let map_l = cfg.f64("map_l")?;
    let map_points = cfg.u64("map_points")?;
    if shah_ns.len() < 2 {
        return Err(HoroError::InvalidArgument(
            "shah_n_list needs at least two sizes for the decay comparison".into(),
        ));
    }
    if exp_min + 3 > exp_max || exp_max >= 40 {
        return Err(HoroError::InvalidArgument(format!(
            "need map_exp_min + 3 <= map_exp_max < 40 for the slope fit, got {exp_min}..{exp_max}"
        )));
    }
    if map_points == 0 {
        return Err(HoroError::InvalidArgument("map_points must be at least 1".into()));
    }

    let obs = NormalizedLift::new()?;
    let quad = QuadratureSpec::new(8, 1e-6, 12)?;
    let x0 = sample_point(cfg.seed);

    let mut tasks = Vec::new();
    for &n in &shah_ns {
        tasks.push(SparseTask::Shah { n });
    }
    for exp in exp_min..=exp_max {
        for point in 0..map_points {
            tasks.push(SparseTask::Map { exp: exp as u32, point });
        }
    }
    let results = parallel_map(&tasks, jobs, |task| match task {
        SparseTask::Shah { n } => {
            let rec = sparse_average(&obs, obs.id(), &x0, delta, *n)?;
            Ok(rec.average)
        }
        SparseTask::Map { exp, point } => {
            let x = sample_point(cfg.seed.wrapping_add(*point));
            map_sum_vs_flow(&obs, &x, map_l, 1u64 << exp, &quad)
        }
    });
    let (kept, dropped) = sift_limits(results, |i| match &tasks[i] {
        SparseTask::Shah { n } => format!("shah n={n}"),
        SparseTask::Map { exp, point } => format!("map n=2^{exp} point={point}"),
    })?;
    let partial = !dropped.is_empty();

    let mut shah_values: BTreeMap<u64, f64> = BTreeMap::new();
    let mut map_gaps: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (i, value) in kept {
        match &tasks[i] {
            SparseTask::Shah { n } => {
                shah_values.insert(*n, value);
            }
            SparseTask::Map { exp, .. } => map_gaps.entry(*exp).or_default().push(value),
        }
    }

    let mut table = Table::new(vec!["quantity", "n", "value"]);
    for (&n, &avg) in &shah_values {
        table.push(vec![
            Cell::Text("shah-average".into()),
            Cell::Int(n as i64),
            Cell::Num(avg),
        ]);
    }
    let mut samples = Vec::new();
    for (&exp, gaps) in &map_gaps {
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        samples.push(((1u64 << exp) as f64, mean));
        table.push(vec![
            Cell::Text("map-gap".into()),
            Cell::Int(1i64 << exp),
            Cell::Num(mean),
        ]);
    }

    // Decay check between the smallest and largest requested sizes.
    let n_first = *shah_ns.iter().min().expect("nonempty list");
    let n_last = *shah_ns.iter().max().expect("nonempty list");
    let (shah_pass, first_abs, last_abs, threshold) =
        match (shah_values.get(&n_first), shah_values.get(&n_last)) {
            (Some(&a), Some(&b)) => {
                let threshold = (0.5 * a.abs()).max(SPARSE_DECAY_FLOOR);
                (b.abs() <= threshold, a.abs(), b.abs(), threshold)
            }
            _ => (false, f64::NAN, f64::NAN, f64::NAN),
        };

    let (map_pass, slope) = if samples.len() >= 4 {
        let fit = exponent_fit(&samples)?;
        (fit.slope <= MAP_SLOPE_BOUND, fit.slope)
    } else {
        (false, f64::NAN)
    };

    let pass = shah_pass && map_pass && !partial;
    let mut summary = BTreeMap::new();
    summary.insert("observable".into(), Value::from(obs.id()));
    summary.insert("shah_first_abs".into(), num(first_abs));
    summary.insert("shah_last_abs".into(), num(last_abs));
    summary.insert("shah_threshold".into(), num(threshold));
    summary.insert("shah_pass".into(), Value::from(shah_pass));
    summary.insert("map_slope".into(), num(slope));
    summary.insert("map_slope_bound".into(), num(MAP_SLOPE_BOUND));
    summary.insert("map_pass".into(), Value::from(map_pass));
    if partial {
        summary.insert("dropped".into(), Value::from(dropped));
    }
    summary.insert("pass".into(), Value::from(pass));
    Ok(FamilyOutput { table, summary, pass, partial })
}

// ---------------------------------------------------------------------------
// Family: returns — count bounds and separation on sampled points
// ---------------------------------------------------------------------------

struct ReturnRows {
    point: u64,
    horizon: f64,
    rows: Vec<(u32, i64, f64, i64, f64, bool, f64, f64, bool)>,
}

fn run_returns(cfg: &ExperimentConfig, jobs: usize, calib: &Calibration) -> Result<FamilyOutput> {
    let rescale = cfg.f64("rescale")?;
    let horizons = cfg.f64_list("horizons")?;
    let points = cfg.u64("points")?;
    if points == 0 {
        return Err(HoroError::InvalidArgument("points must be at least 1".into()));
    }

    let mut tasks = Vec::new();
    for point in 0..points {
        for &horizon in &horizons {
            tasks.push((point, horizon));
        }
    }
    let results = parallel_map(&tasks, jobs, |&(point, horizon)| {
        let x = sample_point(cfg.seed.wrapping_add(point.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        let dt = detection_step(&x, rescale, horizon)?;
        let events = find_beta_returns(&x, rescale, horizon, dt)?;
        let counts = count_bound_check(&events, rescale, horizon, calib)?;
        let mut rows = Vec::new();
        for c in counts {
            let sep = separation_check(&events, c.beta, rescale, calib);
            let count_pass = c.nondegenerate_pass && c.degenerate_pass;
            rows.push((
                c.beta,
                c.nondegenerate as i64,
                c.nondegenerate_bound,
                c.degenerate as i64,
                c.degenerate_bound,
                count_pass,
                sep.min_gap,
                sep.threshold,
                sep.pass,
            ));
        }
        Ok(ReturnRows { point, horizon, rows })
    });
    let (kept, dropped) =
        sift_limits(results, |i| format!("point={} horizon={}", tasks[i].0, tasks[i].1))?;
    let partial = !dropped.is_empty();

    let mut table = Table::new(vec![
        "point",
        "horizon",
        "beta",
        "nondegenerate",
        "nondegenerate_bound",
        "degenerate",
        "degenerate_bound",
        "count_pass",
        "min_gap",
        "gap_threshold",
        "separation_pass",
        "pass",
    ]);
    let mut all = true;
    let mut total_nondeg = 0i64;
    let mut total_deg = 0i64;
    for (_, r) in kept {
        for (beta, nondeg, nondeg_bound, deg, deg_bound, count_pass, gap, thr, sep_pass) in r.rows
        {
            let pass = count_pass && sep_pass;
            all &= pass;
            total_nondeg += nondeg;
            total_deg += deg;
            table.push(vec![
                Cell::Int(r.point as i64),
                Cell::Num(r.horizon),
                Cell::Int(beta as i64),
                Cell::Int(nondeg),
                Cell::Num(nondeg_bound),
                Cell::Int(deg),
                Cell::Num(deg_bound),
                Cell::Flag(count_pass),
                Cell::Num(gap),
                Cell::Num(thr),
                Cell::Flag(sep_pass),
                Cell::Flag(pass),
            ]);
        }
    }

    let pass = all && !partial;
    let mut summary = BTreeMap::new();
    summary.insert("points".into(), Value::from(points));
    summary.insert("total_nondegenerate".into(), Value::from(total_nondeg));
    summary.insert("total_degenerate".into(), Value::from(total_deg));
    summary.insert("c_gamma".into(), num(calib.c_gamma));
    summary.insert("c_gamma_prime".into(), num(calib.c_gamma_prime));
    if partial {
        summary.insert("dropped".into(), Value::from(dropped));
    }
    summary.insert("pass".into(), Value::from(pass));
    Ok(FamilyOutput { table, summary, pass, partial })
}

// ---------------------------------------------------------------------------
// Family: scaling — width-average constant across the (rescale, T) grid
// ---------------------------------------------------------------------------

/// Accepted spread of the per-cell width constants.
const SCALING_SPREAD: f64 = 10.0;

fn run_scaling(cfg: &ExperimentConfig, jobs: usize, calib: &Calibration) -> Result<FamilyOutput> {
    let rescales = cfg.f64_list("rescale_list")?;
    let horizons = cfg.f64_list("horizons")?;
    let _ = calib; // frozen constants are not part of the width shape
    let x = sample_point(cfg.seed);

    let mut tasks = Vec::new();
    for &rescale in &rescales {
        for &horizon in &horizons {
            tasks.push((rescale, horizon));
        }
    }
    let results = parallel_map(&tasks, jobs, |&(rescale, horizon)| {
        let c = active_c(&x, rescale, horizon)?;
        let dt = detection_step(&x, rescale, horizon)?;
        let events = find_beta_returns(&x, rescale, horizon, dt)?;
        let profile = width_integral(&x, rescale, horizon, &events)?;
        Ok((c, events.len(), profile.integral))
    });
    let (kept, dropped) = sift_limits(results, |i| {
        format!("rescale={} horizon={}", tasks[i].0, tasks[i].1)
    })?;
    let partial = !dropped.is_empty();

    let mut table = Table::new(vec![
        "rescale", "horizon", "c", "events", "width", "bound_shape", "k",
    ]);
    let mut ks = Vec::new();
    for (i, (c, events, width)) in kept {
        let (rescale, horizon) = tasks[i];
        let shape = c * c * horizon * (1.0 + (rescale.powf(1.0 / 3.0) * horizon).ln());
        let k = width / shape;
        ks.push(k);
        table.push(vec![
            Cell::Num(rescale),
            Cell::Num(horizon),
            Cell::Num(c),
            Cell::Int(events as i64),
            Cell::Num(width),
            Cell::Num(shape),
            Cell::Num(k),
        ]);
    }

    let k_min = ks.iter().cloned().fold(f64::INFINITY, f64::min);
    let k_max = ks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = k_max / k_min;
    let pass = !ks.is_empty() && spread.is_finite() && spread <= SCALING_SPREAD && !partial;
    let mut summary = BTreeMap::new();
    summary.insert("k_min".into(), num(k_min));
    summary.insert("k_max".into(), num(k_max));
    summary.insert("spread".into(), num(spread));
    summary.insert("spread_bound".into(), num(SCALING_SPREAD));
    if partial {
        summary.insert("dropped".into(), Value::from(dropped));
    }
    summary.insert("pass".into(), Value::from(pass));
    Ok(FamilyOutput { table, summary, pass, partial })
}

// ---------------------------------------------------------------------------
// Family: loglaw — excursion-growth medians along the diagonal flow
// ---------------------------------------------------------------------------

/// Accepted window for the median normalized excursion at the middle
/// horizon, and the slow-growth allowance between the end horizons.
const LOGLAW_WINDOW: (f64, f64) = (0.3, 1.0);
const LOGLAW_GROWTH_SLACK: f64 = 0.1;

fn run_loglaw(cfg: &ExperimentConfig, jobs: usize) -> Result<FamilyOutput> {
    let horizons = cfg.f64_list("horizons")?;
    let points = cfg.u64("points")?;
    let step = cfg.f64("step")?;
    if points == 0 {
        return Err(HoroError::InvalidArgument("points must be at least 1".into()));
    }

    let mut tasks = Vec::new();
    for point in 0..points {
        for &horizon in &horizons {
            tasks.push((point, horizon));
        }
    }
    let results = parallel_map(&tasks, jobs, |&(point, horizon)| {
        let x = sample_point(cfg.seed.wrapping_add(point.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        loglaw_statistic(&x, horizon, step)
    });
    let (kept, dropped) =
        sift_limits(results, |i| format!("point={} horizon={}", tasks[i].0, tasks[i].1))?;
    let partial = !dropped.is_empty();

    let mut table = Table::new(vec!["point", "horizon", "statistic"]);
    let mut per_horizon: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for (i, stat) in kept {
        let (point, horizon) = tasks[i];
        per_horizon.entry(horizon.to_bits()).or_default().push(stat);
        table.push(vec![
            Cell::Int(point as i64),
            Cell::Num(horizon),
            Cell::Num(stat),
        ]);
    }

    let mut sorted = horizons.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite horizons"));
    sorted.dedup();
    let med = |h: f64| -> Option<f64> {
        per_horizon
            .get(&h.to_bits())
            .filter(|v| v.len() == points as usize)
            .map(|v| median(v))
    };
    let mid = sorted[sorted.len() / 2];
    let (first, last) = (sorted[0], sorted[sorted.len() - 1]);
    let mut medians = serde_json::Map::new();
    for &h in &sorted {
        medians.insert(format!("{h}"), med(h).map(Value::from).unwrap_or(Value::Null));
    }
    let window_pass =
        med(mid).is_some_and(|m| m >= LOGLAW_WINDOW.0 && m <= LOGLAW_WINDOW.1);
    let growth_pass = match (med(first), med(last)) {
        (Some(a), Some(b)) => b <= a + LOGLAW_GROWTH_SLACK,
        _ => false,
    };

    let pass = window_pass && growth_pass && !partial;
    let mut summary = BTreeMap::new();
    summary.insert("medians".into(), Value::Object(medians));
    summary.insert("window_horizon".into(), num(mid));
    summary.insert("window_lo".into(), num(LOGLAW_WINDOW.0));
    summary.insert("window_hi".into(), num(LOGLAW_WINDOW.1));
    summary.insert("window_pass".into(), Value::from(window_pass));
    summary.insert("growth_pass".into(), Value::from(growth_pass));
    if partial {
        summary.insert("dropped".into(), Value::from(dropped));
    }
    summary.insert("pass".into(), Value::from(pass));
    Ok(FamilyOutput { table, summary, pass, partial })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(id: &str, pairs: &[(&str, &str)], seed: u64) -> ExperimentConfig {
        let raw: BTreeMap<String, String> = pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        ExperimentConfig::resolve(id, &raw, seed).expect("config resolves")
    }

    #[test]
    fn config_text_parses_comments_blanks_and_pairs() {
        let text = "# comment\n\n n_max = 12 \nother=a,b\n";
        let map = parse_config_text(text).expect("parses");
        assert_eq!(map.get("n_max").map(String::as_str), Some("12"));
        assert_eq!(map.get("other").map(String::as_str), Some("a,b"));
        assert_eq!(map.len(), 2);
    }

    #[test]
    fn config_text_rejects_malformed_lines() {
        assert!(matches!(
            parse_config_text("just a line\n"),
            Err(HoroError::InvalidArgument(_))
        ));
        assert!(matches!(
            parse_config_text("=value\n"),
            Err(HoroError::InvalidArgument(_))
        ));
        assert!(matches!(
            parse_config_text("a=1\na=2\n"),
            Err(HoroError::InvalidArgument(_))
        ));
    }

    #[test]
    fn unknown_keys_and_ids_are_rejected_with_diagnostics() {
        let raw: BTreeMap<String, String> =
            [("n_mxa".to_string(), "20".to_string())].into_iter().collect();
        let err = ExperimentConfig::resolve("tau", &raw, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("n_mxa") && msg.contains("n_max"), "{msg}");
        assert!(ExperimentConfig::resolve("tua", &BTreeMap::new(), 0).is_err());
    }

    #[test]
    fn defaults_fill_in_and_hash_ignores_spelled_out_defaults() {
        let implicit = resolve("tau", &[], 3);
        let explicit = resolve("tau", &[("n_max", "20")], 3);
        assert_eq!(implicit.params, explicit.params);
        assert_eq!(implicit.hash(), explicit.hash());
        let different = resolve("tau", &[("n_max", "21")], 3);
        assert_ne!(implicit.hash(), different.hash());
        let reseeded = resolve("tau", &[], 4);
        assert_ne!(implicit.hash(), reseeded.hash());
    }

    #[test]
    fn list_parsing_accepts_spaces_and_rejects_junk() {
        let cfg = resolve("loglaw", &[("horizons", " 10, 20 ,30 ")], 0);
        assert_eq!(cfg.f64_list("horizons").unwrap(), vec![10.0, 20.0, 30.0]);
        let bad = resolve("loglaw", &[("horizons", "10,,30")], 0);
        assert!(bad.f64_list("horizons").is_err());
        let nan = resolve("loglaw", &[("step", "nan")], 0);
        assert!(nan.f64("step").is_err());
    }

    #[test]
    fn csv_rendering_is_plain_decimal_with_quoting_only_when_needed() {
        let mut t = Table::new(vec!["a", "b", "c", "d"]);
        t.push(vec![
            Cell::Int(-3),
            Cell::Num(0.1),
            Cell::Text("x,y".into()),
            Cell::Flag(true),
        ]);
        let csv = t.to_csv("deadbeefdeadbeef");
        assert_eq!(
            csv,
            "config_hash,a,b,c,d\ndeadbeefdeadbeef,-3,0.1,\"x,y\",true\n"
        );
    }

    #[test]
    fn json_cells_map_nonfinite_to_null() {
        assert_eq!(Cell::Num(f64::NAN).json(), Value::Null);
        assert_eq!(Cell::Num(2.5).json(), Value::from(2.5));
    }

    #[test]
    fn parallel_map_preserves_input_order() {
        let inputs: Vec<u64> = (0..64).collect();
        let out = parallel_map(&inputs, 8, |&i| {
            // Stagger so completion order differs from input order.
            std::thread::sleep(std::time::Duration::from_micros(64 - i));
            Ok(i * i)
        });
        for (i, r) in out.into_iter().enumerate() {
            assert_eq!(r.unwrap(), (i * i) as u64);
        }
    }

    #[test]
    fn sift_limits_drops_limit_errors_and_propagates_the_rest() {
        let results: Vec<Result<u32>> = vec![
            Ok(1),
            Err(HoroError::ResourceLimit("budget".into())),
            Ok(3),
        ];
        let (kept, dropped) = sift_limits(results, |i| format!("t{i}")).expect("sifts");
        assert_eq!(kept, vec![(0, 1), (2, 3)]);
        assert_eq!(dropped.len(), 1);
        assert!(dropped[0].starts_with("t1"));

        let fatal: Vec<Result<u32>> = vec![Err(HoroError::InvalidArgument("bad".into()))];
        assert!(sift_limits(fatal, |_| String::new()).is_err());
    }

    #[test]
    fn median_handles_odd_and_even_lengths() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn tau_family_smoke_run_recovers_the_first_coefficients() {
        let cfg = resolve("tau", &[("n_max", "3")], 0);
        let arts = run(&cfg, 2).expect("runs");
        assert!(arts.output.pass);
        assert_eq!(arts.output.table.rows.len(), 3);
        // Column order: n, computed, oracle, rel_err, pass.
        assert_eq!(arts.output.table.rows[1][2], Cell::Num(-24.0));
    }

    #[test]
    fn loglaw_family_smoke_run_is_deterministic() {
        let cfg = resolve("loglaw", &[("horizons", "10,30"), ("points", "3"), ("step", "0.5")], 5);
        let a = run(&cfg, 2).expect("runs");
        let b = run(&cfg, 1).expect("runs");
        assert_eq!(
            a.output.table.to_csv(&a.config_hash),
            b.output.table.to_csv(&b.config_hash),
            "jobs count must not change output bytes"
        );
        assert_eq!(a.output.table.rows.len(), 6);
    }

    #[test]
    fn artifacts_round_trip_and_tag_every_row() {
        let dir = tempfile::tempdir().expect("tempdir");
        let cfg = resolve("tau", &[("n_max", "2")], 1);
        let arts = run(&cfg, 1).expect("runs");
        let (csv, json, manifest) = write_artifacts(dir.path(), &arts).expect("writes");
        let csv_text = fs::read_to_string(csv).expect("csv");
        for line in csv_text.lines().skip(1) {
            assert!(line.starts_with(&arts.config_hash), "untagged row: {line}");
        }
        let mirror: Value = serde_json::from_str(&fs::read_to_string(json).expect("json"))
            .expect("valid JSON");
        assert_eq!(mirror["config_hash"], Value::from(arts.config_hash.clone()));
        let man: Value = serde_json::from_str(&fs::read_to_string(manifest).expect("manifest"))
            .expect("valid JSON");
        assert_eq!(man["config_hash"], mirror["config_hash"]);
        assert!(man["calibration_hash"].is_string());
        assert!(man["wall_ms"].is_number());
    }
}
