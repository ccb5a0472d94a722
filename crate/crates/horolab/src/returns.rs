//! Close-return geometry for horocycle arcs on the modular surface.
//!
//! A horocycle arc `t -> x exp(t 𝒯 U)` nearly self-intersects whenever two
//! of its points differ by a small unstable shear `exp(z 𝒯^{-2/3} V)`.  This
//! module detects those events exactly, classifies them into dyadic shells by
//! the depth exponent `β`, and evaluates the separation, counting, and
//! tube-width statistics that control equidistribution along the arc:
//!
//! * [`Calibration`] — empirically fitted box constants, persisted as a
//!   plain-text `key=value` file and bundled as [`Calibration::builtin`];
//! * [`injectivity_search`] / [`c_gamma_upper`] — lower estimate and upper
//!   bound for the injectivity scale `c(x,T)` of the box map
//!   `(t,y,z) -> x exp(tU) exp(yX) exp(zV)`;
//! * [`find_beta_returns`] — detection of self-approach events by spatial
//!   hashing of reduced frames plus exact integer-matrix confirmation;
//! * [`separation_check`] / [`count_bound_check`] — pairwise separation
//!   thresholds and per-shell count bounds;
//! * [`width_integral`] — the average inverse cross-section area of the tube
//!   around the arc, integrated in closed form over its piecewise-affine
//!   width profile.
//!
//! Precision envelope: event confirmation conjugates integer lattice
//! elements whose entries grow like `(𝒯 T)^2`; with the `1e-8` confirmation
//! residual this keeps detection reliable for `𝒯 T` up to roughly `1e3`.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::error::{HoroError, Result};
use crate::group::{exp_diagonal, exp_stable, GroupElement};
use crate::surface::{height_distance, reduce, IntMatrix, OrbitStepper, SurfacePoint};

/// Grid cap for the injectivity search (total samples).
pub const INJECTIVITY_GRID_CAP: u128 = 100_000_000;
/// Sample cap for return detection.
pub const RETURN_SAMPLE_CAP: u128 = 10_000_000;
/// Candidate cap for the spatial hash (distinct lattice candidates).
pub const CANDIDATE_CAP: usize = 10_000_000;
/// Budget for candidate formations from neighbor pairs in the spatial hash.
const PAIR_CHECK_CAP: usize = 200_000_000;
/// Cell width for quantizing reduced frames in the spatial hash.
const HASH_CELL: f64 = 0.1;
/// Step for the geodesic excursion probes (the cusp distance is 1-Lipschitz
/// along the geodesic, so the grid error is at most half a step).
const EXCURSION_STEP: f64 = 0.01;
/// Absolute residual accepted when confirming a return candidate.
const RESIDUAL_TOL: f64 = 1e-8;
/// Event cap for the width profile (the envelope walk is quadratic in the
/// local overlap depth, not in this cap, but memory and node sorting are).
const WIDTH_EVENT_CAP: usize = 200_000;
/// Log-spaced steps of the `|u|` sweep in the fold-displacement
/// minimization (step `1/16`, hitting the unconstrained optimum
/// `ln|u| = -1/4` exactly).
const U_SWEEP_STEPS: usize = 24;

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

/// Number of thick-part base points used by [`calibrate`].
pub const CALIBRATION_POINTS: usize = 20;
/// Box horizon for the calibration runs of [`injectivity_search`].
pub const CALIBRATION_HORIZON: f64 = 2.0;
/// Grid resolution for the calibration runs (the largest admissible one).
pub const CALIBRATION_RESOLUTION: f64 = 0.05;

/// Empirical box constants, fitted once by [`calibrate`] and then frozen.
///
/// `c_gamma` is the thick-part injectivity scale: the box
/// `[-c, c] x [-1/2, 1/2] x [-c, c]` in `(t, y, z)` with
/// `c = c_gamma * e^{-d(x)}` maps injectively, where `d` is the cusp
/// distance.  `c_gamma_prime` bounds degenerate (cuspidal) return counts per
/// shell.  Both are measured quantities, not proved constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// Thick-part injectivity scale, in `(0, 1)`.
    pub c_gamma: f64,
    /// Degenerate-count constant, at least `1`.
    pub c_gamma_prime: f64,
    /// Seed of the calibration run.
    pub seed: u64,
    /// ISO date of the calibration run.
    pub date: String,
}

impl Calibration {
    pub fn new(c_gamma: f64, c_gamma_prime: f64, seed: u64, date: &str) -> Result<Self> {
        if !(c_gamma.is_finite() && c_gamma > 0.0 && c_gamma < 1.0) {
            return Err(HoroError::InvalidArgument(format!(
                "calibration constant C_Gamma must lie in (0, 1), got {c_gamma}"
            )));
        }
        if !(c_gamma_prime.is_finite() && c_gamma_prime >= 0.0) {
            return Err(HoroError::InvalidArgument(format!(
                "calibration constant C_Gamma_prime must be finite and nonnegative, got {c_gamma_prime}"
            )));
        }
        if date.is_empty() || date.contains('\n') {
            return Err(HoroError::InvalidArgument(
                "calibration date must be a nonempty single line".into(),
            ));
        }
        Ok(Calibration { c_gamma, c_gamma_prime, seed, date: date.to_string() })
    }

    /// Constant used in the separation threshold and in the non-degenerate
    /// count bound.  The structural separation result guarantees some
    /// constant `>= 1`; taking the floor `max(1, c_gamma)` keeps the
    /// threshold at its strictest admissible value (and the count bound at
    /// its smallest) while staying consistent with the calibrated box scale.
    pub fn separation_constant(&self) -> f64 {
        self.c_gamma.max(1.0)
    }

    /// Serializes in the calibration file format (stable byte-for-byte).
    pub fn to_file_string(&self) -> String {
        format!(
            "C_Gamma={}\nC_Gamma_prime={}\ncalibration-seed={}\ndate={}\n",
            self.c_gamma, self.c_gamma_prime, self.seed, self.date
        )
    }

    /// Parses the plain-text `key=value` calibration format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c_gamma: Option<f64> = None;
        let mut c_gamma_prime: Option<f64> = None;
        let mut seed: Option<u64> = None;
        let mut date: Option<String> = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HoroError::InvalidArgument(format!("calibration line without '=': {line:?}"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let parse_f64 = |what: &str, v: &str| -> Result<f64> {
                v.parse::<f64>().map_err(|_| {
                    HoroError::InvalidArgument(format!("calibration {what} is not a number: {v:?}"))
                })
            };
            match key {
                "C_Gamma" => c_gamma = Some(parse_f64(key, value)?),
                "C_Gamma_prime" => c_gamma_prime = Some(parse_f64(key, value)?),
                "calibration-seed" => {
                    seed = Some(value.parse::<u64>().map_err(|_| {
                        HoroError::InvalidArgument(format!(
                            "calibration seed is not an unsigned integer: {value:?}"
                        ))
                    })?)
                }
                "date" => date = Some(value.to_string()),
                other => {
                    return Err(HoroError::InvalidArgument(format!(
                        "unknown calibration key: {other:?}"
                    )))
                }
            }
        }
        match (c_gamma, c_gamma_prime, seed, date) {
            (Some(cg), Some(cp), Some(s), Some(d)) => Calibration::new(cg, cp, s, &d),
            _ => Err(HoroError::InvalidArgument(
                "calibration file must define C_Gamma, C_Gamma_prime, calibration-seed, and date"
                    .into(),
            )),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Calibration::parse(&std::fs::read_to_string(path)?)
    }

    /// The calibration bundled with the library (artifact of a fixed-seed
    /// [`calibrate`] run, checked in next to the sources).
    pub fn builtin() -> Calibration {
        Calibration::parse(include_str!("../calibration/default.txt"))
            .expect("the bundled calibration file parses")
    }
}

/// Civil date `YYYY-MM-DD` from the system clock, overridable through the
/// `HOROLAB_DATE` environment variable for reproducible artifacts.
fn calibration_date() -> String {
    if let Ok(s) = std::env::var("HOROLAB_DATE") {
        if !s.trim().is_empty() {
            return s.trim().to_string();
        }
    }
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0);
    let (y, m, d) = civil_from_days(secs.div_euclid(86_400));
    format!("{y:04}-{m:02}-{d:02}")
}

/// Gregorian calendar date from days since 1970-01-01.
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = (z - era * 146_097) as u64;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe as i64 + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

/// Fits the calibration constants from scratch.
///
/// Phase one estimates the thick-part injectivity scale: twenty sampled
/// points with cusp distance at most `0.3`, each searched at horizon
/// [`CALIBRATION_HORIZON`] and resolution [`CALIBRATION_RESOLUTION`]; the
/// constant is `0.9` times the smallest observed injective box scale
/// `1 / (c * horizon)`.  Phase two runs return detection at `𝒯 = 1, T = 10`
/// on the same points and sets the degenerate-count constant to the largest
/// observed ratio against the shell bound `1 + e^{-β} T` (floored at `1`).
pub fn calibrate(seed: u64) -> Result<Calibration> {
    calibrate_with_resolution(seed, CALIBRATION_RESOLUTION)
}

/// [`calibrate`] with an explicit phase-one search resolution (the fitted
/// scale constant is stable under reasonable refinements of the grid).
pub fn calibrate_with_resolution(seed: u64, resolution: f64) -> Result<Calibration> {
    if !(resolution > 0.0 && resolution <= 0.5) {
        return Err(HoroError::InvalidArgument(format!(
            "calibration resolution must lie in (0, 0.5], got {resolution}"
        )));
    }
    let points = calibration_points(seed)?;
    let mut min_scale = f64::INFINITY;
    for x in &points {
        let c = injectivity_search(x, CALIBRATION_HORIZON, resolution)?;
        min_scale = min_scale.min(1.0 / (c * CALIBRATION_HORIZON));
    }
    let c_gamma = (0.9 * min_scale).clamp(1e-6, 0.999);
    let date = calibration_date();

    let (rescale, horizon) = (1.0, 10.0);
    let mut c_prime: f64 = 1.0;
    for x in &points {
        let dt = detection_step(x, rescale, horizon)?;
        let events = find_beta_returns(x, rescale, horizon, dt)?;
        let mut per_beta: HashMap<u32, usize> = HashMap::new();
        for e in events.iter().filter(|e| e.degenerate) {
            *per_beta.entry(e.beta).or_insert(0) += 1;
        }
        for (beta, count) in per_beta {
            let shell = 1.0 + (-(beta as f64)).exp() * rescale.powf(1.0 / 3.0) * horizon;
            c_prime = c_prime.max(count as f64 / shell);
        }
    }
    Calibration::new(c_gamma, c_prime, seed, &date)
}

/// Deterministic thick-part sample points for [`calibrate`].
fn calibration_points(seed: u64) -> Result<Vec<SurfacePoint>> {
    let mut points = Vec::with_capacity(CALIBRATION_POINTS);
    let mut k: u64 = 0;
    while points.len() < CALIBRATION_POINTS {
        if k > 100_000 {
            return Err(HoroError::InternalError(
                "calibration could not find enough thick-part samples".into(),
            ));
        }
        let x = crate::surface::sample_point(seed.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        k += 1;
        if height_distance(&x) <= 0.3 {
            points.push(x);
        }
    }
    Ok(points)
}

// ---------------------------------------------------------------------------
// Excursion probes and injectivity-scale estimates
// ---------------------------------------------------------------------------

/// Largest cusp distance along the geodesic segment `a_y x`, `0 <= y <= t`,
/// probed on a grid of step [`EXCURSION_STEP`] (grid error at most half a
/// step by Lipschitz continuity).
pub fn max_excursion(x: &SurfacePoint, t_final: f64) -> Result<f64> {
    if !t_final.is_finite() || t_final < 0.0 {
        return Err(HoroError::InvalidArgument(format!(
            "excursion probe time must be finite and nonnegative, got {t_final}"
        )));
    }
    let mut stepper = OrbitStepper::new(x);
    let mut max_d = stepper.height_distance();
    let steps = (t_final / EXCURSION_STEP).ceil() as usize;
    if steps > 0 {
        let dt = t_final / steps as f64;
        for _ in 0..steps {
            stepper.step_geodesic(dt)?;
            max_d = max_d.max(stepper.height_distance());
        }
    }
    Ok(max_d)
}

/// Reference horizon for the transported injectivity search of [`active_c`].
const ACTIVE_C_HORIZON: f64 = 2.0;
/// Grid resolution for the transported search (the largest admissible one).
const ACTIVE_C_RESOLUTION: f64 = 0.05;

/// Working estimate of the injectivity scale `c(x, 𝒯 T)` that normalizes
/// return shells, sampling steps, and tube baselines.
///
/// The scale obeys the geodesic rescaling covariance
/// `c(x, H) = c(a_y x, e^{-y} H)`, so it is transported to a fixed cheap
/// reference horizon: the estimate is the collision search
/// `c(a_{y*} x, 2)` with `y* = log(𝒯 T / 2)`.  Like the search itself this
/// is a lower estimate of the true scale, and it is at least `1`.
pub fn active_c(x: &SurfacePoint, rescale: f64, horizon: f64) -> Result<f64> {
    if !(rescale.is_finite() && rescale >= 1.0) {
        return Err(HoroError::InvalidArgument(format!(
            "rescaling parameter must be >= 1, got {rescale}"
        )));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(HoroError::InvalidArgument(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    let y_star = (rescale * horizon / ACTIVE_C_HORIZON).ln();
    let transported = crate::surface::geodesic_translate(x, y_star)?;
    injectivity_search(&transported, ACTIVE_C_HORIZON, ACTIVE_C_RESOLUTION)
}

/// Upper bound for the injectivity scale, with its regime flag.
#[derive(Debug, Clone, Copy)]
pub struct CGammaBound {
    /// The bound `(10 / C_Gamma)^2 e^{2 max_{0<=y<=t} d(a_y x)}`.
    pub value: f64,
    /// Whether the requested horizon sits inside the bound's validity window
    /// `[1, (C_Gamma / 10) e^{t_probe - d(a_{t_probe} x)}]`.
    pub in_regime: bool,
}

/// Evaluates the geodesic-excursion upper bound for `c(x, horizon)` using
/// the probe time `t_probe`.  The bound is always returned; `in_regime`
/// reports whether the horizon satisfies the validity window.
pub fn c_gamma_upper(
    x: &SurfacePoint,
    horizon: f64,
    t_probe: f64,
    calib: &Calibration,
) -> Result<CGammaBound> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(HoroError::InvalidArgument(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    if !(t_probe.is_finite() && t_probe >= 0.0) {
        return Err(HoroError::InvalidArgument(format!(
            "probe time must be finite and nonnegative, got {t_probe}"
        )));
    }
    let mut stepper = OrbitStepper::new(x);
    let mut max_d = stepper.height_distance();
    let steps = (t_probe / EXCURSION_STEP).ceil() as usize;
    if steps > 0 {
        let dt = t_probe / steps as f64;
        for _ in 0..steps {
            stepper.step_geodesic(dt)?;
            max_d = max_d.max(stepper.height_distance());
        }
    }
    let d_end = stepper.height_distance();
    let value = (10.0 / calib.c_gamma).powi(2) * (2.0 * max_d).exp();
    let in_regime =
        horizon >= 1.0 && horizon <= (calib.c_gamma / 10.0) * (t_probe - d_end).exp();
    Ok(CGammaBound { value, in_regime })
}

/// Detection step for return scans at `x`: 90% of the shorter of the unit
/// step and a quarter of the measured injectivity window, divided by the
/// rescale factor so that rescaled time still advances in safe increments.
/// Scans stepping faster than this can hop over a fold and miss the return.
pub fn detection_step(x: &SurfacePoint, rescale: f64, horizon: f64) -> Result<f64> {
    let c = active_c(x, rescale, horizon)?;
    Ok(0.9 * (1.0f64).min(1.0 / (4.0 * c)) / rescale)
}

// ---------------------------------------------------------------------------
// Spatial hashing of reduced frames
// ---------------------------------------------------------------------------

/// Quantized key of a frame (no sign canonicalization; callers probe the
/// keys of both `g` and `-g` so that matching never trips over a sign
/// discontinuity).
fn frame_key(g: &GroupElement, negate: bool) -> (i64, i64, i64, i64) {
    let s = if negate { -1.0 } else { 1.0 };
    (
        (s * g.a / HASH_CELL).round() as i64,
        (s * g.b / HASH_CELL).round() as i64,
        (s * g.c / HASH_CELL).round() as i64,
        (s * g.d / HASH_CELL).round() as i64,
    )
}

fn negate_int(m: &IntMatrix) -> IntMatrix {
    IntMatrix::new(-m.m[0][0], -m.m[0][1], -m.m[1][0], -m.m[1][1])
}

/// Canonical representative of `{g, -g}`: the first nonzero entry positive.
fn sign_normalize(m: IntMatrix) -> IntMatrix {
    let e = [m.m[0][0], m.m[0][1], m.m[1][0], m.m[1][1]];
    for v in e {
        if v != 0 {
            return if v < 0 { negate_int(&m) } else { m };
        }
    }
    m
}

fn is_pm_identity(m: &IntMatrix) -> bool {
    let id = IntMatrix::identity();
    *m == id || *m == negate_int(&id)
}

/// Spatial hash over quantized reduced frames; values are sample indices.
struct FrameHash {
    cells: HashMap<(i64, i64, i64, i64), Vec<u32>>,
}

impl FrameHash {
    fn new() -> Self {
        FrameHash { cells: HashMap::new() }
    }

    /// Inserts a sample, skipping it when its cell already holds a sample
    /// with the same reducer (up to sign).  Pairing is a function of the
    /// reducers, and same-cell samples have identical neighborhoods, so
    /// dropping duplicates loses no candidate while keeping cell sizes (and
    /// with them the pairwise-inspection load) bounded by the number of
    /// distinct folds, not by the sampling rate.
    fn insert_dedup(&mut self, g: &GroupElement, idx: u32, reducers: &[IntMatrix]) {
        let cell = self.cells.entry(frame_key(g, false)).or_default();
        let p = &reducers[idx as usize];
        let np = negate_int(p);
        if cell.iter().any(|&j| {
            let pj = &reducers[j as usize];
            pj == p || *pj == np
        }) {
            return;
        }
        cell.push(idx);
    }

    /// Visits every stored index in the 81-cell neighborhoods of the keys of
    /// `g` and `-g`.
    fn visit_neighbors(&self, g: &GroupElement, mut visit: impl FnMut(u32)) {
        for negate in [false, true] {
            let (ka, kb, kc, kd) = frame_key(g, negate);
            for da in -1..=1 {
                for db in -1..=1 {
                    for dc in -1..=1 {
                        for dd in -1..=1 {
                            if let Some(v) = self.cells.get(&(ka + da, kb + db, kc + dc, kd + dd))
                            {
                                for &idx in v {
                                    visit(idx);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Cusp distance above which a sample proposes wrap candidates.
const WRAP_MIN_DISTANCE: f64 = std::f64::consts::LN_2;
/// Largest translation power proposed per deep sample.
const WRAP_POWER_MAX: i64 = 4;

/// Cusp-wrap candidates of a deep sample.  In reduced coordinates the cusp
/// sits at infinity and its stabilizer is generated by the unit translation,
/// so a sample at reduced height `>= 2` proposes the translations `T^n`
/// conjugated back through its reducer `P` (inverses are covered by the
/// confirmation's branch loop).
fn cusp_wrap_candidates(sp: &SurfacePoint) -> Vec<IntMatrix> {
    let mut out = Vec::new();
    if height_distance(sp) < WRAP_MIN_DISTANCE {
        return out;
    }
    let Ok(p_inv) = sp.reducer.inverse_unimodular() else {
        return out;
    };
    for n in 1..=WRAP_POWER_MAX {
        let t = IntMatrix::translation(n);
        if let Ok(g) = p_inv.mul(&t).and_then(|m| m.mul(&sp.reducer)) {
            if !is_pm_identity(&g) {
                out.push(sign_normalize(g));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Injectivity search
// ---------------------------------------------------------------------------

/// Empirical estimate of the injectivity scale `c(x, T)`: the smallest
/// `c >= 1` (bisected to 1% relative accuracy) such that no two points of
/// the box `[-10T, 10T] x [-1/2, 1/2] x (1/c)[-1/T, 1/T]` collide on the
/// surface.
///
/// The `(t, y)` face is sampled on a grid of the given resolution; the shear
/// coordinate is handled exactly: a collision at level `c` exists precisely
/// when some lattice fold displaces a face point by `(t', y', z')` with
/// `(t', y')` inside the face and `|z'|` at most twice the shear half-width
/// `1/(cT)` (the two colliding points can then split `z'` between their
/// shear coordinates).  Fold candidates come from spatial hashing of the
/// reduced sample frames and from the cusp wraps of deep samples; each
/// candidate's smallest in-face displacement is then minimized in closed
/// form, so the estimate is a lower bound for the true scale.
pub fn injectivity_search(x: &SurfacePoint, horizon: f64, resolution: f64) -> Result<f64> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(HoroError::InvalidArgument(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    let res_max = 1.0 / (10.0 * horizon);
    if !(resolution > 0.0 && resolution.is_finite()) || resolution > res_max * (1.0 + 1e-9) {
        return Err(HoroError::InvalidArgument(format!(
            "grid resolution must lie in (0, {res_max:.3e}], got {resolution}"
        )));
    }
    let nt = (20.0 * horizon / resolution).ceil() as u128 + 1;
    let ny = (1.0 / resolution).ceil() as u128 + 1;
    if nt.saturating_mul(ny) > INJECTIVITY_GRID_CAP {
        return Err(HoroError::ResourceLimit(format!(
            "injectivity grid would need {} samples (cap {})",
            nt * ny,
            INJECTIVITY_GRID_CAP
        )));
    }
    let (nt, ny) = (nt as usize, ny as usize);
    let xr = x.reduced;
    let xr_inv = xr.inverse();

    let mut hash = FrameHash::new();
    let mut reducers: Vec<IntMatrix> = Vec::with_capacity(nt * ny);
    let mut candidates: HashSet<IntMatrix> = HashSet::new();
    let mut pair_budget = PAIR_CHECK_CAP;

    for i_t in 0..nt {
        let t = (-10.0 * horizon + i_t as f64 * resolution).min(10.0 * horizon);
        let head = xr.mul(&exp_stable(t));
        for i_y in 0..ny {
            let y = (-0.5 + i_y as f64 * resolution).min(0.5);
            let sp = reduce(&head.mul(&exp_diagonal(y)))?;
            let idx = reducers.len() as u32;
            let pi_inv = sp.reducer.inverse_unimodular()?;
            let neg_reducer = negate_int(&sp.reducer);
            let mut overflow = false;
            hash.visit_neighbors(&sp.reduced, |j| {
                let pj = &reducers[j as usize];
                if *pj == sp.reducer || *pj == neg_reducer {
                    return;
                }
                if pair_budget == 0 {
                    overflow = true;
                    return;
                }
                pair_budget -= 1;
                if let Ok(g) = pi_inv.mul(pj) {
                    candidates.insert(sign_normalize(g));
                }
            });
            if overflow {
                return Err(HoroError::ResourceLimit(
                    "injectivity search exhausted its pairwise-inspection budget".into(),
                ));
            }
            for g in cusp_wrap_candidates(&sp) {
                candidates.insert(g);
            }
            if candidates.len() > CANDIDATE_CAP {
                return Err(HoroError::ResourceLimit(format!(
                    "injectivity search exceeded {CANDIDATE_CAP} fold candidates"
                )));
            }
            reducers.push(sp.reducer);
            hash.insert_dedup(&sp.reduced, idx, &reducers);
        }
    }

    // Minimize each candidate's in-face displacement from its conjugate
    // M = x^{-1} γ^{±1} x directly: the fold pairs the face points (t, y)
    // and (t', y') with
    //   u  = M21 t + M22,     t' = (M11 t + M12) / u,
    //   y' = 2y - 2 ln|u|,    |z'| = |M21| e^{2y} / |u|,
    // so |z'| shrinks by driving y down to max(-1/2, ln|u| - 1/4) and |u|
    // toward e^{-1/4}; a short log-spaced sweep of |u| over [e^{-3/4},
    // e^{3/4}] (the range where y and y' can both stay inside the face)
    // handles the window constraints on t and t'.
    let window = 10.0 * horizon + 1e-6;
    let mut z_min = f64::INFINITY;
    for gamma in &candidates {
        let branches = [*gamma, gamma.inverse_unimodular()?];
        for gi in branches {
            let Ok(gf) = gi.to_group_element() else {
                continue;
            };
            let m = xr_inv.mul(&gf).mul(&xr);
            if m.c.abs() < 1e-300 {
                continue;
            }
            for k in 0..=U_SWEEP_STEPS {
                let lu = -0.75 + 1.5 * k as f64 / U_SWEEP_STEPS as f64;
                let au = lu.exp();
                let y = (lu - 0.25).max(-0.5);
                for u in [au, -au] {
                    let t = (u - m.d) / m.c;
                    if t.abs() > window {
                        continue;
                    }
                    let t_p = (m.a * t + m.b) / u;
                    if t_p.abs() > window {
                        continue;
                    }
                    z_min = z_min.min(m.c.abs() * (2.0 * y).exp() / au);
                }
            }
        }
    }

    if !z_min.is_finite() {
        return Ok(1.0);
    }
    if z_min < 1e-12 {
        return Err(HoroError::InternalError(
            "injectivity search found a fold that persists at every scale".into(),
        ));
    }
    let collide = |c: f64| z_min <= (2.0 / (c * horizon)) * (1.0 + 1e-6);
    if !collide(1.0) {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (1.0, 2.0);
    let mut guard = 0;
    while collide(hi) {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(HoroError::InternalError(
                "injectivity bisection failed to bracket a collision-free scale".into(),
            ));
        }
    }
    while hi - lo > 0.01 * hi {
        let mid = 0.5 * (lo + hi);
        if collide(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

// ---------------------------------------------------------------------------
// Return detection
// ---------------------------------------------------------------------------

/// A detected self-approach of the arc `t -> x exp(t 𝒯 U)`: the points at
/// `t0` and `t1` differ by the shear `exp(z 𝒯^{-2/3} V)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnEvent {
    pub t0: f64,
    pub t1: f64,
    /// Rescaled shear displacement; `|z|` lies in the shell
    /// `(e^{-(β+1)}, e^{-β}] / c` for the active scale estimate `c`.
    pub z: f64,
    /// Shell index, capped at `log(𝒯^{1/3} T)`.
    pub beta: u32,
    /// Whether `|t0 - t1|` falls below the sampling resolution.
    pub degenerate: bool,
}

/// Floor with a `1e-12` snap at integer edges (shell membership at the
/// closed upper edge must not leak into the next shell through round-off).
fn snap_floor(u: f64) -> i64 {
    if (u - u.round()).abs() < 1e-12 {
        u.round() as i64
    } else {
        u.floor() as i64
    }
}

/// Detects all shell returns of the arc at resolution `dt`.
///
/// The arc is sampled on `t ∈ [-10T, 10T]`; each sample is reduced and its
/// frame inserted into a spatial hash.  Near pairs propose lattice
/// candidates through their reducers, deep samples propose the cusp wraps
/// of their reducers, and every
/// candidate `γ` is confirmed exactly: the conjugated matrix
/// `M = x^{-1} γ x` determines the unique solve times
/// `s0 = (M11 - 1)/M21`, `s1 = (1 - M22)/M21`, and the residual
/// `h(-s0) M h(s1)` must be a pure shear within `1e-8`.  Shells are
/// normalized by [`active_c`]; shells beyond `log(𝒯^{1/3} T)` are outside
/// the return range and dropped.
pub fn find_beta_returns(
    x: &SurfacePoint,
    rescale: f64,
    horizon: f64,
    dt: f64,
) -> Result<Vec<ReturnEvent>> {
    if !(rescale.is_finite() && rescale >= 1.0) {
        return Err(HoroError::InvalidArgument(format!(
            "rescaling parameter must be >= 1, got {rescale}"
        )));
    }
    if !(horizon.is_finite() && horizon >= 1.0) {
        return Err(HoroError::InvalidArgument(format!(
            "horizon must be >= 1, got {horizon}"
        )));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(HoroError::InvalidArgument(format!(
            "sampling step must be positive, got {dt}"
        )));
    }
    let c_act = active_c(x, rescale, horizon)?;
    let dt_max = (1.0f64).min(1.0 / (4.0 * c_act)) / rescale;
    if dt > dt_max * (1.0 + 1e-9) {
        return Err(HoroError::InvalidArgument(format!(
            "sampling step {dt} exceeds the injectivity budget {dt_max:.6e}"
        )));
    }
    let n_samples = (20.0 * horizon / dt).ceil() as u128 + 1;
    if n_samples > RETURN_SAMPLE_CAP {
        return Err(HoroError::ResourceLimit(format!(
            "return detection would need {n_samples} samples (cap {RETURN_SAMPLE_CAP})"
        )));
    }
    let n_samples = n_samples as usize;
    let beta_cap = snap_floor((rescale.powf(1.0 / 3.0) * horizon).ln());

    let xr = x.reduced;
    let xr_inv = xr.inverse();

    let mut hash = FrameHash::new();
    let mut reducers: Vec<IntMatrix> = Vec::with_capacity(n_samples);
    let mut candidates: HashSet<IntMatrix> = HashSet::new();
    let mut pair_budget = PAIR_CHECK_CAP;

    for i in 0..n_samples {
        let t = (-10.0 * horizon + i as f64 * dt).min(10.0 * horizon);
        let sp = reduce(&xr.mul(&exp_stable(t * rescale)))?;
        let pi_inv = sp.reducer.inverse_unimodular()?;
        let neg_reducer = negate_int(&sp.reducer);
        let mut overflow = false;
        hash.visit_neighbors(&sp.reduced, |j| {
            let pj = &reducers[j as usize];
            if *pj == sp.reducer || *pj == neg_reducer {
                return;
            }
            if pair_budget == 0 {
                overflow = true;
                return;
            }
            pair_budget -= 1;
            if let Ok(g) = pi_inv.mul(pj) {
                candidates.insert(sign_normalize(g));
            }
        });
        if overflow {
            return Err(HoroError::ResourceLimit(
                "return detection exhausted its pairwise-inspection budget".into(),
            ));
        }
        for g in cusp_wrap_candidates(&sp) {
            candidates.insert(g);
        }
        if candidates.len() > CANDIDATE_CAP {
            return Err(HoroError::ResourceLimit(format!(
                "return detection exceeded {CANDIDATE_CAP} lattice candidates"
            )));
        }
        reducers.push(sp.reducer);
        hash.insert_dedup(&sp.reduced, i as u32, &reducers);
    }

    let window = 10.0 * horizon * (1.0 + 1e-12) + 1e-9;
    let shell_scale = rescale.powf(2.0 / 3.0);
    let mut events: HashMap<(i64, i64, i64, i64), ReturnEvent> = HashMap::new();
    for gamma in &candidates {
        let branches = [*gamma, gamma.inverse_unimodular()?];
        for gi in branches {
            let Ok(gf) = gi.to_group_element() else {
                continue;
            };
            let m = xr_inv.mul(&gf).mul(&xr);
            for sign in [1.0f64, -1.0] {
                let (m11, m12, m21, m22) = (sign * m.a, sign * m.b, sign * m.c, sign * m.d);
                if m21.abs() < 1e-300 {
                    continue;
                }
                let s0 = (m11 - 1.0) / m21;
                let s1 = (1.0 - m22) / m21;
                let (t0, t1) = (s0 / rescale, s1 / rescale);
                if !(t0.is_finite() && t1.is_finite()) || t0.abs() > window || t1.abs() > window {
                    continue;
                }
                let z = m21 * shell_scale;
                let u = -(z.abs() * c_act).ln();
                if u < -1e-9 {
                    continue;
                }
                let beta = snap_floor(u.max(0.0));
                if beta > beta_cap {
                    continue;
                }
                let signed = GroupElement::new_unchecked(m11, m12, m21, m22);
                let resid = exp_stable(-s0).mul(&signed).mul(&exp_stable(s1));
                if (resid.a - 1.0).abs() > RESIDUAL_TOL
                    || (resid.d - 1.0).abs() > RESIDUAL_TOL
                    || resid.b.abs() > RESIDUAL_TOL
                {
                    continue;
                }
                let e = gi.m;
                let si = if sign < 0.0 { -1 } else { 1 };
                let key = (si * e[0][0], si * e[0][1], si * e[1][0], si * e[1][1]);
                events.entry(key).or_insert(ReturnEvent {
                    t0,
                    t1,
                    z,
                    beta: beta as u32,
                    degenerate: (t0 - t1).abs() < dt,
                });
            }
        }
    }

    let mut out: Vec<ReturnEvent> = events.into_values().collect();
    out.sort_by(|a, b| {
        (a.t0, a.t1).partial_cmp(&(b.t0, b.t1)).expect("event times are finite")
    });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Separation and count checks
// ---------------------------------------------------------------------------

/// Result of a pairwise separation check within one shell.
#[derive(Debug, Clone, Copy)]
pub struct SeparationReport {
    pub pass: bool,
    /// Smallest pairwise `max(|Δt0|, |Δt1|)`; infinite when fewer than two
    /// events were compared.
    pub min_gap: f64,
    /// The required separation `e^β 𝒯^{-1/3} / (2 C)`.
    pub threshold: f64,
    /// Number of pairs compared.
    pub pairs: usize,
}

/// Checks that all non-degenerate events of the given shell are pairwise
/// separated by `e^β 𝒯^{-1/3} / (2 C)` in `t0` or in `t1`.  Events of other
/// shells and degenerate events are ignored.
pub fn separation_check(
    events: &[ReturnEvent],
    beta: u32,
    rescale: f64,
    calib: &Calibration,
) -> SeparationReport {
    let sel: Vec<&ReturnEvent> =
        events.iter().filter(|e| e.beta == beta && !e.degenerate).collect();
    let threshold = (beta as f64).exp() * rescale.powf(-1.0 / 3.0)
        / (2.0 * calib.separation_constant());
    let mut min_gap = f64::INFINITY;
    let mut pairs = 0usize;
    for i in 0..sel.len() {
        for j in (i + 1)..sel.len() {
            let gap = (sel[i].t0 - sel[j].t0).abs().max((sel[i].t1 - sel[j].t1).abs());
            min_gap = min_gap.min(gap);
            pairs += 1;
        }
    }
    SeparationReport { pass: pairs == 0 || min_gap >= threshold, min_gap, threshold, pairs }
}

/// One row of the per-shell count report.
#[derive(Debug, Clone, Copy)]
pub struct CountBoundRow {
    pub beta: u32,
    pub nondegenerate: usize,
    /// `4·10² C² e^{-2β} 𝒯^{2/3} T²`.
    pub nondegenerate_bound: f64,
    pub nondegenerate_pass: bool,
    pub degenerate: usize,
    /// `C' (1 + e^{-β} 𝒯^{1/3} T)`.
    pub degenerate_bound: f64,
    pub degenerate_pass: bool,
}

/// Compares per-shell event counts against the packing bounds, one row per
/// shell `β = 0 .. log(𝒯^{1/3} T)`.
pub fn count_bound_check(
    events: &[ReturnEvent],
    rescale: f64,
    horizon: f64,
    calib: &Calibration,
) -> Result<Vec<CountBoundRow>> {
    if !(rescale.is_finite() && rescale >= 1.0) || !(horizon.is_finite() && horizon >= 1.0) {
        return Err(HoroError::InvalidArgument(
            "count bounds need rescale >= 1 and horizon >= 1".into(),
        ));
    }
    let beta_cap = snap_floor((rescale.powf(1.0 / 3.0) * horizon).ln()).max(0) as u32;
    let cs = calib.separation_constant();
    let mut rows = Vec::with_capacity(beta_cap as usize + 1);
    for beta in 0..=beta_cap {
        let nondegenerate = events.iter().filter(|e| e.beta == beta && !e.degenerate).count();
        let degenerate = events.iter().filter(|e| e.beta == beta && e.degenerate).count();
        let decay = (-2.0 * beta as f64).exp();
        let nondegenerate_bound =
            400.0 * cs * cs * decay * rescale.powf(2.0 / 3.0) * horizon * horizon;
        let degenerate_bound = calib.c_gamma_prime
            * (1.0 + (-(beta as f64)).exp() * rescale.powf(1.0 / 3.0) * horizon);
        rows.push(CountBoundRow {
            beta,
            nondegenerate,
            nondegenerate_bound,
            nondegenerate_pass: (nondegenerate as f64) <= nondegenerate_bound,
            degenerate,
            degenerate_bound,
            degenerate_pass: (degenerate as f64) <= degenerate_bound,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Tube width
// ---------------------------------------------------------------------------

/// Average inverse cross-section area of the tube around the arc.
#[derive(Debug, Clone, Copy)]
pub struct WidthProfile {
    /// `(1/T) ∫₀ᵀ side(t)^{-2} dt` where `side(t)` is the square
    /// cross-section side of the tube.
    pub integral: f64,
    pub events_used: usize,
    pub rescale: f64,
    pub horizon: f64,
}

/// One affine piece `side(t) = a + b t` on `[lo, hi]` of the width profile.
#[derive(Debug, Clone, Copy)]
struct WidthPiece {
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
}

impl WidthPiece {
    fn value(&self, t: f64) -> f64 {
        self.a + self.b * t
    }
}

/// Exact `∫ (a + b t)^{-2} dt` over `[u, v]`.
fn inverse_square_integral(p: &WidthPiece, u: f64, v: f64) -> f64 {
    if v <= u {
        return 0.0;
    }
    if p.b.abs() < 1e-300 {
        let s = p.value(0.5 * (u + v));
        return (v - u) / (s * s);
    }
    (1.0 / p.b) * (1.0 / p.value(u) - 1.0 / p.value(v))
}

/// Builds the tube around the arc and integrates its inverse cross-section
/// area exactly.
///
/// The baseline square side is `1/(100 c)` for the active scale estimate
/// `c`; each event pinches the side to
/// `(e^{-β}/(100 c)) max(𝒯^{2/3} |t - t0|, 1)` on the window
/// `|t - t0| <= e^β 𝒯^{-2/3}` (which meets the baseline continuously at the
/// window edge), and the profile is the pointwise minimum.  The integral of
/// `side^{-2}` is evaluated per affine piece of the lower envelope, found by
/// walking from piece to piece through exact line intersections.
pub fn width_integral(
    x: &SurfacePoint,
    rescale: f64,
    horizon: f64,
    events: &[ReturnEvent],
) -> Result<WidthProfile> {
    if !(rescale.is_finite() && rescale >= 1.0) || !(horizon.is_finite() && horizon >= 1.0) {
        return Err(HoroError::InvalidArgument(
            "width profile needs rescale >= 1 and horizon >= 1".into(),
        ));
    }
    if events.len() > WIDTH_EVENT_CAP {
        return Err(HoroError::ResourceLimit(format!(
            "width profile supports at most {WIDTH_EVENT_CAP} events, got {}",
            events.len()
        )));
    }
    let c = active_c(x, rescale, horizon)?;
    let m = 100.0 * c;
    let baseline = 1.0 / m;
    let s23 = rescale.powf(2.0 / 3.0);
    let flat_half = 1.0 / s23;

    let mut pieces: Vec<WidthPiece> = Vec::with_capacity(3 * events.len() + 1);
    pieces.push(WidthPiece { lo: 0.0, hi: horizon, a: baseline, b: 0.0 });
    let mut push_clipped = |lo: f64, hi: f64, a: f64, b: f64| {
        let (lo, hi) = (lo.max(0.0), hi.min(horizon));
        if hi > lo + 1e-15 {
            pieces.push(WidthPiece { lo, hi, a, b });
        }
    };
    for e in events {
        let depth = (-(e.beta as f64)).exp() / m;
        let window_half = (e.beta as f64).exp() / s23;
        // Left slope, flat bottom, right slope of the pinch.
        push_clipped(
            e.t0 - window_half,
            e.t0 - flat_half,
            depth * s23 * e.t0,
            -depth * s23,
        );
        push_clipped(e.t0 - flat_half, e.t0 + flat_half, depth, 0.0);
        push_clipped(
            e.t0 + flat_half,
            e.t0 + window_half,
            -depth * s23 * e.t0,
            depth * s23,
        );
    }

    // Interval nodes: all piece endpoints.  Between consecutive nodes the
    // active piece set is fixed and every piece is affine, so the envelope
    // inside an interval is found by walking exact pairwise intersections.
    let mut nodes: Vec<f64> = Vec::with_capacity(2 * pieces.len() + 2);
    nodes.push(0.0);
    nodes.push(horizon);
    for p in &pieces {
        nodes.push(p.lo);
        nodes.push(p.hi);
    }
    nodes.retain(|t| t.is_finite());
    nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite nodes"));
    nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-13 * (1.0 + horizon));

    // Sweep the intervals with a lazily pruned active list.
    let mut order: Vec<usize> = (0..pieces.len()).collect();
    order.sort_by(|&i, &j| pieces[i].lo.partial_cmp(&pieces[j].lo).expect("finite domains"));
    let mut next_piece = 0usize;
    let mut active: Vec<usize> = Vec::new();
    let mut total = 0.0;
    let eps = 1e-13 * (1.0 + horizon);

    for w in nodes.windows(2) {
        let (u, v) = (w[0], w[1]);
        if v <= u + eps || v <= 0.0 || u >= horizon {
            continue;
        }
        while next_piece < order.len() && pieces[order[next_piece]].lo <= u + eps {
            active.push(order[next_piece]);
            next_piece += 1;
        }
        active.retain(|&i| pieces[i].hi >= v - eps);
        debug_assert!(!active.is_empty(), "baseline always covers [0, horizon]");

        // Walk the lower envelope from u to v.
        let mut t_cur = u;
        let mut cur = *active
            .iter()
            .min_by(|&&i, &&j| {
                let (vi, vj) = (pieces[i].value(u), pieces[j].value(u));
                (vi, pieces[i].b).partial_cmp(&(vj, pieces[j].b)).expect("finite sides")
            })
            .expect("nonempty active set");
        let mut guard = 0usize;
        loop {
            guard += 1;
            if guard > 4 * active.len() + 8 {
                return Err(HoroError::InternalError(
                    "width envelope walk failed to terminate".into(),
                ));
            }
            // Earliest strictly-later crossing below the current piece.
            let mut t_next = v;
            let mut next: Option<usize> = None;
            for &i in &active {
                if i == cur {
                    continue;
                }
                let db = pieces[cur].b - pieces[i].b;
                if db.abs() < 1e-300 {
                    continue;
                }
                let t_star = (pieces[i].a - pieces[cur].a) / db;
                if t_star > t_cur + eps
                    && t_star < t_next - eps
                    && pieces[i].value(t_star + eps) < pieces[cur].value(t_star + eps)
                {
                    t_next = t_star;
                    next = Some(i);
                }
            }
            total += inverse_square_integral(&pieces[cur], t_cur, t_next);
            t_cur = t_next;
            match next {
                Some(i) => cur = i,
                None => break,
            }
        }
    }

    Ok(WidthProfile {
        integral: total / horizon,
        events_used: events.len(),
        rescale,
        horizon,
    })
}
