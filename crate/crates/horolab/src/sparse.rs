//! Averages of surface observables along the sparse times `n^{1+delta}`,
//! the block decomposition that replaces those times by arithmetic
//! progressions with a controlled linearization error, and comparisons
//! between horocycle-map Riemann sums and the continuous orbit integral.
//!
//! The central quantity is the sparse average `(1/N) sum_{n<N}
//! f(h_{n^{1+delta}} x)`.  Splitting the index range into blocks `[N_j,
//! N_{j+1})` whose widths are `floor(N_j^{(1-delta)/2-eps})` makes the time
//! map `n -> n^{1+delta}` affine on each block up to an error that decays
//! like `N_j^{-2 eps}`, so the sparse sum is well approximated by sums along
//! the progressions `N_j^{1+delta} + k L_j` with step `L_j = (1+delta)
//! N_j^delta`.  The operations below expose the decomposition, the exact
//! linearization error, and the paired sums on both sides.

use crate::cusp::{lift, CuspFormSpec};
use crate::error::{HoroError, Result};
use crate::group::{exp_stable, GroupElement};
use crate::surface::{reduce, sample_point, SurfacePoint};
use crate::twisted::{orbit_integral, Observable, OrbitCache, QuadratureSpec};

/// Largest orbit time fed to the reducer.  Beyond this, a double-precision
/// time has lost the sub-unit resolution that reduced evaluation needs, so
/// the cap is enforced rather than worked around.
const ORBIT_TIME_CAP: f64 = 1e12;

/// Largest orbit time reachable by the unit-step march (one reduction per
/// unit of orbit time).
const MARCH_TIME_CAP: f64 = 1e8;

/// Hard cap on the number of stored block starts.
const BLOCK_CAP: usize = 10_000_000;

/// Size of the fixed sample batch behind [`NormalizedLift`]'s empirical sup.
const NORMALIZER_SAMPLES: u64 = 10_000;

// ---------------------------------------------------------------------------
// Deterministic summation
// ---------------------------------------------------------------------------

/// Pairwise (balanced binary tree) summation of `count` terms.  The tree
/// shape depends only on `count`, never on chunking, so any split of the
/// index range that respects the tree reproduces the result bit for bit.
fn tree_sum<F>(count: u64, mut term: F) -> Result<f64>
where
    F: FnMut(u64) -> Result<f64>,
{
    let mut stack: Vec<f64> = Vec::new();
    for i in 0..count {
        let mut v = term(i)?;
        for _ in 0..(i + 1).trailing_zeros() {
            v += stack.pop().expect("summation stack underflow");
        }
        stack.push(v);
    }
    Ok(stack.into_iter().fold(0.0, |acc, v| acc + v))
}

// ---------------------------------------------------------------------------
// Sparse times and their block decomposition
// ---------------------------------------------------------------------------

/// The sparse orbit time `n^{1+delta}`.
fn sparse_time(n: u64, delta: f64) -> f64 {
    if delta == 0.0 {
        n as f64
    } else {
        (n as f64).powf(1.0 + delta)
    }
}

fn validate_delta(delta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&delta) {
        return Err(HoroError::InvalidArgument(format!(
            "sparseness exponent must lie in [0, 1), got {delta}"
        )));
    }
    Ok(())
}

fn check_orbit_time(t: f64) -> Result<()> {
    if t > ORBIT_TIME_CAP {
        return Err(HoroError::PrecisionLimit(format!(
            "orbit time {t:.3e} exceeds the double-precision cap {ORBIT_TIME_CAP:.0e}"
        )));
    }
    if t > MARCH_TIME_CAP {
        return Err(HoroError::ResourceLimit(format!(
            "orbit time {t:.3e} would need more than {MARCH_TIME_CAP:.0e} unit-step reductions"
        )));
    }
    Ok(())
}

/// Walks an increasing sequence of orbit times, re-reducing after every
/// unit of orbit time so reducer inputs stay bounded regardless of the
/// absolute time reached (feeding `h_t` directly to the reducer loses the
/// determinant to round-off once `t` reaches the 1e5 range).
struct OrbitMarcher {
    frame: GroupElement,
    t: f64,
}

impl OrbitMarcher {
    fn new(x: &SurfacePoint) -> OrbitMarcher {
        OrbitMarcher { frame: x.reduced, t: 0.0 }
    }

    /// The reduced orbit point at `t_next >=` the previous time.
    fn advance_to(&mut self, t_next: f64) -> Result<SurfacePoint> {
        debug_assert!(t_next >= self.t, "orbit march must move forward");
        while t_next - self.t > 1.0 {
            self.frame = reduce(&self.frame.mul(&exp_stable(1.0)))?.reduced;
            self.t += 1.0;
        }
        let sp = reduce(&self.frame.mul(&exp_stable(t_next - self.t)))?;
        self.frame = sp.reduced;
        self.t = t_next;
        Ok(sp)
    }
}

/// Partition of an index range into consecutive blocks on which the sparse
/// time `n^{1+delta}` is affine up to a uniformly small error.
///
/// The starts satisfy `N_1 = floor(N^{1-eps}) + 1` and `N_{j+1} = N_j +
/// floor(N_j^{(1-delta)/2-eps})`; the stored list ends with the last start
/// `N_J <= N`.  The step `L_j = (1+delta) N_j^delta` is the slope of the
/// affine approximation on block `j`.
#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    pub delta: f64,
    pub epsilon: f64,
    pub n: u64,
    /// Block starts `N_1 < N_2 < ... < N_J <= n`.
    pub starts: Vec<u64>,
    /// Progression steps `L_j`, one per start.
    pub steps: Vec<f64>,
}

impl BlockDecomposition {
    /// Width `N_{j+1} - N_j` of block `j` (indices into `starts`).
    pub fn width(&self, j: usize) -> u64 {
        self.starts[j + 1] - self.starts[j]
    }
}

/// Builds the block decomposition of `[n^{1-eps}, n]` described on
/// [`BlockDecomposition`].
///
/// Requires `delta` in `[0, 1)`, `eps` in `(0, (1-delta)/2)` (so block
/// widths stay positive), and `n >= 2` (so the first start does not
/// overshoot `n`).
pub fn linearization_blocks(n: u64, delta: f64, epsilon: f64) -> Result<BlockDecomposition> {
    validate_delta(delta)?;
    if !(epsilon > 0.0 && epsilon < (1.0 - delta) / 2.0) {
        return Err(HoroError::InvalidArgument(format!(
            "linearization margin must lie in (0, (1-delta)/2) = (0, {}), got {epsilon}",
            (1.0 - delta) / 2.0
        )));
    }
    if n < 2 {
        return Err(HoroError::InvalidArgument(format!(
            "block decomposition needs n >= 2, got {n}"
        )));
    }
    let width_exp = (1.0 - delta) / 2.0 - epsilon;
    let first = (n as f64).powf(1.0 - epsilon).floor() as u64 + 1;
    let mut starts = vec![first];
    loop {
        let last = *starts.last().expect("starts is nonempty");
        let width = (last as f64).powf(width_exp).floor() as u64;
        debug_assert!(width >= 1, "block width must stay positive");
        let next = last + width;
        if next > n {
            break;
        }
        if starts.len() >= BLOCK_CAP {
            return Err(HoroError::ResourceLimit(format!(
                "block decomposition would exceed {BLOCK_CAP} blocks"
            )));
        }
        starts.push(next);
    }
    let steps = starts
        .iter()
        .map(|&nj| (1.0 + delta) * (nj as f64).powf(delta))
        .collect();
    Ok(BlockDecomposition { delta, epsilon, n, starts, steps })
}

/// Exact defect of the affine-in-`k` approximation of the sparse time:
/// `|(N_j + k)^{1+delta} - (N_j^{1+delta} + k (1+delta) N_j^delta)|`.
///
/// Requires `block_start >= 1` and `offset <= block_start`; on that range
/// the defect is bounded by `(1+delta) delta block_start^{delta-1} offset^2`.
pub fn linearization_error(block_start: u64, offset: u64, delta: f64) -> Result<f64> {
    validate_delta(delta)?;
    if block_start == 0 || offset > block_start {
        return Err(HoroError::InvalidArgument(format!(
            "need 1 <= block_start and offset <= block_start, got ({block_start}, {offset})"
        )));
    }
    let nj = block_start as f64;
    let k = offset as f64;
    let exact = (nj + k).powf(1.0 + delta);
    let affine = nj.powf(1.0 + delta) + k * (1.0 + delta) * nj.powf(delta);
    Ok((exact - affine).abs())
}

// ---------------------------------------------------------------------------
// Sparse averages
// ---------------------------------------------------------------------------

/// One sparse-time average `(1/N) sum_{n<N} f(h_{n^{1+delta}} x)`.
#[derive(Debug, Clone)]
pub struct SparseRecord {
    pub n: u64,
    pub average: f64,
    pub observable: String,
    pub x: SurfacePoint,
    pub delta: f64,
}

/// The sparse average of `obs` along `n^{1+delta}`, `n = 0..N-1`, with every
/// orbit point reduced before evaluation.
///
/// `delta = 0` specializes to the ordinary Birkhoff average of the time-one
/// map.  Fails with a precision-limit error when the largest orbit time
/// `(N-1)^{1+delta}` exceeds the double-precision cap.
pub fn sparse_average(
    obs: &dyn Observable,
    observable_id: &str,
    x: &SurfacePoint,
    delta: f64,
    n: u64,
) -> Result<SparseRecord> {
    validate_delta(delta)?;
    if n < 1 {
        return Err(HoroError::InvalidArgument(
            "sparse average needs at least one term".into(),
        ));
    }
    check_orbit_time(sparse_time(n - 1, delta))?;
    let mut march = OrbitMarcher::new(x);
    let sum = tree_sum(n, |i| {
        let p = march.advance_to(sparse_time(i, delta))?;
        Ok(obs.eval(&p))
    })?;
    Ok(SparseRecord {
        n,
        average: sum / n as f64,
        observable: observable_id.to_string(),
        x: *x,
        delta,
    })
}

/// Normalized gap between the sparse sum over `[N_1, N_J)` and the paired
/// progression sums `sum_j sum_{k < N_{j+1}-N_j} f(h_{N_j^{1+delta} + k L_j}
/// x)`, divided by `N`.
///
/// Both sides are reduced with the same summation tree over the same index
/// count, so a constant observable gives exactly zero.
pub fn progression_vs_sparse(
    obs: &dyn Observable,
    x: &SurfacePoint,
    delta: f64,
    epsilon: f64,
    n: u64,
) -> Result<f64> {
    let blocks = linearization_blocks(n, delta, epsilon)?;
    let starts = &blocks.starts;
    if starts.len() < 2 {
        return Ok(0.0);
    }
    let first = starts[0];
    let last = *starts.last().expect("starts is nonempty");
    check_orbit_time(sparse_time(last, delta))?;
    let count = last - first;
    let mut sparse_march = OrbitMarcher::new(x);
    let sparse = tree_sum(count, |i| {
        let p = sparse_march.advance_to(sparse_time(first + i, delta))?;
        Ok(obs.eval(&p))
    })?;
    // The progression times also increase across block seams: the affine
    // approximation undershoots the convex sparse time, so each block's
    // last term stays below the next block's start.
    let mut prog_march = OrbitMarcher::new(x);
    let mut j = 0usize;
    let mut k = 0u64;
    let progression = tree_sum(count, |_| {
        while k == starts[j + 1] - starts[j] {
            j += 1;
            k = 0;
        }
        let t = sparse_time(starts[j], delta) + k as f64 * blocks.steps[j];
        k += 1;
        let p = prog_march.advance_to(t)?;
        Ok(obs.eval(&p))
    })?;
    Ok((sparse - progression).abs() / n as f64)
}

/// Gap between the horocycle-map Riemann sum and the continuous orbit
/// integral: `|sum_{k<N} f(h_{Lk} x) - (1/L) int_0^{NL} f(h_t x) dt|`, with
/// the integral evaluated by the untwisted orbit quadrature.
pub fn map_sum_vs_flow(
    obs: &dyn Observable,
    x: &SurfacePoint,
    step: f64,
    n: u64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(HoroError::InvalidArgument(format!(
            "map step must be positive and finite, got {step}"
        )));
    }
    if n < 1 {
        return Err(HoroError::InvalidArgument(
            "map sum needs at least one term".into(),
        ));
    }
    let horizon = step * n as f64;
    check_orbit_time(horizon)?;
    let cache = OrbitCache::new(x, horizon)?;
    let sum = tree_sum(n, |k| Ok(obs.eval(&cache.point_at(step * k as f64)?)))?;
    let integral = orbit_integral(x, obs, horizon, quad)?;
    Ok((sum - integral.value.re / step).abs())
}

// ---------------------------------------------------------------------------
// The reference observable
// ---------------------------------------------------------------------------

/// Real part of the unit-tangent lift of the discriminant form, divided by
/// its empirical sup over a fixed batch of sampled points, so decay
/// thresholds quoted against it are scale-free.
pub struct NormalizedLift {
    form: CuspFormSpec,
    inv_sup: f64,
}

impl NormalizedLift {
    /// Builds the observable and its normalizer.  The sup is taken over the
    /// batch `sample_point(0..10_000)`, so the scale is deterministic.
    pub fn new() -> Result<NormalizedLift> {
        let form = CuspFormSpec::default_delta();
        let mut sup = 0.0f64;
        for seed in 0..NORMALIZER_SAMPLES {
            let x = sample_point(seed);
            sup = sup.max(lift(&form, &x.reduced)?.re.abs());
        }
        if !(sup > 0.0) {
            return Err(HoroError::InternalError(
                "empirical sup of the lifted form vanished on the sample batch".into(),
            ));
        }
        Ok(NormalizedLift { form, inv_sup: 1.0 / sup })
    }

    /// Stable identifier for result records.
    pub fn id(&self) -> &'static str {
        "re-lift-disc-normalized"
    }

    /// The normalizer `1 / sup`.
    pub fn scale(&self) -> f64 {
        self.inv_sup
    }
}

impl Observable for NormalizedLift {
    fn eval(&self, x: &SurfacePoint) -> f64 {
        self.inv_sup * lift(&self.form, &x.reduced).expect("lift evaluation failed").re
    }
}
