//! Error detection in working precision: atomic condition numbers along an
//! evaluation trace, whole-function condition numbers via finite
//! differences, randomized search for ill-conditioned inputs, and the
//! three-way repairability classification.
//!
//! Everything in this module runs entirely in binary64. It never consults
//! an extended-precision evaluator; large condition numbers, not reference
//! values, are the detection signal.

use crate::autodiff::{default_step, finite_diff, AutodiffError};
use crate::expr::{
    eval_working, BinaryOp, Domain, EvalTrace, FunctionDef, TraceOp, TraceRecord, UnaryOp,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default threshold above which an atomic condition number flags a point.
pub const DEFAULT_THETA_ATOMIC: f64 = 1e5;
/// Default threshold on the whole-function condition number separating
/// repairable from high-precision-only errors.
pub const DEFAULT_THETA_FUNC: f64 = 1e5;
/// Default absolute offset of classification probe points.
pub const DEFAULT_PROBE_OFFSET: f64 = 1e-5;

#[derive(Debug, Clone, Error)]
pub enum DetectError {
    #[error("condition undefined at root; probe a nearby point")]
    ConditionUndefinedAtRoot,
    #[error("function value non-finite at the requested point")]
    NonFiniteAtPoint,
    #[error(transparent)]
    Derivative(#[from] AutodiffError),
    #[error("classification inconclusive: function is zero at every probe point")]
    Inconclusive,
    #[error("parameter {param} has an empty search interval")]
    EmptyDomain { param: usize },
    #[error("search budget must be positive")]
    ZeroBudget,
    #[error("parameter {param} has an unbounded domain; supply a search box")]
    UnboundedDomain { param: usize },
}

/// Condition numbers of a single traced operation, one per operand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtomicConditionRecord {
    pub node_id: usize,
    pub op: TraceOp,
    pub operands: Vec<f64>,
    pub result: f64,
    /// |u * dg/du / g| per operand; +inf where the formula divides by an
    /// exact zero (the cancellation signature).
    pub conditions: Vec<f64>,
}

impl AtomicConditionRecord {
    /// Largest per-operand condition of this record; NaN entries (from
    /// non-finite operands) are ignored.
    pub fn max_condition(&self) -> f64 {
        self.conditions.iter().copied().fold(0.0, f64::max)
    }
}

/// Condition summary of one function at one point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionProfile {
    pub point: Vec<f64>,
    /// Per-parameter function condition numbers |x_i * df/dx_i / f|,
    /// finite-difference derivative.
    pub gammas: Vec<f64>,
    pub max_atomic: f64,
    /// Filled by the measurement harness when an oracle comparison ran.
    pub observed_relative_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassificationLabel {
    NoSignificantError,
    OriginalPrecisionRepairable,
    RequiresHighPrecision,
}

impl ClassificationLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClassificationLabel::NoSignificantError => "NoSignificantError",
            ClassificationLabel::OriginalPrecisionRepairable => "OriginalPrecisionRepairable",
            ClassificationLabel::RequiresHighPrecision => "RequiresHighPrecision",
        }
    }
}

/// Everything the classification rule looked at, for reporting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassificationEvidence {
    pub theta_atomic: f64,
    pub theta_func: f64,
    pub probe_offset: f64,
    pub max_atomic: f64,
    /// Per-parameter function conditions at the probe point; empty when
    /// the label was decided by the atomic threshold alone.
    pub gammas: Vec<f64>,
    /// Shared probe point where the Γ values were measured; None when the
    /// atomic threshold alone decided, or when every probe was degenerate.
    pub probe_point: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Classification {
    pub label: ClassificationLabel,
    pub evidence: ClassificationEvidence,
}

/// Thresholds and probe geometry used by `classify`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Thresholds {
    /// Flagging threshold on atomic condition numbers.
    pub theta_atomic: f64,
    /// Repairability cutoff on whole-function condition numbers.
    pub theta_func: f64,
    /// Absolute distance of probe points from the flagged point.
    pub probe_offset: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            theta_atomic: DEFAULT_THETA_ATOMIC,
            theta_func: DEFAULT_THETA_FUNC,
            probe_offset: DEFAULT_PROBE_OFFSET,
        }
    }
}

/// |num / den| with the convention that division by an exact zero is +inf.
fn cond_ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::INFINITY
    } else {
        (num / den).abs()
    }
}

fn unary_conditions(op: UnaryOp, u: f64, result: f64) -> Vec<f64> {
    match op {
        // Negation is exact: |u * (-1) / (-u)| = 1.
        UnaryOp::Neg => vec![1.0],
        UnaryOp::Sin => vec![cond_ratio(u * u.cos(), result)],
        UnaryOp::Cos => vec![cond_ratio(u * u.sin(), result)],
        UnaryOp::Tan => vec![cond_ratio(u, u.sin() * u.cos())],
        UnaryOp::Exp => vec![u.abs()],
        UnaryOp::Log => vec![cond_ratio(1.0, result)],
        UnaryOp::Sqrt => vec![0.5],
        UnaryOp::Asin => vec![cond_ratio(u, (1.0 - u * u).sqrt() * result)],
        UnaryOp::Acos => vec![cond_ratio(u, (1.0 - u * u).sqrt() * result)],
        UnaryOp::Atan => vec![cond_ratio(u, (1.0 + u * u) * result)],
    }
}

fn binary_conditions(op: BinaryOp, u: f64, v: f64, result: f64) -> Vec<f64> {
    match op {
        BinaryOp::Add | BinaryOp::Sub => {
            vec![cond_ratio(u, result), cond_ratio(v, result)]
        }
        BinaryOp::Mul | BinaryOp::Div => vec![1.0, 1.0],
        BinaryOp::Pow => vec![v.abs(), (v * u.ln()).abs()],
    }
}

/// Per-operand condition numbers for every operation in the trace.
///
/// For a node computing g(u, v, ...), the condition with respect to
/// operand u is |u * dg/du / g|. Division by an exact zero in any formula
/// (exact cancellation, function value exactly zero) yields +inf.
pub fn atomic_conditions(trace: &EvalTrace) -> Vec<AtomicConditionRecord> {
    trace
        .records
        .iter()
        .map(|rec: &TraceRecord| {
            let conditions = match rec.op {
                TraceOp::Unary(op) => unary_conditions(op, rec.operands[0], rec.result),
                TraceOp::Binary(op) => {
                    binary_conditions(op, rec.operands[0], rec.operands[1], rec.result)
                }
            };
            AtomicConditionRecord {
                node_id: rec.node_id,
                op: rec.op,
                operands: rec.operands.clone(),
                result: rec.result,
                conditions,
            }
        })
        .collect()
}

/// Largest atomic condition along the trace of `f` at `point`; None when
/// the evaluation is non-finite (no meaningful condition signal).
pub fn max_atomic_condition(f: &FunctionDef, point: &[f64]) -> Option<f64> {
    let trace = eval_working(f, point).1;
    if trace.nonfinite {
        return None;
    }
    Some(
        atomic_conditions(&trace)
            .iter()
            .map(AtomicConditionRecord::max_condition)
            .fold(0.0, f64::max),
    )
}

/// Whole-function condition number of `f` with respect to parameter `var`
/// at `point`: |x_var * finite_diff(f, point, var, h) / f(point)| with the
/// default step h = max(|x_var|, 1) * 2^-26.
pub fn function_condition(f: &FunctionDef, point: &[f64], var: usize) -> Result<f64, DetectError> {
    let (value, _) = eval_working(f, point);
    if !value.is_finite() {
        return Err(DetectError::NonFiniteAtPoint);
    }
    if value == 0.0 {
        return Err(DetectError::ConditionUndefinedAtRoot);
    }
    let x = point[var];
    let deriv = finite_diff(f, point, var, default_step(x))?;
    Ok((x * deriv / value).abs())
}

/// A point flagged by the search, with the largest atomic condition seen
/// on its trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlaggedPoint {
    pub point: Vec<f64>,
    pub max_atomic: f64,
}

/// Knobs for `search_error_inputs_with`.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    /// Number of stratified random samples.
    pub budget: usize,
    pub seed: u64,
    /// Flagging threshold; sample points below it are discarded.
    pub theta_atomic: f64,
    /// Maximum number of distinct flagged clusters refined and returned.
    pub max_clusters: usize,
    /// Golden-section iterations per coordinate during refinement.
    pub refine_iters: usize,
    /// Override box replacing the declared parameter domains (required
    /// when any domain is unbounded).
    pub search_box: Option<Vec<(f64, f64)>>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            budget: 4096,
            seed: 42,
            theta_atomic: DEFAULT_THETA_ATOMIC,
            max_clusters: 16,
            refine_iters: 64,
            search_box: None,
        }
    }
}

/// Searches the declared domain box for inputs with large atomic condition
/// numbers. Deterministic for a fixed seed: logarithmically-stratified
/// random sampling of `budget` points, thresholding at Θ_atomic, clustering
/// of the survivors, then coordinate-wise golden-section ascent (64
/// iterations per coordinate) on the max atomic condition of each cluster.
/// Results are sorted by descending condition.
pub fn search_error_inputs(
    f: &FunctionDef,
    budget: usize,
    seed: u64,
) -> Result<Vec<FlaggedPoint>, DetectError> {
    search_error_inputs_with(
        f,
        &SearchConfig {
            budget,
            seed,
            ..SearchConfig::default()
        },
    )
}

/// `search_error_inputs` with every knob exposed.
pub fn search_error_inputs_with(
    f: &FunctionDef,
    config: &SearchConfig,
) -> Result<Vec<FlaggedPoint>, DetectError> {
    if config.budget == 0 {
        return Err(DetectError::ZeroBudget);
    }
    let boxes = resolve_search_box(f, config.search_box.as_deref())?;
    let arity = f.arity();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Latin-hypercube strata: each coordinate visits every stratum exactly
    // once, in an independent random order, so sample i differs from a
    // plain product grid while still covering all scales.
    let strata: Vec<Vec<usize>> = (0..arity)
        .map(|_| shuffled_indices(config.budget, &mut rng))
        .collect();

    let mut kept: Vec<FlaggedPoint> = Vec::new();
    for i in 0..config.budget {
        let mut point = Vec::with_capacity(arity);
        for (v, dom) in boxes.iter().enumerate() {
            let u = (strata[v][i] as f64 + rng.gen::<f64>()) / config.budget as f64;
            point.push(place_in_interval(u, dom.0, dom.1));
        }
        clamp_into_domain(f, &boxes, &mut point);
        if let Some(val) = max_atomic_condition(f, &point) {
            if val >= config.theta_atomic {
                kept.push(FlaggedPoint {
                    point,
                    max_atomic: val,
                });
            }
        }
    }

    sort_flagged(&mut kept);
    let seeds = cluster_seeds(kept, &boxes, config.max_clusters);

    let mut peaks: Vec<FlaggedPoint> = Vec::new();
    for seed_pt in seeds {
        let refined = refine_peak(f, &boxes, seed_pt, config.refine_iters);
        // Refinement can converge two clusters onto the same basin.
        let dup = peaks
            .iter()
            .any(|p| points_close(&p.point, &refined.point, &boxes));
        if !dup {
            peaks.push(refined);
        }
    }
    sort_flagged(&mut peaks);
    Ok(peaks)
}

/// Classifies a flagged point by the two-threshold rule:
/// max atomic < Θ_atomic → NoSignificantError; otherwise max per-parameter
/// function condition Γ ≤ Θ_func → OriginalPrecisionRepairable, else
/// RequiresHighPrecision.
///
/// The Γ values are measured not at the flagged point itself (where f may
/// vanish) but at one shared probe displaced by `thresholds.probe_offset`
/// along every coordinate, so a coordinate held exactly at a root of f
/// still gets a meaningful Γ. Plus-side displacement is preferred per
/// coordinate (minus side where plus would leave the domain); if f is zero
/// or non-finite there, the probe with every preference flipped is tried.
/// f zero at every probe → inconclusive; f non-finite at every probe →
/// RequiresHighPrecision with all Γ conservatively +inf. A Γ_i whose
/// finite-difference derivative fails at the probe is likewise +inf.
pub fn classify(
    f: &FunctionDef,
    point: &[f64],
    thresholds: &Thresholds,
) -> Result<Classification, DetectError> {
    assert_eq!(point.len(), f.arity(), "point arity mismatch");
    let trace = eval_working(f, point).1;
    // A non-finite working evaluation at the point itself (0/0 at a
    // removable singularity, say) is maximal evidence of significance;
    // the probes nearby decide repairability.
    let max_atomic = if trace.nonfinite {
        f64::INFINITY
    } else {
        atomic_conditions(&trace)
            .iter()
            .map(AtomicConditionRecord::max_condition)
            .fold(0.0, f64::max)
    };

    if max_atomic < thresholds.theta_atomic {
        return Ok(Classification {
            label: ClassificationLabel::NoSignificantError,
            evidence: ClassificationEvidence {
                theta_atomic: thresholds.theta_atomic,
                theta_func: thresholds.theta_func,
                probe_offset: thresholds.probe_offset,
                max_atomic,
                gammas: Vec::new(),
                probe_point: None,
            },
        });
    }

    let mut chosen: Option<Vec<f64>> = None;
    let mut all_zero = true;
    for pref in [1.0, -1.0] {
        let probe: Vec<f64> = point
            .iter()
            .zip(&f.params)
            .map(|(&x, p)| {
                let fwd = x + pref * thresholds.probe_offset;
                let bwd = x - pref * thresholds.probe_offset;
                if p.domain.contains(fwd) {
                    fwd
                } else if p.domain.contains(bwd) {
                    bwd
                } else {
                    x
                }
            })
            .collect();
        let value = eval_working(f, &probe).0;
        if value != 0.0 {
            all_zero = false;
        }
        if value.is_finite() && value != 0.0 {
            chosen = Some(probe);
            break;
        }
    }

    let Some(probe) = chosen else {
        if all_zero {
            return Err(DetectError::Inconclusive);
        }
        return Ok(Classification {
            label: ClassificationLabel::RequiresHighPrecision,
            evidence: ClassificationEvidence {
                theta_atomic: thresholds.theta_atomic,
                theta_func: thresholds.theta_func,
                probe_offset: thresholds.probe_offset,
                max_atomic,
                gammas: vec![f64::INFINITY; f.arity()],
                probe_point: None,
            },
        });
    };

    let gammas: Vec<f64> = (0..f.arity())
        .map(|var| function_condition(f, &probe, var).unwrap_or(f64::INFINITY))
        .collect();
    let max_gamma = gammas.iter().copied().fold(0.0, f64::max);
    let label = if max_gamma <= thresholds.theta_func {
        ClassificationLabel::OriginalPrecisionRepairable
    } else {
        ClassificationLabel::RequiresHighPrecision
    };
    Ok(Classification {
        label,
        evidence: ClassificationEvidence {
            theta_atomic: thresholds.theta_atomic,
            theta_func: thresholds.theta_func,
            probe_offset: thresholds.probe_offset,
            max_atomic,
            gammas,
            probe_point: Some(probe),
        },
    })
}

/// Full condition profile (per-parameter Γ plus max atomic) at a point.
/// Parameters whose Γ is undefined at the point itself report NaN; the
/// classification path uses probes instead.
pub fn condition_profile(f: &FunctionDef, point: &[f64]) -> ConditionProfile {
    let gammas = (0..f.arity())
        .map(|var| function_condition(f, point, var).unwrap_or(f64::NAN))
        .collect();
    let max_atomic = max_atomic_condition(f, point).unwrap_or(f64::NAN);
    ConditionProfile {
        point: point.to_vec(),
        gammas,
        max_atomic,
        observed_relative_error: None,
    }
}

fn resolve_search_box(
    f: &FunctionDef,
    override_box: Option<&[(f64, f64)]>,
) -> Result<Vec<(f64, f64)>, DetectError> {
    let mut boxes = Vec::with_capacity(f.arity());
    for (i, p) in f.params.iter().enumerate() {
        let (lo, hi) = match override_box {
            Some(b) => {
                assert_eq!(b.len(), f.arity(), "search box arity mismatch");
                b[i]
            }
            None => {
                let d: &Domain = &p.domain;
                if !d.is_bounded() {
                    return Err(DetectError::UnboundedDomain { param: i });
                }
                (d.lo, d.hi)
            }
        };
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(DetectError::EmptyDomain { param: i });
        }
        boxes.push((lo, hi));
    }
    Ok(boxes)
}

fn shuffled_indices(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Maps a stratified u in [0, 1) into [lo, hi]: the first half of the unit
/// interval places points uniformly, the second half logarithmically by
/// magnitude (down to 18 decades below the interval scale), so samples
/// land both across the box and arbitrarily close to zero-crossings where
/// cancellation lives.
fn place_in_interval(u: f64, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    if u < 0.5 {
        let t = 2.0 * u;
        return lo + t * (hi - lo);
    }
    let t = 2.0 * (u - 0.5);
    if lo >= 0.0 {
        let floor = if lo > 0.0 { lo } else { hi * 1e-18 };
        log_uniform(t, floor, hi)
    } else if hi <= 0.0 {
        let floor = if hi < 0.0 { -hi } else { -lo * 1e-18 };
        -log_uniform(t, floor, -lo)
    } else {
        // Interval straddles zero: split the log strata between sides.
        if t < 0.5 {
            -log_uniform(2.0 * t, -lo * 1e-18, -lo)
        } else {
            log_uniform(2.0 * (t - 0.5), hi * 1e-18, hi)
        }
    }
}

/// Log-uniform position: floor * (cap/floor)^t for t in [0, 1).
fn log_uniform(t: f64, floor: f64, cap: f64) -> f64 {
    debug_assert!(floor > 0.0 && cap > floor);
    floor * (cap / floor).powf(t)
}

/// One binary64 step from x toward `toward`.
fn next_after(x: f64, toward: f64) -> f64 {
    if x == toward || x.is_nan() {
        return toward;
    }
    let bits = x.to_bits();
    let up = toward > x;
    let next = if x == 0.0 {
        if up {
            1u64
        } else {
            1u64 | (1u64 << 63)
        }
    } else if (x > 0.0) == up {
        bits + 1
    } else {
        bits - 1
    };
    f64::from_bits(next)
}

/// Clamps each coordinate into its box and, when an endpoint is excluded
/// by the declared domain, nudges one ulp inward.
fn clamp_into_domain(f: &FunctionDef, boxes: &[(f64, f64)], point: &mut [f64]) {
    for (v, x) in point.iter_mut().enumerate() {
        let (lo, hi) = boxes[v];
        *x = x.clamp(lo, hi);
        let d = &f.params[v].domain;
        let mut guard = 0;
        while !d.contains(*x) && guard < 4 {
            let mid = 0.5 * (lo + hi);
            *x = next_after(*x, mid);
            guard += 1;
        }
    }
}

fn sort_flagged(list: &mut [FlaggedPoint]) {
    list.sort_by(|a, b| {
        b.max_atomic
            .partial_cmp(&a.max_atomic)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                a.point
                    .iter()
                    .zip(&b.point)
                    .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
}

fn points_close(a: &[f64], b: &[f64], boxes: &[(f64, f64)]) -> bool {
    a.iter().zip(b).zip(boxes).all(|((x, y), (lo, hi))| {
        let width = hi - lo;
        if width == 0.0 {
            x == y
        } else {
            (x - y).abs() / width <= 0.05
        }
    })
}

/// Greedy clustering of threshold survivors (already sorted by descending
/// condition): a point within 5% of every coordinate width of an existing
/// seed joins that cluster, otherwise it seeds a new one, up to the cap.
fn cluster_seeds(
    kept: Vec<FlaggedPoint>,
    boxes: &[(f64, f64)],
    max_clusters: usize,
) -> Vec<FlaggedPoint> {
    let mut seeds: Vec<FlaggedPoint> = Vec::new();
    for cand in kept {
        if seeds.len() >= max_clusters {
            break;
        }
        if !seeds
            .iter()
            .any(|s| points_close(&s.point, &cand.point, boxes))
        {
            seeds.push(cand);
        }
    }
    seeds
}

/// Coordinate-wise golden-section ascent on the max atomic condition. The
/// bracket per coordinate is its full search interval; the best point ever
/// evaluated is kept, so refinement never loses ground to the seed.
fn refine_peak(
    f: &FunctionDef,
    boxes: &[(f64, f64)],
    start: FlaggedPoint,
    iters: usize,
) -> FlaggedPoint {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut best = start;
    for var in 0..boxes.len() {
        let (lo, hi) = boxes[var];
        if lo == hi {
            continue;
        }
        let eval_at = |t: f64, best: &mut FlaggedPoint| -> f64 {
            let mut p = best.point.clone();
            p[var] = t;
            clamp_into_domain(f, boxes, &mut p);
            let val = max_atomic_condition(f, &p).unwrap_or(f64::NEG_INFINITY);
            if val > best.max_atomic {
                best.max_atomic = val;
                best.point = p;
            }
            val
        };
        let (mut a, mut b) = (lo, hi);
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut gc = eval_at(c, &mut best);
        let mut gd = eval_at(d, &mut best);
        for _ in 0..iters {
            if gc > gd {
                b = d;
                d = c;
                gd = gc;
                c = b - INV_PHI * (b - a);
                gc = eval_at(c, &mut best);
            } else {
                a = c;
                c = d;
                gc = gd;
                d = a + INV_PHI * (b - a);
                gd = eval_at(d, &mut best);
            }
        }
    }
    best
}
