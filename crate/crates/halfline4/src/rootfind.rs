//! Zeros of the Fredholm determinant: argument-principle counting, seeded
//! Newton refinement, and quadrant statistics.
//!
//! `D` is entire, so the number of zeros inside a contour equals the winding
//! of `D` along it.  All windings here come from continuous phase tracking
//! with adaptive bisection of the contour parameter (phase steps are forced
//! below `π/2`), which makes the integer output self-validating.
//!
//! Two evaluation regimes are used:
//!
//! * **Direct.**  Near the resonance curves (moderate `|k|`), `D` is
//!   evaluated from the Nyström determinant at one fixed order chosen by a
//!   convergence probe; a fixed order keeps the tracked function smooth in
//!   `k` (an order switch mid-contour would inject spurious phase).
//! * **Identity-mapped.**  Deep in the left half plane the direct Nyström
//!   determinant loses all accuracy to cancellation, so quadrant counts map
//!   each sector back to the first quadrant `K₁` (where `D` is tame) through
//!   the continuation identities: zeros in `K₂` are counted by winding
//!   `D(k)·S(k)` over the `K₁` sector (`D(ik) = D(k)S(k)`), zeros in `K₃` by
//!   winding `D(k)·det Ω(k)` (`D(−k) = D(k)det Ω(k)`), and the `K₄` count
//!   equals the `K₂` count because `D(ζ) = conj(D(conj ζ)·S(conj ζ))`: the
//!   conjugations flip both the traversal direction and the phase sign, so
//!   the winding integer is unchanged.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::ops::RangeInclusive;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coeffs::CoeffPair;
use crate::error::{Error, Result};
use crate::fredholm::{log_det_at_order, suggested_order, wrap_phase};
use crate::kernels;
use crate::scattering::k1_log_bundle;

const I: Complex64 = Complex64::new(0.0, 1.0);
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Hard cap on determinant evaluations per tracked contour.
pub const MAX_CONTOUR_SAMPLES: usize = 1 << 14;

/// `|D|` below this on a contour aborts the winding computation.  The
/// threshold sits well above the LU noise floor of the determinant (so a
/// sample that bisection has driven onto a zero is recognized as such) and
/// far below any legitimate contour value: a sample this small means the
/// contour passes within `~1e-9/|D′|` of a zero, where the winding integer
/// is ill-conditioned anyway and the caller should nudge the contour.
const ZERO_ON_CONTOUR_ABS: f64 = 1e-9;

/// Open quadrant (sector of aperture `π/2`) containing a point; boundary
/// points are pushed counterclockwise (`K₁` owns both its bounding rays).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrant {
    /// `Re k ≥ 0, Im k ≥ 0` — determinant tends to 1, zeros are eigenvalue
    /// images.
    K1,
    /// `Re k < 0, Im k ≥ 0` — resonance strip along the logarithmic curve.
    K2,
    /// `Re k < 0, Im k < 0`.
    K3,
    /// `Re k ≥ 0, Im k < 0` — mirror of `K₂` under `ζ ↦ i·conj ζ`.
    K4,
}

impl Quadrant {
    /// Quadrant of a nonzero point.
    pub fn of(k: Complex64) -> Quadrant {
        if k.im >= 0.0 {
            if k.re >= 0.0 {
                Quadrant::K1
            } else {
                Quadrant::K2
            }
        } else if k.re < 0.0 {
            Quadrant::K3
        } else {
            Quadrant::K4
        }
    }
}

/// Result of one circular argument-principle contour.
#[derive(Clone, Copy, Debug)]
pub struct ContourCount {
    /// Circle center.
    pub center: Complex64,
    /// Circle radius actually used (may be nudged up 0.5% once if a zero
    /// sat on the original contour).
    pub radius: f64,
    /// Number of zeros enclosed, counted with multiplicity.
    pub winding: i64,
    /// Determinant evaluations spent.
    pub samples: usize,
    /// Smallest `|D|` seen on the contour (saturates at `f64::MAX`).
    pub min_abs_d: f64,
    /// Largest `|D|` seen on the contour (saturates at `f64::MAX`).
    pub max_abs_d: f64,
}

/// One located zero of `D`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Zero {
    /// Location.
    pub k: Complex64,
    /// Micro-contour winding around the converged point.
    pub multiplicity: usize,
    /// Quadrant of `k`.
    pub quadrant: Quadrant,
    /// `|D(k)|` at the converged point.
    pub residual: f64,
}

/// A search box that could not be resolved into converged zeros.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UnresolvedBox {
    /// Box or disc center.
    pub center: Complex64,
    /// Half-diagonal (boxes) or radius (seed discs).
    pub radius: f64,
    /// Winding observed on the box contour, when available.
    pub winding: Option<i64>,
    /// Why the box was abandoned.
    pub reason: String,
}

/// Zeros found in a region, with any boxes the search could not resolve.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ResonanceSet {
    /// Converged zeros, sorted by `(Re k, Im k)`.
    pub zeros: Vec<Zero>,
    /// Boxes reported rather than silently dropped.
    pub unresolved: Vec<UnresolvedBox>,
}

/// Axis-aligned search rectangle.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SearchRegion {
    /// Real-part range.
    pub re_min: f64,
    /// Real-part range.
    pub re_max: f64,
    /// Imaginary-part range.
    pub im_min: f64,
    /// Imaginary-part range.
    pub im_max: f64,
}

impl SearchRegion {
    fn center(&self) -> Complex64 {
        Complex64::new(
            0.5 * (self.re_min + self.re_max),
            0.5 * (self.im_min + self.im_max),
        )
    }
    fn half_diag(&self) -> f64 {
        0.5 * Complex64::new(self.re_max - self.re_min, self.im_max - self.im_min).norm()
    }
    fn contains(&self, k: Complex64, slack: f64) -> bool {
        k.re >= self.re_min - slack
            && k.re <= self.re_max + slack
            && k.im >= self.im_min - slack
            && k.im <= self.im_max + slack
    }
}

/// Per-quadrant zero counts inside the annulus `k_min < |k| < r`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CountRow {
    /// Outer radius.
    pub r: f64,
    /// Zeros in `K₁` (direct winding).
    pub n1: i64,
    /// Zeros in `K₂` (winding of `D·S` over the `K₁` sector).
    pub n2: i64,
    /// Zeros in `K₃` (winding of `D·det Ω` over the `K₁` sector).
    pub n3: i64,
    /// Zeros in `K₄` (= `n2` by the conjugation symmetry).
    pub n4: i64,
    /// Full-annulus winding, cross-checked against `n1+n2+n3+n4`.
    pub total: i64,
}

/// Asymptotic seed pair of index `n`: the `K₂` seed on the logarithmic
/// resonance curve and its `K₃` companion.
#[derive(Clone, Copy, Debug)]
pub struct SeedPair {
    /// Index.
    pub n: usize,
    /// `K₂` seed `(iπ jₙ − log(2πn/(γ|2p₊|^{1/2})))/γ` with `jₙ = n` for
    /// `p₊ > 0` and `n + 1/2` for `p₊ < 0`.
    pub upper: Complex64,
    /// `K₃` companion `i·upper − π/(2γ)`.
    pub lower: Complex64,
}

/// Seed lattice for the resonances of a coefficient pair whose `p` has a
/// nonzero boundary value `p₊` at the support end.
pub fn asymptotic_seeds(
    p_plus: f64,
    gamma: f64,
    range: RangeInclusive<usize>,
) -> Result<Vec<SeedPair>> {
    if p_plus == 0.0 {
        return Err(Error::InvalidInput(
            "the seed lattice requires a nonzero boundary value p₊".into(),
        ));
    }
    if gamma <= 0.0 {
        return Err(Error::InvalidInput("support length must be positive".into()));
    }
    let mut seeds = Vec::new();
    for n in range {
        if n == 0 {
            continue;
        }
        let j_n = if p_plus > 0.0 {
            n as f64
        } else {
            n as f64 + 0.5
        };
        let scale = (2.0 * std::f64::consts::PI * n as f64)
            / (gamma * (2.0 * p_plus).abs().sqrt());
        let upper = (I * std::f64::consts::PI * j_n - scale.ln()) / gamma;
        let lower = I * upper - std::f64::consts::PI / (2.0 * gamma);
        seeds.push(SeedPair { n, upper, lower });
    }
    Ok(seeds)
}

// ---------------------------------------------------------------------------
// Phase tracking
// ---------------------------------------------------------------------------

/// Accumulated result of tracking a log-form function along one contour.
struct PhaseTrack {
    /// Total continuous change of the argument.
    delta: f64,
    min_log: f64,
    max_log: f64,
    samples: usize,
}

/// Minimum initial sample count for a contour piece of the given length in
/// the `k`-plane.
///
/// The tracked functions have logarithmic derivative bounded by a small
/// multiple of `γ` (they are products of exponentials of type ≤ `2√2·γ` and
/// low-degree factors), so a spacing of `1/(4γ)` keeps every true phase step
/// well under `π/2`.  Bisection alone could alias: a wrapped step only sees
/// the phase change modulo `2π`.
pub(crate) fn min_samples(len: f64, gamma: f64) -> usize {
    8 + (len * 4.0 * gamma).ceil() as usize
}

/// Tracks `arg f` continuously along `path(t), t ∈ [0, 1]`, where `value`
/// returns `(log|f|, arg f)`: seeds the contour with `min_points` uniform
/// samples, then bisects in `t` until every phase step is below `π/2`.
fn track_phase(
    path: &dyn Fn(f64) -> Complex64,
    value: &mut dyn FnMut(Complex64) -> Result<(f64, f64)>,
    budget: &mut usize,
    min_points: usize,
) -> Result<PhaseTrack> {
    let m = min_points.max(2);
    let mut pts = Vec::with_capacity(m);
    for j in 0..m {
        let t = j as f64 / (m - 1) as f64;
        let k = path(t);
        pts.push((t, sample(k, value, budget)?));
    }
    let mut track = PhaseTrack {
        delta: 0.0,
        min_log: pts.iter().map(|p| p.1 .0).fold(f64::INFINITY, f64::min),
        max_log: pts.iter().map(|p| p.1 .0).fold(f64::NEG_INFINITY, f64::max),
        samples: m,
    };
    for w in pts.windows(2) {
        segment(path, value, budget, w[0], w[1], &mut track)?;
    }
    Ok(track)
}

fn sample(
    k: Complex64,
    value: &mut dyn FnMut(Complex64) -> Result<(f64, f64)>,
    budget: &mut usize,
) -> Result<(f64, f64)> {
    if *budget == 0 {
        return Err(Error::PhaseJump {
            from: k,
            to: k,
            jump: f64::NAN,
        });
    }
    *budget -= 1;
    let v = value(k)?;
    if v.0 < ZERO_ON_CONTOUR_ABS.ln() {
        return Err(Error::ZeroOnContour {
            at: k,
            modulus: v.0.exp(),
        });
    }
    Ok(v)
}

fn segment(
    path: &dyn Fn(f64) -> Complex64,
    value: &mut dyn FnMut(Complex64) -> Result<(f64, f64)>,
    budget: &mut usize,
    lo: (f64, (f64, f64)),
    hi: (f64, (f64, f64)),
    track: &mut PhaseTrack,
) -> Result<()> {
    let step = wrap_phase(hi.1 .1 - lo.1 .1);
    if step.abs() < FRAC_PI_2 {
        track.delta += step;
        return Ok(());
    }
    if *budget == 0 {
        return Err(Error::PhaseJump {
            from: path(lo.0),
            to: path(hi.0),
            jump: step,
        });
    }
    let tm = 0.5 * (lo.0 + hi.0);
    if tm <= lo.0 || tm >= hi.0 {
        return Err(Error::PhaseJump {
            from: path(lo.0),
            to: path(hi.0),
            jump: step,
        });
    }
    let vm = sample(path(tm), value, budget)?;
    track.samples += 1;
    track.min_log = track.min_log.min(vm.0);
    track.max_log = track.max_log.max(vm.0);
    segment(path, value, budget, lo, (tm, vm), track)?;
    segment(path, value, budget, (tm, vm), hi, track)
}

/// Rounds a phase total to the nearest winding integer, failing loudly when
/// the total is not close to an integer multiple of `2π`.
fn round_winding(delta: f64, from: Complex64, to: Complex64) -> Result<i64> {
    let w = (delta / TWO_PI).round();
    if (delta / TWO_PI - w).abs() > 0.15 {
        return Err(Error::PhaseJump {
            from,
            to,
            jump: delta,
        });
    }
    Ok(w as i64)
}

/// Cached fixed-order determinant evaluator.
struct DetEval<'a> {
    pair: &'a CoeffPair,
    order: usize,
    cache: HashMap<(u64, u64), (f64, f64)>,
}

impl<'a> DetEval<'a> {
    fn new(pair: &'a CoeffPair, order: usize) -> Self {
        DetEval {
            pair,
            order,
            cache: HashMap::new(),
        }
    }
    fn log_det(&mut self, k: Complex64) -> Result<(f64, f64)> {
        let key = (k.re.to_bits(), k.im.to_bits());
        if let Some(&v) = self.cache.get(&key) {
            return Ok(v);
        }
        let v = log_det_at_order(self.pair, k, self.order)?;
        self.cache.insert(key, v);
        Ok(v)
    }
    fn det(&mut self, k: Complex64) -> Result<Complex64> {
        let (lm, ph) = self.log_det(k)?;
        Ok(Complex64::from_polar(lm.exp(), ph))
    }
}

/// Picks one fixed per-piece order adequate for every sample point: starts
/// from the oscillation-based suggestion and doubles until the determinant
/// at the worst sample moves by less than `1e-6` relative between orders.
pub fn evaluation_order(pair: &CoeffPair, samples: &[Complex64]) -> Result<usize> {
    let mut order = samples
        .iter()
        .map(|&k| suggested_order(pair.gamma(), k))
        .max()
        .unwrap_or(48);
    if pair.is_free() {
        return Ok(order);
    }
    let probe = samples
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(Complex64::new(1.0, 1.0));
    while order < 512 {
        let (lm_a, ph_a) = log_det_at_order(pair, probe, order)?;
        let (lm_b, ph_b) = log_det_at_order(pair, probe, 2 * order)?;
        let rel = ((lm_a - lm_b).powi(2) + wrap_phase(ph_a - ph_b).powi(2)).sqrt();
        if rel <= 1e-6 {
            return Ok(order);
        }
        order *= 2;
    }
    Ok(512)
}

/// Winding of `D` around the circle `|k − center| = radius`.
///
/// The contour must stay outside the disc `|k| < k_min`.  If a determinant
/// zero sits on the contour (`|D| < 1e-12`), the radius is nudged up by
/// 0.5% once before giving up.
pub fn winding_number(
    pair: &CoeffPair,
    center: Complex64,
    radius: f64,
    order: Option<usize>,
) -> Result<ContourCount> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput("contour radius must be positive".into()));
    }
    let k_min = kernels::k_min(pair.gamma());
    if center.norm() - radius < k_min {
        return Err(Error::InvalidInput(format!(
            "contour around {center} with radius {radius} enters the excluded disc |k| < {k_min}"
        )));
    }
    let order = match order {
        Some(o) => o,
        None => {
            let probes: Vec<Complex64> = (0..4)
                .map(|j| center + radius * (I * (TWO_PI * j as f64 / 4.0)).exp())
                .collect();
            evaluation_order(pair, &probes)?
        }
    };
    let mut eval = DetEval::new(pair, order);
    let gamma = pair.gamma();
    let attempt = |r: f64, eval: &mut DetEval| -> Result<(PhaseTrack, f64)> {
        let path = move |t: f64| center + r * (I * (TWO_PI * t)).exp();
        let mut budget = MAX_CONTOUR_SAMPLES;
        let pts = min_samples(TWO_PI * r, gamma);
        let track = track_phase(&path, &mut |k| eval.log_det(k), &mut budget, pts)?;
        Ok((track, r))
    };
    let (track, used_radius) = match attempt(radius, &mut eval) {
        Ok(v) => v,
        Err(Error::ZeroOnContour { .. }) => attempt(radius * 1.005, &mut eval)?,
        Err(e) => return Err(e),
    };
    let winding = round_winding(track.delta, center + used_radius, center + used_radius)?;
    Ok(ContourCount {
        center,
        radius: used_radius,
        winding,
        samples: track.samples,
        min_abs_d: saturating_exp(track.min_log),
        max_abs_d: saturating_exp(track.max_log),
    })
}

fn saturating_exp(l: f64) -> f64 {
    if l > f64::MAX.ln() {
        f64::MAX
    } else {
        l.exp()
    }
}

/// Winding of a log-form function around an axis-aligned rectangle.
fn rect_winding_of(
    value: &mut dyn FnMut(Complex64) -> Result<(f64, f64)>,
    gamma: f64,
    region: &SearchRegion,
) -> Result<(i64, f64, f64)> {
    let corners = [
        Complex64::new(region.re_min, region.im_min),
        Complex64::new(region.re_max, region.im_min),
        Complex64::new(region.re_max, region.im_max),
        Complex64::new(region.re_min, region.im_max),
    ];
    let mut delta = 0.0;
    let mut min_log = f64::INFINITY;
    let mut max_log = f64::NEG_INFINITY;
    let mut budget = MAX_CONTOUR_SAMPLES;
    for e in 0..4 {
        let (a, b) = (corners[e], corners[(e + 1) % 4]);
        let path = move |t: f64| a + t * (b - a);
        let pts = min_samples((b - a).norm(), gamma);
        let track = track_phase(&path, value, &mut budget, pts)?;
        delta += track.delta;
        min_log = min_log.min(track.min_log);
        max_log = max_log.max(track.max_log);
    }
    let w = round_winding(delta, corners[0], corners[0])?;
    Ok((w, min_log, max_log))
}

/// Winding of `D` around an axis-aligned rectangle.
#[cfg(test)]
fn rect_winding(eval: &mut DetEval, region: &SearchRegion) -> Result<(i64, f64, f64)> {
    let gamma = eval.pair.gamma();
    rect_winding_of(&mut |k| eval.log_det(k), gamma, region)
}

/// Newton iteration on a function given in log form, with the derivative by
/// central differences (`h = 1e-5·(1 + |k|)`).
///
/// Each iteration rebases the three samples by `|f(k)|`, so the method is
/// insensitive to the absolute scale of `f` — it works equally for the
/// determinant near 1 and for identity-mapped products whose modulus is
/// astronomically large.  `tol_scale` is the relative step size accepted as
/// converged; evaluators with a noisy tail (solve-based products) need a
/// looser value than the plain determinant.
fn newton_refine_log(
    value: &mut dyn FnMut(Complex64) -> Result<(f64, f64)>,
    start: Complex64,
    leash: f64,
    tol_scale: f64,
) -> std::result::Result<Complex64, String> {
    let mut k = start;
    for _ in 0..60 {
        let v0 = value(k).map_err(|e| e.to_string())?;
        let h = 1e-5 * (1.0 + k.norm());
        let vp = value(k + h).map_err(|e| e.to_string())?;
        let vm = value(k - h).map_err(|e| e.to_string())?;
        let d = Complex64::from_polar(1.0, v0.1);
        let dp = Complex64::from_polar((vp.0 - v0.0).exp(), vp.1);
        let dm = Complex64::from_polar((vm.0 - v0.0).exp(), vm.1);
        let deriv = (dp - dm) / (2.0 * h);
        if deriv.norm() == 0.0 {
            return Err("vanishing derivative estimate".into());
        }
        let step = d / deriv;
        k -= step;
        if (k - start).norm() > leash {
            return Err(format!("left the search box (landed at {k})"));
        }
        if step.norm() <= tol_scale * (1.0 + k.norm()) {
            return Ok(k);
        }
    }
    Err("no convergence in 60 iterations".into())
}

/// Newton iteration on `D` itself.
fn newton_refine(
    eval: &mut DetEval,
    start: Complex64,
    leash: f64,
) -> std::result::Result<Complex64, String> {
    newton_refine_log(&mut |k| eval.log_det(k), start, leash, 1e-11)
}

/// Multiplicity of a converged zero of a log-form function via a
/// micro-contour of radius `1e-3·(1 + |ζ|)`.
fn multiplicity_of(
    value: &mut dyn FnMut(Complex64) -> Result<(f64, f64)>,
    gamma: f64,
    zeta: Complex64,
) -> Result<i64> {
    let r = 1e-3 * (1.0 + zeta.norm());
    let path = move |t: f64| zeta + r * (I * (TWO_PI * t)).exp();
    let mut budget = MAX_CONTOUR_SAMPLES;
    let pts = min_samples(TWO_PI * r, gamma);
    let track = track_phase(&path, value, &mut budget, pts)?;
    round_winding(track.delta, zeta + r, zeta + r)
}

/// Multiplicity of a converged zero of `D`.
fn multiplicity_at(eval: &mut DetEval, zeta: Complex64) -> Result<i64> {
    let gamma = eval.pair.gamma();
    multiplicity_of(&mut |k| eval.log_det(k), gamma, zeta)
}

/// Locates zeros of `D` in a rectangle, or around explicit seed points.
///
/// With `seeds`, each seed gets a disc of radius `π/(4γ)`: a winding count,
/// then Newton refinement from the seed, then a multiplicity micro-contour.
/// Without seeds the rectangle is bisected adaptively on box windings.
/// Boxes that cannot be resolved are reported in
/// [`ResonanceSet::unresolved`], never dropped.
pub fn find_resonances(
    pair: &CoeffPair,
    region: &SearchRegion,
    seeds: Option<&[Complex64]>,
) -> Result<ResonanceSet> {
    if region.re_max <= region.re_min || region.im_max <= region.im_min {
        return Err(Error::InvalidInput("empty search region".into()));
    }
    if pair.is_free() {
        return Ok(ResonanceSet::default());
    }
    let corners = [
        Complex64::new(region.re_min, region.im_min),
        Complex64::new(region.re_max, region.im_max),
        Complex64::new(region.re_min, region.im_max),
        Complex64::new(region.re_max, region.im_min),
    ];
    let order = evaluation_order(pair, &corners)?;
    let mut eval = DetEval::new(pair, order);
    let mut set = ResonanceSet::default();

    match seeds {
        Some(seeds) => {
            let disc = std::f64::consts::FRAC_PI_4 / pair.gamma();
            for &seed in seeds {
                if !region.contains(seed, disc) {
                    continue;
                }
                refine_one(&mut eval, seed, disc, &mut set)?;
            }
        }
        None => {
            let gamma = pair.gamma();
            let found = sweep_boxes(
                &mut |k| eval.log_det(k),
                gamma,
                region,
                1e-11,
                &mut set.unresolved,
            )?;
            for (zeta, mult) in found {
                let residual = eval.det(zeta)?.norm();
                set.zeros.push(Zero {
                    k: zeta,
                    multiplicity: mult as usize,
                    quadrant: Quadrant::of(zeta),
                    residual,
                });
            }
        }
    }
    dedup_zeros(&mut set.zeros);
    Ok(set)
}

/// Adaptive box subdivision on rectangle windings of an arbitrary log-form
/// function: splits while a box holds more than one zero, Newton-refines
/// once a box is down to a single zero (or small enough), and measures each
/// converged zero's multiplicity on a micro-contour.  Boxes that cannot be
/// resolved land in `unresolved`; they are never silently dropped.
fn sweep_boxes(
    value: &mut dyn FnMut(Complex64) -> Result<(f64, f64)>,
    gamma: f64,
    region: &SearchRegion,
    newton_tol: f64,
    unresolved: &mut Vec<UnresolvedBox>,
) -> Result<Vec<(Complex64, i64)>> {
    let mut found = Vec::new();
    let mut queue = vec![(nudge_region(region, gamma)?, 0usize)];
    while let Some((boxr, depth)) = queue.pop() {
        let (w, _min_log, _max_log) = match rect_winding_of(value, gamma, &boxr) {
            Ok(v) => v,
            Err(e) => {
                unresolved.push(UnresolvedBox {
                    center: boxr.center(),
                    radius: boxr.half_diag(),
                    winding: None,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        if w == 0 {
            continue;
        }
        let small = boxr.half_diag() < 0.35 / gamma;
        if (w == 1 || small) && depth > 0 {
            let leash = 1.3 * boxr.half_diag();
            match newton_refine_log(value, boxr.center(), 2.0 * leash, newton_tol) {
                // Only a zero inside this very box is trustworthy here: the
                // iteration can slide into a neighboring box's zero, which
                // would both duplicate that zero and silently orphan this
                // box's own.  Escapes fall through to subdivision.
                Ok(zeta) if boxr.contains(zeta, 1e-3 * boxr.half_diag()) => {
                    let duplicate = found
                        .iter()
                        .any(|&(z, _): &(Complex64, i64)| {
                            (z - zeta).norm() < 1e-6 * (1.0 + z.norm())
                        });
                    if duplicate {
                        continue;
                    }
                    match multiplicity_of(value, gamma, zeta) {
                        Ok(m) if m >= 1 => {
                            found.push((zeta, m));
                            if m < w && depth < 14 {
                                // More zeros hide in this box than the one
                                // just recorded; keep splitting (the found
                                // zero dedups away on re-encounter).
                                for half in split_region(&boxr) {
                                    queue.push((half, depth + 1));
                                }
                            } else if m < w {
                                unresolved.push(UnresolvedBox {
                                    center: boxr.center(),
                                    radius: boxr.half_diag(),
                                    winding: Some(w - m),
                                    reason: "bisection depth exhausted".into(),
                                });
                            }
                        }
                        Ok(m) => unresolved.push(UnresolvedBox {
                            center: boxr.center(),
                            radius: leash,
                            winding: Some(m),
                            reason: format!("micro-contour winding {m} at candidate {zeta}"),
                        }),
                        Err(e) => unresolved.push(UnresolvedBox {
                            center: boxr.center(),
                            radius: leash,
                            winding: None,
                            reason: e.to_string(),
                        }),
                    }
                }
                Ok(_) | Err(_) if depth < 14 => {
                    for half in split_region(&boxr) {
                        queue.push((half, depth + 1));
                    }
                }
                Ok(zeta) => unresolved.push(UnresolvedBox {
                    center: boxr.center(),
                    radius: leash,
                    winding: Some(w),
                    reason: format!("refinement escaped the box (landed at {zeta})"),
                }),
                Err(reason) => unresolved.push(UnresolvedBox {
                    center: boxr.center(),
                    radius: leash,
                    winding: Some(w),
                    reason,
                }),
            }
        } else if depth >= 14 {
            unresolved.push(UnresolvedBox {
                center: boxr.center(),
                radius: boxr.half_diag(),
                winding: Some(w),
                reason: "bisection depth exhausted".into(),
            });
        } else {
            for half in split_region(&boxr) {
                queue.push((half, depth + 1));
            }
        }
    }
    Ok(found)
}

/// Newton + multiplicity around one candidate location; failures become
/// unresolved entries.
fn refine_one(
    eval: &mut DetEval,
    start: Complex64,
    leash: f64,
    set: &mut ResonanceSet,
) -> Result<()> {
    match newton_refine(eval, start, 2.0 * leash) {
        Ok(zeta) => {
            let mult = match multiplicity_at(eval, zeta) {
                Ok(m) if m >= 1 => m as usize,
                Ok(m) => {
                    set.unresolved.push(UnresolvedBox {
                        center: start,
                        radius: leash,
                        winding: Some(m),
                        reason: format!("micro-contour winding {m} at candidate {zeta}"),
                    });
                    return Ok(());
                }
                Err(e) => {
                    set.unresolved.push(UnresolvedBox {
                        center: start,
                        radius: leash,
                        winding: None,
                        reason: e.to_string(),
                    });
                    return Ok(());
                }
            };
            let residual = eval.det(zeta)?.norm();
            set.zeros.push(Zero {
                k: zeta,
                multiplicity: mult,
                quadrant: Quadrant::of(zeta),
                residual,
            });
            Ok(())
        }
        Err(reason) => {
            set.unresolved.push(UnresolvedBox {
                center: start,
                radius: leash,
                winding: None,
                reason,
            });
            Ok(())
        }
    }
}

/// Keeps rectangle edges away from the origin's excluded disc and off the
/// immediate vicinity of the axes' crossing at 0.
fn nudge_region(region: &SearchRegion, gamma: f64) -> Result<SearchRegion> {
    let guard = (1e-2_f64).max(kernels::k_min(gamma) * 1.2);
    let mut r = *region;
    for v in [&mut r.re_min, &mut r.re_max, &mut r.im_min, &mut r.im_max] {
        if v.abs() < guard {
            *v = if *v >= 0.0 { guard } else { -guard };
        }
    }
    if r.re_min < 0.0 && r.re_max > 0.0 && r.im_min < 0.0 && r.im_max > 0.0 {
        return Err(Error::InvalidInput(
            "search region must not contain the origin; split it into per-quadrant rectangles"
                .into(),
        ));
    }
    if r.re_max <= r.re_min || r.im_max <= r.im_min {
        return Err(Error::InvalidInput(
            "search region collapses after excluding the origin's neighborhood".into(),
        ));
    }
    Ok(r)
}

fn split_region(r: &SearchRegion) -> [SearchRegion; 2] {
    if r.re_max - r.re_min >= r.im_max - r.im_min {
        let mid = 0.5 * (r.re_min + r.re_max);
        [
            SearchRegion { re_max: mid, ..*r },
            SearchRegion { re_min: mid, ..*r },
        ]
    } else {
        let mid = 0.5 * (r.im_min + r.im_max);
        [
            SearchRegion { im_max: mid, ..*r },
            SearchRegion { im_min: mid, ..*r },
        ]
    }
}

fn dedup_zeros(zeros: &mut Vec<Zero>) {
    zeros.sort_by(|a, b| (a.k.re, a.k.im).partial_cmp(&(b.k.re, b.k.im)).unwrap());
    zeros.dedup_by(|b, a| {
        let same = (a.k - b.k).norm() <= 1e-7 * (1.0 + a.k.norm());
        if same && b.residual < a.residual {
            a.k = b.k;
            a.residual = b.residual;
        }
        same
    });
}

// ---------------------------------------------------------------------------
// Quadrant counting
// ---------------------------------------------------------------------------

/// Which first-quadrant-mapped function a tracked contour evaluates.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Mapped {
    /// `D(k)` itself (counts `K₁`).
    Plain,
    /// `D(k)·S(k)` (counts `K₂`, and `K₄` by conjugation).
    TimesS,
    /// `D(k)·det Ω(k)` (counts `K₃`).
    TimesOmega,
}

/// Cached bundle evaluator for the mapped functions.
struct BundleEval<'a> {
    pair: &'a CoeffPair,
    order: usize,
    cache: HashMap<(u64, u64), (f64, f64, Complex64, Complex64)>,
}

impl<'a> BundleEval<'a> {
    fn new(pair: &'a CoeffPair, order: usize) -> Self {
        BundleEval {
            pair,
            order,
            cache: HashMap::new(),
        }
    }
    /// `(log|D|, arg D, S, det Ω)` at `k`, cached.
    fn bundle(&mut self, k: Complex64) -> Result<(f64, f64, Complex64, Complex64)> {
        let key = (k.re.to_bits(), k.im.to_bits());
        if let Some(&v) = self.cache.get(&key) {
            return Ok(v);
        }
        let b = k1_log_bundle(self.pair, k, self.order)?;
        let v = (b.log_modulus, b.phase, b.s, b.det_omega);
        self.cache.insert(key, v);
        Ok(v)
    }
    fn log_value(&mut self, k: Complex64, which: Mapped) -> Result<(f64, f64)> {
        let (lm, ph, s, om) = self.bundle(k)?;
        Ok(match which {
            Mapped::Plain => (lm, ph),
            Mapped::TimesS => (lm + s.norm().ln(), wrap_phase(ph + s.arg())),
            Mapped::TimesOmega => (lm + om.norm().ln(), wrap_phase(ph + om.arg())),
        })
    }
}

/// Continuous phase change of a mapped function along one contour piece.
fn mapped_delta(
    eval: &mut BundleEval,
    path: &dyn Fn(f64) -> Complex64,
    which: Mapped,
    budget: &mut usize,
    len: f64,
) -> Result<f64> {
    let pts = min_samples(len, eval.pair.gamma());
    let track = track_phase(path, &mut |k| eval.log_value(k, which), budget, pts)?;
    Ok(track.delta)
}

/// Per-quadrant and total zero counts in the annuli `k_min < |k| < r`.
///
/// Every contour is evaluated in the first quadrant: the sector boundary
/// (outer arc, imaginary-axis radial, inner arc, real-axis radial, all
/// counterclockwise) is tracked once per mapped function.  The full-annulus
/// total uses only the two arcs — the circle-image of each quadrant's arc is
/// the same first-quadrant arc, so the big-circle phase change is
/// `Δ(D) + 2Δ(D·S) + Δ(D·detΩ)` — and must agree with the sector sum, which
/// additionally exercises the radial edges.
pub fn counting_function(pair: &CoeffPair, radii: &[f64]) -> Result<Vec<CountRow>> {
    let gamma = pair.gamma();
    let r_in = kernels::k_min(gamma) * 1.001;
    for &r in radii {
        if r < 5.0 / gamma {
            return Err(Error::InvalidInput(format!(
                "counting radius {r} below the resolvable minimum {}",
                5.0 / gamma
            )));
        }
    }
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let order = evaluation_order(
            pair,
            &[
                Complex64::new(r, r) / std::f64::consts::SQRT_2,
                Complex64::new(r, 0.1 * r),
                Complex64::new(0.1 * r, r),
            ],
        )?;
        let mut eval = BundleEval::new(pair, order);

        let outer = move |t: f64| r * (I * (FRAC_PI_2 * t)).exp();
        let inner_rev = move |t: f64| r_in * (I * (FRAC_PI_2 * (1.0 - t))).exp();
        let up_down = move |t: f64| I * (r + t * (r_in - r));
        let right_out = move |t: f64| Complex64::new(r_in + t * (r - r_in), 0.0);

        let edge = r - r_in;
        let sector = |which: Mapped, eval: &mut BundleEval| -> Result<(i64, f64)> {
            let mut budget = MAX_CONTOUR_SAMPLES * 4;
            let d_outer = mapped_delta(eval, &outer, which, &mut budget, r * FRAC_PI_2)?;
            let d_down = mapped_delta(eval, &up_down, which, &mut budget, edge)?;
            let d_inner = mapped_delta(eval, &inner_rev, which, &mut budget, r_in * FRAC_PI_2)?;
            let d_right = mapped_delta(eval, &right_out, which, &mut budget, edge)?;
            let total = d_outer + d_down + d_inner + d_right;
            let w = round_winding(total, Complex64::new(r_in, 0.0), Complex64::new(r, 0.0))?;
            // `inner_rev` runs clockwise, so adding its delta subtracts the
            // counterclockwise inner-arc contribution from the outer arc.
            Ok((w, d_outer + d_inner))
        };

        let (n1, arc1) = sector(Mapped::Plain, &mut eval)?;
        let (n2, arc2) = sector(Mapped::TimesS, &mut eval)?;
        let (n3, arc3) = sector(Mapped::TimesOmega, &mut eval)?;
        let n4 = n2;

        // Independent total: big-circle minus small-circle phase change,
        // assembled from the per-quadrant arc contributions only.
        let annulus = arc1 + 2.0 * arc2 + arc3;
        let total = round_winding(annulus, Complex64::new(r, 0.0), Complex64::new(r, 0.0))?;
        let sum = n1 + n2 + n3 + n4;
        if total != sum {
            return Err(Error::IncompleteZeroSet {
                expected: total,
                found: sum,
            });
        }
        rows.push(CountRow {
            r,
            n1,
            n2,
            n3,
            n4,
            total,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Full-disc inventory
// ---------------------------------------------------------------------------

/// Locates every zero of `D` with `|k| < radius` and verifies the inventory
/// against the annulus counts (assuming no zeros hide inside the tiny
/// numerical exclusion at the origin).
///
/// `K₂` comes from the seeded direct search along the logarithmic resonance
/// curve, `K₄` from the exact symmetry `D(i·conj k) = conj D(k)`, and `K₁`
/// with `K₃` from the zeros of the product `D(k)·det Ω(k)` over the first
/// quadrant, where every evaluation is numerically tame: `−ζ` is such a
/// product zero for each `K₃` zero `ζ`, and the `K₁` zeros of `D` are
/// product zeros in place.  The product is real on the diagonal
/// `arg k = π/4` (self-symmetric zeros show up as sign changes there); the
/// rest are reached from the asymptotic seed lattice and mirror images, with
/// a deflated box sweep as the fallback.  Per-quadrant totals must match the
/// argument-principle counts or the call fails with `IncompleteZeroSet`.
pub fn all_zeros_in_disc(pair: &CoeffPair, radius: f64) -> Result<ResonanceSet> {
    if pair.is_free() {
        return Ok(ResonanceSet::default());
    }
    if pair.p_plus() == 0.0 {
        return Err(Error::InvalidInput(
            "the disc inventory is organized around the asymptotic resonance curve and \
             requires a nonzero boundary value p₊"
                .into(),
        ));
    }
    let gamma = pair.gamma();
    let row = counting_function(pair, &[radius])?[0];
    let mut set = ResonanceSet::default();
    if row.total == 0 {
        return Ok(set);
    }
    let guard = (1e-2_f64).max(kernels::k_min(gamma) * 1.2);

    let k2 = second_quadrant_zeros(pair, radius, guard, row.n2)?;
    let k4 = mirrored_zeros(pair, &k2)?;
    let (k1, k3) = mapped_quadrant_zeros(pair, radius, guard, row)?;

    set.zeros.extend(k1);
    set.zeros.extend(k2);
    set.zeros.extend(k3);
    set.zeros.extend(k4);
    dedup_zeros(&mut set.zeros);
    Ok(set)
}

fn multiplicity_sum(zeros: &[Zero]) -> i64 {
    zeros.iter().map(|z| z.multiplicity as i64).sum()
}

/// `K₂` zeros inside the disc: seeded search first, then (only if the count
/// disagrees) a box sweep of the low-altitude band where the asymptotic
/// seeds are unreliable, then a full-region sweep as the last resort.
/// Setbacks along the way (failed seeds, escaped refinements) are dropped
/// once the multiplicity total matches the verified count.
fn second_quadrant_zeros(
    pair: &CoeffPair,
    radius: f64,
    guard: f64,
    expected: i64,
) -> Result<Vec<Zero>> {
    let gamma = pair.gamma();
    let pi = std::f64::consts::PI;
    let n_max = (radius * gamma / pi).ceil() as usize + 2;
    let seeds: Vec<Complex64> = asymptotic_seeds(pair.p_plus(), gamma, 1..=n_max)?
        .into_iter()
        .map(|sp| sp.upper)
        .filter(|s| s.re < -guard && s.norm() < radius + 0.8)
        .collect();
    let re_min = seeds.iter().map(|s| s.re).fold(-1.0, f64::min) - 1.5;
    let region = SearchRegion {
        re_min,
        re_max: -guard,
        im_min: guard,
        im_max: radius + 0.8,
    };
    let mut zeros = Vec::new();
    if !seeds.is_empty() {
        let found = find_resonances(pair, &region, Some(&seeds))?;
        zeros.extend(found.zeros);
    }
    let in_disc = |z: &Zero| z.quadrant == Quadrant::K2 && z.k.norm() < radius;
    zeros.retain(in_disc);
    if multiplicity_sum(&zeros) != expected {
        let band = SearchRegion {
            im_max: (2.5 * pi / gamma + guard).min(radius),
            ..region
        };
        let swept = find_resonances(pair, &band, None)?;
        zeros.extend(swept.zeros);
        dedup_zeros(&mut zeros);
        zeros.retain(in_disc);
    }
    if multiplicity_sum(&zeros) != expected {
        let swept = find_resonances(pair, &region, None)?;
        zeros.extend(swept.zeros);
        dedup_zeros(&mut zeros);
        zeros.retain(in_disc);
    }
    let found = multiplicity_sum(&zeros);
    if found != expected {
        return Err(Error::IncompleteZeroSet { expected, found });
    }
    Ok(zeros)
}

/// The `K₄` zeros are the images `i·conj ζ` of the `K₂` zeros under the
/// exact conjugation symmetry of `D`; only their residuals need evaluating.
fn mirrored_zeros(pair: &CoeffPair, k2: &[Zero]) -> Result<Vec<Zero>> {
    if k2.is_empty() {
        return Ok(Vec::new());
    }
    let far = k2
        .iter()
        .map(|z| Complex64::new(z.k.im, z.k.re))
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap();
    let order = evaluation_order(pair, &[far])?;
    k2.iter()
        .map(|z| {
            let km = Complex64::new(z.k.im, z.k.re);
            let (lm, _) = log_det_at_order(pair, km, order)?;
            Ok(Zero {
                k: km,
                multiplicity: z.multiplicity,
                quadrant: Quadrant::of(km),
                residual: lm.exp(),
            })
        })
        .collect()
}

/// Zeros of `D` in `K₁` and `K₃` with `|ζ| < radius`.
///
/// The `K₃` zeros come through the first-quadrant zeros of `D·det Ω`: the
/// reflection identity makes that product equal `D(−k)`, so its zeros are
/// exactly the negated `K₃` zeros with matching multiplicities.  Because the
/// scattering data are produced by solving against the factored `I + M`,
/// `det Ω` carries a pole at every zero of `D` itself, which cancels the
/// vanishing `D` factor — first-quadrant zeros of `D` never show up in the
/// product and are hunted separately on the diagonal, where self-adjointness
/// confines them and the conjugation symmetry makes `D` real-valued.
fn mapped_quadrant_zeros(
    pair: &CoeffPair,
    radius: f64,
    guard: f64,
    row: CountRow,
) -> Result<(Vec<Zero>, Vec<Zero>)> {
    // Setbacks (failed refinements, escaped boxes) are only diagnostic here:
    // the count checks below are the authority, so the records are dropped
    // when the totals come out right.
    let unresolved = &mut Vec::new();
    let gamma = pair.gamma();
    let pi = std::f64::consts::PI;
    let sq = SearchRegion {
        re_min: guard,
        re_max: radius,
        im_min: guard,
        im_max: radius,
    };
    let corners = [
        Complex64::new(guard, guard),
        Complex64::new(radius, guard),
        Complex64::new(radius, radius),
        Complex64::new(guard, radius),
    ];
    let order = evaluation_order(pair, &corners)?;
    let mut eval = BundleEval::new(pair, order);
    let dedup_tol = |z: Complex64| 1e-6 * (1.0 + z.norm());

    // Candidate refinement shared by both hunts: polish, keep only interior
    // points, dedup, and measure the multiplicity from a micro-contour.
    let refine_into = |eval: &mut BundleEval,
                       which: Mapped,
                       pending: &mut Vec<(Complex64, f64)>,
                       located: &mut Vec<(Complex64, i64)>,
                       unresolved: &mut Vec<UnresolvedBox>|
     -> Result<()> {
        while let Some((start, leash)) = pending.pop() {
            let zeta =
                match newton_refine_log(&mut |k| eval.log_value(k, which), start, leash, 1e-9) {
                    Ok(z) => z,
                    Err(_) => continue, // the count check and fallback sweep keep this honest
                };
            if zeta.re <= guard || zeta.im <= guard {
                continue;
            }
            if located.iter().any(|&(z, _)| (z - zeta).norm() < dedup_tol(z)) {
                continue;
            }
            let mult = match multiplicity_of(&mut |k| eval.log_value(k, which), gamma, zeta) {
                Ok(m) if m >= 1 => m,
                Ok(_) => continue,
                Err(e) => {
                    unresolved.push(UnresolvedBox {
                        center: zeta,
                        radius: 1e-3 * (1.0 + zeta.norm()),
                        winding: None,
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            located.push((zeta, mult));
            // Both flavors inherit the conjugation symmetry, so the mirror
            // of a zero is a zero; polish it from the mirrored start.
            let zm = Complex64::new(zeta.im, zeta.re);
            if (zm - zeta).norm() > dedup_tol(zeta) {
                pending.push((zm, 0.3 / gamma));
            }
        }
        Ok(())
    };

    // Hunt the product zeros: start from the seed lattice's `K₃` companions
    // (negated into the first quadrant) and from the sign changes of the
    // real-valued product along the diagonal.
    let mut pending: Vec<(Complex64, f64)> = Vec::new();
    let n_max = (1.5 * radius * gamma / pi).ceil() as usize + 2;
    for sp in asymptotic_seeds(pair.p_plus(), gamma, 1..=n_max)? {
        let start = -sp.lower;
        if start.re > guard && start.im > guard && start.norm() < radius + 1.0 {
            pending.push((start, 1.2 * FRAC_PI_2 / gamma));
        }
    }
    for t in diagonal_sign_changes(&mut eval, Mapped::TimesOmega, guard, radius)? {
        pending.push((Complex64::from_polar(t, FRAC_PI_4), 0.5 / gamma));
    }
    let mut located: Vec<(Complex64, i64)> = Vec::new();
    refine_into(
        &mut eval,
        Mapped::TimesOmega,
        &mut pending,
        &mut located,
        unresolved,
    )?;

    let in_disc_sum = |located: &[(Complex64, i64)]| -> i64 {
        located
            .iter()
            .filter(|(z, _)| z.norm() < radius)
            .map(|&(_, m)| m)
            .sum()
    };

    if in_disc_sum(&located) != row.n3 {
        // Fallback: sweep the quadrant for product zeros the seeds and the
        // diagonal scan missed, with every known zero divided out so that
        // the subdivision prunes straight to the missing ones.
        let known = located.clone();
        let mut deflated = |k: Complex64| -> Result<(f64, f64)> {
            let (mut lm, mut ph) = eval.log_value(k, Mapped::TimesOmega)?;
            for &(z, m) in &known {
                let w = k - z;
                lm -= m as f64 * w.norm().ln();
                ph -= m as f64 * w.arg();
            }
            Ok((lm, wrap_phase(ph)))
        };
        let extra = sweep_boxes(&mut deflated, gamma, &sq, 1e-9, unresolved)?;
        for (z, m) in extra {
            if located.iter().any(|&(w, _)| (w - z).norm() < dedup_tol(w)) {
                continue;
            }
            located.push((z, m));
        }
        let found = in_disc_sum(&located);
        if found != row.n3 {
            return Err(Error::IncompleteZeroSet {
                expected: row.n3,
                found,
            });
        }
    }
    let mut k3 = Vec::new();
    for &(kstar, mult) in located.iter().filter(|(z, _)| z.norm() < radius) {
        let b = eval.bundle(kstar)?;
        let z = -kstar;
        k3.push(Zero {
            k: z,
            multiplicity: mult as usize,
            quadrant: Quadrant::of(z),
            residual: b.0.exp() * b.3.norm(),
        });
    }

    // Hunt the `K₁` zeros of `D` itself along the diagonal.
    let mut pending: Vec<(Complex64, f64)> = Vec::new();
    for t in diagonal_sign_changes(&mut eval, Mapped::Plain, guard, radius)? {
        pending.push((Complex64::from_polar(t, FRAC_PI_4), 0.5 / gamma));
    }
    let mut bound: Vec<(Complex64, i64)> = Vec::new();
    refine_into(
        &mut eval,
        Mapped::Plain,
        &mut pending,
        &mut bound,
        unresolved,
    )?;
    if in_disc_sum(&bound) != row.n1 {
        // Fallback: a full-quadrant sweep of the plain determinant, in case
        // a zero eluded the diagonal scan.
        let known = bound.clone();
        let mut deflated = |k: Complex64| -> Result<(f64, f64)> {
            let (mut lm, mut ph) = eval.log_value(k, Mapped::Plain)?;
            for &(z, m) in &known {
                let w = k - z;
                lm -= m as f64 * w.norm().ln();
                ph -= m as f64 * w.arg();
            }
            Ok((lm, wrap_phase(ph)))
        };
        let extra = sweep_boxes(&mut deflated, gamma, &sq, 1e-9, unresolved)?;
        for (z, m) in extra {
            if bound.iter().any(|&(w, _)| (w - z).norm() < dedup_tol(w)) {
                continue;
            }
            bound.push((z, m));
        }
        let found = in_disc_sum(&bound);
        if found != row.n1 {
            return Err(Error::IncompleteZeroSet {
                expected: row.n1,
                found,
            });
        }
    }
    let mut k1 = Vec::new();
    for &(kstar, mult) in bound.iter().filter(|(z, _)| z.norm() < radius) {
        let b = eval.bundle(kstar)?;
        k1.push(Zero {
            k: kstar,
            multiplicity: mult as usize,
            quadrant: Quadrant::of(kstar),
            residual: b.0.exp(),
        });
    }
    Ok((k1, k3))
}

/// Sign changes of the chosen determinant flavor along the diagonal
/// `arg k = π/4`, where the conjugation symmetry makes it real-valued.
/// Returns the bisected crossing radii.
fn diagonal_sign_changes(
    eval: &mut BundleEval,
    which: Mapped,
    guard: f64,
    radius: f64,
) -> Result<Vec<f64>> {
    let gamma = eval.pair.gamma();
    let dir = Complex64::from_polar(1.0, FRAC_PI_4);
    let t_min = 1.5 * guard;
    if t_min >= radius {
        return Ok(Vec::new());
    }
    let n = min_samples(radius - t_min, gamma).max(16);
    let sign_at = |eval: &mut BundleEval, t: f64| -> Result<Option<f64>> {
        let (_, ph) = eval.log_value(dir * t, which)?;
        // Realness check: a badly complex sample means the symmetry
        // assumption failed and the scan cannot be trusted.
        if ph.sin().abs() > 0.5 {
            return Ok(None);
        }
        Ok(Some(ph.cos().signum()))
    };
    let mut crossings = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for j in 0..n {
        let t = t_min + (radius - t_min) * j as f64 / (n - 1) as f64;
        let Some(s) = sign_at(eval, t)? else {
            prev = None;
            continue;
        };
        if let Some((tp, sp)) = prev {
            if sp * s < 0.0 {
                let (mut lo, mut hi) = (tp, t);
                for _ in 0..30 {
                    if hi - lo < 1e-3 / gamma {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    match sign_at(eval, mid)? {
                        Some(sm) if sm == sp => lo = mid,
                        Some(_) => hi = mid,
                        None => break,
                    }
                }
                crossings.push(0.5 * (lo + hi));
            }
        }
        prev = Some((t, s));
    }
    Ok(crossings)
}

/// Fitted forbidden-domain constant for the `K₂` zeros:
/// `C* = max |ζ|·e^{2γ·Re ζ}`, plus the zeros violating a user-supplied
/// bound, if one is given.
pub fn forbidden_domain_check(
    set: &ResonanceSet,
    gamma: f64,
    user_c: Option<f64>,
) -> (f64, Vec<Complex64>) {
    let mut c_star: f64 = 0.0;
    let mut violations = Vec::new();
    for z in &set.zeros {
        if z.quadrant != Quadrant::K2 {
            continue;
        }
        let value = z.k.norm() * (2.0 * gamma * z.k.re).exp();
        c_star = c_star.max(value);
        if let Some(c) = user_c {
            if value > c {
                violations.push(z.k);
            }
        }
    }
    (c_star, violations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::CompactCoeff;
    use std::f64::consts::PI;

    fn step_pair() -> CoeffPair {
        CoeffPair::new(
            CompactCoeff::step(2.0, 0.0, 1.0, 1.0).unwrap(),
            CompactCoeff::zero(1.0),
        )
        .unwrap()
    }

    #[test]
    fn free_pair_has_no_zeros() {
        let pair = CoeffPair::free(1.0);
        let count = winding_number(&pair, Complex64::new(3.0, 2.0), 1.5, None).unwrap();
        assert_eq!(count.winding, 0);
        assert_eq!(count.min_abs_d, 1.0);
        let region = SearchRegion {
            re_min: 1.0,
            re_max: 4.0,
            im_min: 1.0,
            im_max: 4.0,
        };
        let set = find_resonances(&pair, &region, None).unwrap();
        assert!(set.zeros.is_empty() && set.unresolved.is_empty());
    }

    #[test]
    fn seed_lattice_matches_hand_substitution() {
        let seeds = asymptotic_seeds(2.0, 1.0, 1..=1).unwrap();
        let k1 = seeds[0].upper;
        let expect = Complex64::new(-(PI.ln()), PI);
        assert!((k1 - expect).norm() <= 1e-14, "{k1} vs {expect}");
        let lower = seeds[0].lower;
        let expect_lower = I * expect - PI / 2.0;
        assert!((lower - expect_lower).norm() <= 1e-14);
        assert_eq!(lower.re, -PI - PI / 2.0);
        assert_eq!(lower.im, -(PI.ln()));
    }

    #[test]
    fn negative_boundary_value_shifts_the_seed_row() {
        let plus = asymptotic_seeds(2.0, 1.0, 3..=3).unwrap()[0].upper;
        let minus = asymptotic_seeds(-2.0, 1.0, 3..=3).unwrap()[0].upper;
        assert!((minus.im - plus.im - PI / 2.0).abs() <= 1e-14);
        assert!(asymptotic_seeds(0.0, 1.0, 1..=2).is_err());
    }

    #[test]
    fn seed_disc_holds_exactly_one_zero_and_newton_stays_inside() {
        let pair = step_pair();
        let seeds = asymptotic_seeds(pair.p_plus(), pair.gamma(), 6..=6).unwrap();
        let seed = seeds[0].upper;
        let disc = winding_number(&pair, seed, PI / 4.0, None).unwrap();
        assert_eq!(disc.winding, 1, "seed disc winding at {seed}");

        let region = SearchRegion {
            re_min: seed.re - 1.0,
            re_max: seed.re + 1.0,
            im_min: seed.im - 1.0,
            im_max: seed.im + 1.0,
        };
        let set = find_resonances(&pair, &region, Some(&[seed])).unwrap();
        assert_eq!(set.zeros.len(), 1, "unresolved: {:?}", set.unresolved);
        let zero = set.zeros[0];
        assert_eq!(zero.multiplicity, 1);
        assert_eq!(zero.quadrant, Quadrant::K2);
        assert!((zero.k - seed).norm() < 0.6);
        assert!(zero.residual < 1e-10, "residual {}", zero.residual);

        // A tight circle around the converged zero also reports one zero,
        // and the derivative is away from zero (simple zero).
        let tight = winding_number(&pair, zero.k, 0.3, None).unwrap();
        assert_eq!(tight.winding, 1);
    }

    #[test]
    fn zero_on_contour_is_nudged_away() {
        let pair = step_pair();
        let seeds = asymptotic_seeds(pair.p_plus(), pair.gamma(), 5..=5).unwrap();
        let seed = seeds[0].upper;
        // The contour must track the very determinant whose zero sits on it,
        // so fix the discretization order up front and refine at that order:
        // a zero of a different-order determinant would lie ~1e-7 off the
        // contour, which tracking resolves as an ordinary interior zero.
        let r = 0.2;
        let probes: Vec<Complex64> = (0..4)
            .map(|j| seed + r + r * (I * (TWO_PI * j as f64 / 4.0)).exp())
            .collect();
        let order = evaluation_order(&pair, &probes).unwrap();
        let mut eval = DetEval::new(&pair, order);
        let zeta = newton_refine(&mut eval, seed, 1.0).unwrap();
        assert!(eval.det(zeta).unwrap().norm() < 1e-9);
        // Center the contour so the zero lies exactly on it; the retry with
        // a 0.5% larger radius must enclose it cleanly.
        let count = winding_number(&pair, zeta + r, r, Some(order)).unwrap();
        assert_eq!(count.winding, 1);
        assert!(count.radius > r, "radius was not nudged");
    }

    #[test]
    fn disc_inventory_matches_the_quadrant_counts() {
        let pair = step_pair();
        let radius = 8.0;
        let set = all_zeros_in_disc(&pair, radius).unwrap();
        assert!(
            set.unresolved.is_empty(),
            "unresolved boxes: {:?}",
            set.unresolved
        );
        let row = counting_function(&pair, &[radius]).unwrap()[0];
        let sum_q = |q: Quadrant| {
            set.zeros
                .iter()
                .filter(|z| z.quadrant == q)
                .map(|z| z.multiplicity as i64)
                .sum::<i64>()
        };
        assert_eq!(sum_q(Quadrant::K1), row.n1);
        assert_eq!(sum_q(Quadrant::K2), row.n2);
        assert_eq!(sum_q(Quadrant::K3), row.n3);
        assert_eq!(sum_q(Quadrant::K4), row.n4);
        assert_eq!(multiplicity_sum(&set.zeros), row.total);
        // Every K2 zero has its exact conjugation image in the set.
        for z in set.zeros.iter().filter(|z| z.quadrant == Quadrant::K2) {
            let zm = Complex64::new(z.k.im, z.k.re);
            assert!(
                set.zeros
                    .iter()
                    .any(|w| (w.k - zm).norm() < 1e-6 * (1.0 + zm.norm())),
                "missing mirror of {}",
                z.k
            );
        }
        for z in &set.zeros {
            assert!(z.k.norm() < radius + 1e-9);
            assert_eq!(z.multiplicity, 1, "unexpected multiple zero at {}", z.k);
        }
    }

    #[test]
    fn box_windings_are_additive() {
        let pair = step_pair();
        let seeds = asymptotic_seeds(pair.p_plus(), pair.gamma(), 5..=6).unwrap();
        let (a, b) = (seeds[0].upper, seeds[1].upper);
        let region = SearchRegion {
            re_min: a.re.min(b.re) - 0.8,
            re_max: a.re.max(b.re) + 0.8,
            im_min: a.im - 0.8,
            im_max: b.im + 0.8,
        };
        let order = evaluation_order(
            &pair,
            &[
                Complex64::new(region.re_min, region.im_min),
                Complex64::new(region.re_max, region.im_max),
            ],
        )
        .unwrap();
        let mut eval = DetEval::new(&pair, order);
        let (whole, _, _) = rect_winding(&mut eval, &region).unwrap();
        let mut parts = 0;
        for half in split_region(&region) {
            for quarter in split_region(&half) {
                let (w, _, _) = rect_winding(&mut eval, &quarter).unwrap();
                parts += w;
            }
        }
        assert_eq!(whole, parts);
        assert_eq!(whole, 2, "expected the two seeded zeros");
    }

    #[test]
    fn rectangle_search_agrees_with_seeded_search() {
        let pair = step_pair();
        let seeds = asymptotic_seeds(pair.p_plus(), pair.gamma(), 5..=6).unwrap();
        let (a, b) = (seeds[0].upper, seeds[1].upper);
        let region = SearchRegion {
            re_min: a.re.min(b.re) - 0.8,
            re_max: a.re.max(b.re) + 0.8,
            im_min: a.im - 0.8,
            im_max: b.im + 0.8,
        };
        let blind = find_resonances(&pair, &region, None).unwrap();
        let seeded =
            find_resonances(&pair, &region, Some(&[a, b])).unwrap();
        assert_eq!(blind.zeros.len(), 2, "unresolved: {:?}", blind.unresolved);
        assert_eq!(seeded.zeros.len(), 2);
        for (x, y) in blind.zeros.iter().zip(seeded.zeros.iter()) {
            assert!((x.k - y.k).norm() <= 1e-8 * (1.0 + x.k.norm()));
        }
    }

    #[test]
    fn zero_set_respects_the_rotation_symmetry() {
        // For every zero ζ, i·conj(ζ) is also a zero: Newton started there
        // converges essentially in place.
        let pair = step_pair();
        let seeds = asymptotic_seeds(pair.p_plus(), pair.gamma(), 6..=6).unwrap();
        let region = SearchRegion {
            re_min: seeds[0].upper.re - 1.0,
            re_max: seeds[0].upper.re + 1.0,
            im_min: seeds[0].upper.im - 1.0,
            im_max: seeds[0].upper.im + 1.0,
        };
        let set = find_resonances(&pair, &region, Some(&[seeds[0].upper])).unwrap();
        let zeta = set.zeros[0].k;
        let mirrored = I * zeta.conj();
        assert_eq!(Quadrant::of(mirrored), Quadrant::K4);
        let order = evaluation_order(&pair, &[mirrored]).unwrap();
        let mut eval = DetEval::new(&pair, order);
        let refined = newton_refine(&mut eval, mirrored, 0.5).unwrap();
        assert!(
            (refined - mirrored).norm() <= 1e-6 * (1.0 + mirrored.norm()),
            "mirror image moved by {}",
            (refined - mirrored).norm()
        );
        let d_mirror = eval.det(refined).unwrap().norm();
        assert!(d_mirror < 1e-9, "|D| at mirror zero: {d_mirror}");
    }

    #[test]
    fn seed_deviation_shrinks_with_the_index() {
        let pair = step_pair();
        let seeds = asymptotic_seeds(pair.p_plus(), pair.gamma(), 5..=8).unwrap();
        let mut deviations = Vec::new();
        for sp in &seeds {
            let region = SearchRegion {
                re_min: sp.upper.re - 1.0,
                re_max: sp.upper.re + 1.0,
                im_min: sp.upper.im - 1.0,
                im_max: sp.upper.im + 1.0,
            };
            let set = find_resonances(&pair, &region, Some(&[sp.upper])).unwrap();
            assert_eq!(set.zeros.len(), 1, "n = {}", sp.n);
            deviations.push((set.zeros[0].k - sp.upper).norm());
        }
        assert!(
            deviations.last().unwrap() < deviations.first().unwrap(),
            "deviations {deviations:?} do not shrink"
        );
        for d in &deviations {
            assert!(*d < 0.6, "deviation {d} too large");
        }
    }

    #[test]
    fn forbidden_domain_constant_is_stable() {
        let pair = step_pair();
        let seeds = asymptotic_seeds(pair.p_plus(), pair.gamma(), 5..=8).unwrap();
        let mut set = ResonanceSet::default();
        for sp in &seeds {
            let region = SearchRegion {
                re_min: sp.upper.re - 1.0,
                re_max: sp.upper.re + 1.0,
                im_min: sp.upper.im - 1.0,
                im_max: sp.upper.im + 1.0,
            };
            let found = find_resonances(&pair, &region, Some(&[sp.upper])).unwrap();
            set.zeros.extend(found.zeros);
        }
        let values: Vec<f64> = set
            .zeros
            .iter()
            .map(|z| z.k.norm() * (2.0 * pair.gamma() * z.k.re).exp())
            .collect();
        let (c_star, violations) = forbidden_domain_check(&set, pair.gamma(), None);
        assert!(c_star > 0.0);
        assert!(violations.is_empty());
        assert!((c_star - values.iter().cloned().fold(0.0, f64::max)).abs() <= 1e-12);
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(
            c_star / min <= 4.0,
            "forbidden-domain values spread too far: {values:?}"
        );
        // The K₄ mirror ζ' = i·conj(ζ) of a K₂ zero satisfies the mirrored
        // bound |ζ'| ≤ C·e^{−2γ·Im ζ'} with the same constant: |ζ'| = |ζ|
        // and Im ζ' = Re ζ, so the two bound values coincide exactly.
        let z = set.zeros[0].k;
        let mirror = I * z.conj();
        let value_orig = z.norm() * (2.0 * pair.gamma() * z.re).exp();
        let value_mirror = mirror.norm() * (2.0 * pair.gamma() * mirror.im).exp();
        assert!(
            (value_orig - value_mirror).abs() <= 1e-12 * value_orig.max(1e-300),
            "mirrored bound value differs: {value_orig} vs {value_mirror}"
        );
    }

    #[test]
    fn quadrant_counts_match_the_annulus_total() {
        let pair = step_pair();
        let rows = counting_function(&pair, &[10.0]).unwrap();
        let row = rows[0];
        assert_eq!(row.total, row.n1 + row.n2 + row.n3 + row.n4);
        assert_eq!(row.n2, row.n4);
        assert!(row.n2 >= 1, "expected at least one K₂ zero, got {row:?}");
        assert!(
            row.n3 >= row.n2 && row.n3 <= 3 * row.n2,
            "K₃/K₂ disproportion: {row:?}"
        );
        let bound = 1.2 * 4.0 * pair.gamma() * row.r / PI;
        assert!((row.total as f64) <= bound, "{row:?} exceeds {bound}");
        assert!(counting_function(&pair, &[1.0]).is_err());
    }
}
