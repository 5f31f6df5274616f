//! Product-form models of the determinant and the trace data they induce.
//!
//! Inside a disc `|k| < R` the determinant factors as
//!
//! ```text
//! D(k) = α · k^(−m) · e^(βk) · Π_ζ (1 − k/ζ) e^(k/ζ)
//! ```
//!
//! over its zeros `ζ` in the disc, up to a remainder driven by the zeros
//! outside.  [`hadamard_fit`] recovers `(m, α, β)` from samples of `D` on the
//! circle `|k| = R/3`; [`trace_lhs`] measures `k·D′(k)/D(k)` directly from the
//! determinant; [`trace_rhs`] evaluates the same quantity through the fitted
//! product.  Their gap is controlled by [`trace_tail_bound`], which shrinks as
//! the inventory radius grows, so the pair forms a checkable identity between
//! a spectral side (the zero inventory) and an analytic side (the
//! log-derivative of the determinant).

use std::f64::consts::{LN_2, PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coeffs::CoeffPair;
use crate::error::{Error, Result};
use crate::fredholm::{log_det_at_order, wrap_phase};
use crate::kernels::k_min;
use crate::rootfind::{counting_function, evaluation_order, min_samples, ResonanceSet, Zero};

/// Evaluations with `log |D|` below this are treated as sitting on a zero.
const SINGULAR_LOG_DET: f64 = -18.420680743952367; // ln(1e-8)

/// Largest acceptable distance between the measured origin exponent and the
/// nearest integer.
const ORIGIN_SLOPE_TOL: f64 = 0.35;

/// Fitted product-form data for the determinant on a disc.
///
/// The model is `D(k) ≈ alpha · k^(−m) · e^(beta·k) · Π (1 − k/ζ) e^(k/ζ)`
/// with the product running over `zeros`.  `fit_rms` is the root-mean-square
/// misfit of the affine part of the log on the fitting circle `|k| = rho`; it
/// collects the influence of zeros outside `radius` (their factors start at
/// order `k²`, so they bias neither `alpha` nor `beta`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HadamardData {
    /// Order of the origin factor `k^(−m)`: `0` when `D(0) ≠ 0`, `−1` when
    /// the determinant vanishes simply at the origin, `1` for a simple pole.
    pub m: i64,
    /// Multiplicative constant of the product form.
    pub alpha: Complex64,
    /// Linear exponent coefficient.
    pub beta: Complex64,
    /// Radius of the disc whose zeros enter the product.
    pub radius: f64,
    /// Radius of the fitting circle (`radius / 3`).
    pub rho: f64,
    /// Root-mean-square misfit of the affine log fit on the circle.
    pub fit_rms: f64,
    /// The zeros the product uses: the supplied inventory restricted to
    /// `|ζ| < radius`.
    pub zeros: ResonanceSet,
}

impl HadamardData {
    /// Log of the product form at `k`, with principal branches per factor:
    /// `log alpha − m·log k + beta·k + Σ [log(1 − k/ζ) + k/ζ]`.
    ///
    /// The real part (the log-modulus) is branch-free; the imaginary part is
    /// only meaningful modulo `2π`.
    pub fn log_reconstruction(&self, k: Complex64) -> Complex64 {
        let mut out = self.alpha.ln() - (self.m as f64) * k.ln() + self.beta * k;
        for z in &self.zeros.zeros {
            let ratio = k / z.k;
            out += (z.multiplicity as f64) * ((Complex64::new(1.0, 0.0) - ratio).ln() + ratio);
        }
        out
    }

    /// Derivative of the scattering phase `φ(k) = (i/2π)·log S(k)` implied by
    /// the product form, at real `k`.
    ///
    /// From `S(k) = D(ik)/D(k)` the log-derivatives combine so that the
    /// origin factor drops out entirely:
    ///
    /// ```text
    /// φ′(k) = (i/2π) · [ (i−1)·beta − Σ (k/ζ)·( 1/(ik−ζ) + 1/(k−ζ) ) ]
    /// ```
    ///
    /// The result is real up to the truncation of the product at `radius`; a
    /// growing imaginary part signals an incomplete zero inventory.
    pub fn phase_derivative(&self, k: f64) -> Complex64 {
        let kk = Complex64::new(k, 0.0);
        let ik = Complex64::new(0.0, k);
        let mut sum = Complex64::new(0.0, 0.0);
        for z in &self.zeros.zeros {
            let term = (kk / z.k) * ((ik - z.k).inv() + (kk - z.k).inv());
            sum += (z.multiplicity as f64) * term;
        }
        Complex64::new(0.0, 1.0) / TAU * (Complex64::new(-1.0, 1.0) * self.beta - sum)
    }
}

/// Measures the origin exponent: the slope of `log |D|` against `log |k|`
/// just above the evaluation floor, averaged over three rays.  Returns `m`
/// with `D(k) ~ k^(−m)` near `0`, restricted to `{−1, 0, 1}`.
fn pole_order_at_origin(pair: &CoeffPair) -> Result<i64> {
    let t0 = 2.0 * k_min(pair.gamma());
    let angles = [PI / 8.0, PI / 4.0, 3.0 * PI / 8.0];
    let probes: Vec<Complex64> = angles
        .iter()
        .flat_map(|&a| {
            let dir = Complex64::from_polar(1.0, a);
            [dir * t0, dir * 2.0 * t0]
        })
        .collect();
    let order = evaluation_order(pair, &probes)?;
    let mut mean_slope = 0.0;
    let mut inner = Complex64::new(0.0, 0.0);
    let mut outer = Complex64::new(0.0, 0.0);
    for &a in &angles {
        let dir = Complex64::from_polar(1.0, a);
        let (lm1, ph1) = log_det_at_order(pair, dir * t0, order)?;
        let (lm2, ph2) = log_det_at_order(pair, dir * 2.0 * t0, order)?;
        mean_slope += (lm2 - lm1) / LN_2 / angles.len() as f64;
        inner += Complex64::from_polar(lm1.exp(), ph1);
        outer += Complex64::from_polar(lm2.exp(), ph2);
    }
    let m = (-mean_slope).round();
    let err = (-mean_slope - m).abs();
    if err > ORIGIN_SLOPE_TOL || m.abs() > 1.0 {
        return Err(Error::NoConvergence {
            tol: ORIGIN_SLOPE_TOL,
            err_est: err,
            prev: inner / 3.0,
            last: outer / 3.0,
        });
    }
    Ok(m as i64)
}

/// Fits the product form to the determinant on the disc `|k| < radius`.
///
/// `zeros` must contain every zero of the determinant with `|ζ| < radius`
/// (counted with multiplicity); entries outside the disc are ignored.  The
/// claim is not taken on faith: the total multiplicity is checked against an
/// independent winding count over the disc, and a mismatch returns
/// [`Error::IncompleteZeroSet`].  A missing zero would otherwise be silently
/// absorbed into `alpha` and `beta` and poison every downstream identity.
///
/// The origin exponent `m` is measured from the decay of `|D|` along rays
/// into the origin; a slope that is not close to an integer in `{−1, 0, 1}`
/// returns [`Error::NoConvergence`].  With the zeros and the origin factor
/// divided out, the remaining function is zero-free in the disc, so its log
/// is single-valued there; it is sampled on the circle `|k| = radius/3` and
/// fitted by `log alpha + beta·k` in the least-squares sense.  A nonzero
/// winding of the divided-out samples around that circle (an impossibility
/// for a correct inventory) returns [`Error::PhaseJump`].
pub fn hadamard_fit(pair: &CoeffPair, zeros: &ResonanceSet, radius: f64) -> Result<HadamardData> {
    let gamma = pair.gamma();
    if !radius.is_finite() || radius < 20.0 * k_min(gamma) {
        return Err(Error::InvalidInput(format!(
            "fit radius {radius} too small for support length {gamma}"
        )));
    }
    let kept: Vec<Zero> = zeros
        .zeros
        .iter()
        .filter(|z| z.k.norm() < radius)
        .cloned()
        .collect();
    let claimed: i64 = kept.iter().map(|z| z.multiplicity as i64).sum();
    let row = counting_function(pair, &[radius])?[0];
    if claimed != row.total {
        return Err(Error::IncompleteZeroSet {
            expected: row.total,
            found: claimed,
        });
    }
    let m = pole_order_at_origin(pair)?;

    let rho = radius / 3.0;
    let corners: Vec<Complex64> = (0..4)
        .map(|j| Complex64::from_polar(rho, PI / 4.0 + (j as f64) * PI / 2.0))
        .collect();
    let order = evaluation_order(pair, &corners)?;
    let samples = min_samples(TAU * rho, gamma).max(96);

    // Walk the circle once, dividing out the origin factor and the in-disc
    // zero factors sample by sample, and unwrap the leftover phase through
    // consecutive differences.
    let mut lvals = Vec::with_capacity(samples);
    let mut kvals = Vec::with_capacity(samples);
    let mut first_raw = 0.0;
    let mut prev_raw = 0.0;
    let mut acc = 0.0;
    for j in 0..samples {
        let ang = TAU * (j as f64) / (samples as f64);
        let k = Complex64::from_polar(rho, ang);
        let (lm, ph) = log_det_at_order(pair, k, order)?;
        let mut lmod = lm + (m as f64) * rho.ln();
        let mut raw = ph + (m as f64) * ang;
        for z in &kept {
            let mult = z.multiplicity as f64;
            let ratio = k / z.k;
            let w = Complex64::new(1.0, 0.0) - ratio;
            lmod -= mult * (ratio.re + w.norm().ln());
            raw -= mult * (ratio.im + w.arg());
        }
        if j == 0 {
            first_raw = raw;
            acc = wrap_phase(raw);
        } else {
            acc += wrap_phase(raw - prev_raw);
        }
        prev_raw = raw;
        lvals.push(Complex64::new(lmod, acc));
        kvals.push(k);
    }
    let net_turns = (acc - lvals[0].im + wrap_phase(first_raw - prev_raw)) / TAU;
    if net_turns.abs() > 0.5 {
        return Err(Error::PhaseJump {
            from: kvals[samples - 1],
            to: kvals[0],
            jump: net_turns * TAU,
        });
    }

    // Least squares for `ℓ(k) ≈ a + beta·k` on the circle: the sample points
    // sum to zero and have constant modulus, so the normal equations
    // decouple.  Contamination from outside zeros starts at `k²`, which is
    // orthogonal to both basis functions on the circle.
    let mm = samples as f64;
    let a = lvals.iter().sum::<Complex64>() / mm;
    let beta = lvals
        .iter()
        .zip(&kvals)
        .map(|(l, k)| *l * k.conj())
        .sum::<Complex64>()
        / (mm * rho * rho);
    let fit_rms = (lvals
        .iter()
        .zip(&kvals)
        .map(|(l, k)| (*l - a - beta * *k).norm_sqr())
        .sum::<f64>()
        / mm)
        .sqrt();

    Ok(HadamardData {
        m,
        alpha: a.exp(),
        beta,
        radius,
        rho,
        fit_rms,
        zeros: ResonanceSet {
            zeros: kept,
            unresolved: Vec::new(),
        },
    })
}

/// The analytic side of the trace identity: `k · D′(k)/D(k)` by central
/// differences of the log-determinant, step `h = 1e−5·(1 + |k|)`.
///
/// Intended for `k` in the closed first quadrant away from zeros of `D`;
/// evaluations within about `1e−8` of a zero return
/// [`Error::SingularAtResonance`].
pub fn trace_lhs(pair: &CoeffPair, k: Complex64) -> Result<Complex64> {
    let h = 1e-5 * (1.0 + k.norm());
    let probes = [k, k + h, k - h];
    let order = evaluation_order(pair, &probes)?;
    let (lm0, _) = log_det_at_order(pair, k, order)?;
    if lm0 < SINGULAR_LOG_DET {
        return Err(Error::SingularAtResonance { at: k });
    }
    let (lm_p, ph_p) = log_det_at_order(pair, k + h, order)?;
    let (lm_m, ph_m) = log_det_at_order(pair, k - h, order)?;
    let dlog = Complex64::new(lm_p - lm_m, wrap_phase(ph_p - ph_m)) / (2.0 * h);
    Ok(k * dlog)
}

/// The spectral side of the trace identity, evaluated from fitted product
/// data: `−m + beta·k + k² Σ mult/(ζ·(k − ζ))`.
///
/// Diverges as `k` approaches one of the fitted zeros, mirroring the
/// singularity of the analytic side there.
pub fn trace_rhs(fit: &HadamardData, k: Complex64) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    for z in &fit.zeros.zeros {
        sum += (z.multiplicity as f64) * (z.k * (k - z.k)).inv();
    }
    -Complex64::new(fit.m as f64, 0.0) + fit.beta * k + k * k * sum
}

/// Bound on the trace-identity residual contributed by zeros outside the
/// inventory disc `|ζ| ≥ radius`.
///
/// Each outside zero adds `k²/(ζ(k−ζ))` to the spectral side; summing
/// against the linear-density bound `N(r) ≤ 4γr/π` for the zero counting
/// function gives
///
/// ```text
/// |k| · (4γ/π) · ln( R / (R − |k|) )
/// ```
///
/// for `|k| < R`, and no control at all (`∞`) otherwise.  The bound is
/// reported separately rather than folded into any tolerance, so callers see
/// both the measured residual and the budget it must fit under.
pub fn trace_tail_bound(gamma: f64, radius: f64, k: Complex64) -> f64 {
    let a = k.norm();
    if a >= radius {
        return f64::INFINITY;
    }
    a * (4.0 * gamma / PI) * (radius / (radius - a)).ln()
}

#[cfg(test)]
mod tests {
    use std::sync::OnceLock;

    use nalgebra::DVector;

    use super::*;
    use crate::coeffs::{square_case_q, CompactCoeff};
    use crate::fredholm::build_y0;
    use crate::oracle::{oracle_det, DEFAULT_ODE_TOL};
    use crate::rootfind::{all_zeros_in_disc, Quadrant};
    use crate::scattering::scattering_phase;

    fn bump_pair() -> CoeffPair {
        let p = CompactCoeff::single(1.0, vec![0.0, 0.0, 30.0, -60.0, 30.0]).unwrap();
        let q = square_case_q(&p).unwrap();
        CoeffPair::new(p, q).unwrap()
    }

    fn step_pair() -> CoeffPair {
        let p = CompactCoeff::step(2.0, 0.0, 1.0, 1.0).unwrap();
        CoeffPair::new(p, CompactCoeff::zero(1.0)).unwrap()
    }

    /// Inventory and fit for the step pair on the 8-disc, shared across tests.
    fn step_fit() -> &'static (CoeffPair, HadamardData) {
        static FIT: OnceLock<(CoeffPair, HadamardData)> = OnceLock::new();
        FIT.get_or_init(|| {
            let pair = step_pair();
            let set = all_zeros_in_disc(&pair, 8.0).unwrap();
            let fit = hadamard_fit(&pair, &set, 8.0).unwrap();
            (pair, fit)
        })
    }

    #[test]
    fn free_pair_has_trivial_product_data() {
        let pair = CoeffPair::free(1.0);
        let empty = ResonanceSet::default();
        let fit = hadamard_fit(&pair, &empty, 9.0).unwrap();
        assert_eq!(fit.m, 0);
        assert!((fit.alpha - Complex64::new(1.0, 0.0)).norm() < 1e-8);
        assert!(fit.beta.norm() < 1e-8);
        assert!(fit.fit_rms < 1e-9);
        let k = Complex64::new(2.0, 1.0);
        assert!(trace_lhs(&pair, k).unwrap().norm() < 1e-9);
        assert!(trace_rhs(&fit, k).norm() < 1e-12);
    }

    #[test]
    fn missing_zeros_are_rejected_by_the_winding_count() {
        let (pair, fit) = step_fit();
        let mut depleted = fit.zeros.clone();
        depleted.zeros.pop();
        match hadamard_fit(pair, &depleted, 8.0) {
            Err(Error::IncompleteZeroSet { expected, found }) => {
                assert_eq!(found + 1, expected);
            }
            other => panic!("expected an incomplete-set error, got {other:?}"),
        }
    }

    #[test]
    fn trace_rhs_respects_the_rotation_conjugation_symmetry() {
        // If `ζ ↦ i·conj ζ` maps the zero set to itself and `D(i·conj k) =
        // conj D(k)`, the product data transforms by `beta ↦ −i·conj beta`,
        // `ζ ↦ i·conj ζ`, and the trace sides obey
        // `rhs(reflected, i·conj k) = conj rhs(original, k)`.
        let rot = Complex64::new(0.0, 1.0);
        let zs = [
            (Complex64::new(3.0, 1.0), 1usize),
            (Complex64::new(-1.0, 2.0), 2usize),
            (Complex64::new(-2.5, -1.5), 1usize),
        ];
        let mk_set = |pts: &[(Complex64, usize)]| ResonanceSet {
            zeros: pts
                .iter()
                .map(|&(k, multiplicity)| Zero {
                    k,
                    multiplicity,
                    quadrant: Quadrant::of(k),
                    residual: 0.0,
                })
                .collect(),
            unresolved: Vec::new(),
        };
        let beta = Complex64::new(-0.9, 1.2);
        let data = HadamardData {
            m: -1,
            alpha: Complex64::new(0.4, 0.1),
            beta,
            radius: 10.0,
            rho: 10.0 / 3.0,
            fit_rms: 0.0,
            zeros: mk_set(&zs),
        };
        let reflected_zs: Vec<(Complex64, usize)> =
            zs.iter().map(|&(k, m)| (rot * k.conj(), m)).collect();
        let reflected = HadamardData {
            beta: -rot * beta.conj(),
            zeros: mk_set(&reflected_zs),
            ..data.clone()
        };
        for k in [Complex64::new(1.3, 0.4), Complex64::new(0.2, 2.1)] {
            let lhs = trace_rhs(&reflected, rot * k.conj());
            let rhs = trace_rhs(&data, k).conj();
            assert!((lhs - rhs).norm() < 1e-12, "k={k}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn log_derivative_matches_the_resolvent_trace_form() {
        // `k d/dk log det(I+M) = k·Tr[(I+M)^{-1} M′]`: the trace compensation
        // in the determinant is k-independent, so it drops out of both sides.
        let pair = bump_pair();
        let k = Complex64::new(3.0, 3.0);
        let order = evaluation_order(&pair, &[k]).unwrap();
        let h = 1e-5 * (1.0 + k.norm());
        let plus = build_y0(&pair, k + h, order).unwrap();
        let minus = build_y0(&pair, k - h, order).unwrap();
        let deriv = (plus.matrix - minus.matrix) / Complex64::new(2.0 * h, 0.0);
        let factored = build_y0(&pair, k, order).unwrap().into_factored();
        let n = deriv.nrows();
        let mut tr = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let col: DVector<Complex64> = deriv.column(j).into_owned();
            let sol = factored.solve(&col).unwrap();
            tr += sol[j];
        }
        let resolvent = k * tr;
        let direct = trace_lhs(&pair, k).unwrap();
        assert!(
            (resolvent - direct).norm() <= 1e-6 * direct.norm(),
            "resolvent {resolvent} vs direct {direct}"
        );
    }

    #[test]
    fn diagonal_log_derivative_decays_like_the_leading_coefficient_term() {
        let pair = step_pair();
        let k = Complex64::from_polar(40.0, PI / 4.0);
        let lhs = trace_lhs(&pair, k).unwrap();
        let expected = Complex64::new(1.0, 1.0) * pair.p0() / (2.0 * k);
        assert!(
            (lhs - expected).norm() <= 0.10 * expected.norm(),
            "lhs {lhs} vs leading term {expected}"
        );
    }

    #[test]
    fn log_derivative_matches_the_ode_oracle() {
        let pair = bump_pair();
        let k = Complex64::new(2.0, 1.5);
        let h = 1e-5 * (1.0 + k.norm());
        let plus = oracle_det(pair.p(), k + h, DEFAULT_ODE_TOL).unwrap();
        let minus = oracle_det(pair.p(), k - h, DEFAULT_ODE_TOL).unwrap();
        let expected = k * (plus / minus).ln() / (2.0 * h);
        let got = trace_lhs(&pair, k).unwrap();
        assert!(
            (got - expected).norm() <= 1e-4 * expected.norm(),
            "determinant {got} vs oracle {expected}"
        );
    }

    #[test]
    fn step_pair_fit_recovers_origin_order_and_growth() {
        let (pair, fit) = step_fit();
        // The kernel's `1/k` part at the origin is rank one (constant kernel
        // against the `p` factors), so the determinant carries a simple pole
        // there: m = 1.
        assert_eq!(fit.m, 1);
        let expected_beta = Complex64::new(-1.0, 1.0);
        assert!(
            (fit.beta - expected_beta).norm() <= 0.35 * expected_beta.norm(),
            "beta {} vs expected scale {expected_beta}",
            fit.beta
        );
        // The reconstruction reproduces the measured log-modulus on the
        // fitting circle to within a few times the reported misfit.
        let k = Complex64::from_polar(fit.rho, 1.1);
        let order = evaluation_order(pair, &[k]).unwrap();
        let (lm, _) = log_det_at_order(pair, k, order).unwrap();
        let recon = fit.log_reconstruction(k).re;
        assert!(
            (recon - lm).abs() <= 3.0 * fit.fit_rms,
            "recon {recon} vs measured {lm} (rms {})",
            fit.fit_rms
        );
        // Trace identity at an interior point: the residual fits under the
        // outside-zero budget with room to spare.
        let kq = Complex64::from_polar(2.0, PI / 4.0);
        let lhs = trace_lhs(pair, kq).unwrap();
        let rhs = trace_rhs(fit, kq);
        let resid = (lhs - rhs).norm();
        let budget = trace_tail_bound(pair.gamma(), fit.radius, kq);
        assert!(resid <= budget, "residual {resid} over budget {budget}");
        assert!(
            resid <= 0.2 * lhs.norm(),
            "residual {resid} large against lhs {lhs}"
        );
    }

    #[test]
    fn evaluating_at_a_determinant_zero_reports_the_resonance() {
        let (pair, fit) = step_fit();
        let bound = fit
            .zeros
            .zeros
            .iter()
            .find(|z| z.quadrant == Quadrant::K1)
            .expect("step pair has a first-quadrant zero in the 8-disc");
        match trace_lhs(pair, bound.k) {
            Err(Error::SingularAtResonance { .. }) => {}
            other => panic!("expected a resonance error, got {other:?}"),
        }
    }

    #[test]
    fn product_form_phase_derivative_tracks_the_measured_phase() {
        let (pair, fit) = step_fit();
        let dk = 0.05;
        let grid: Vec<f64> = (0..=20).map(|j| 2.0 + dk * j as f64).collect();
        let trace = scattering_phase(pair, &grid).unwrap();
        let mid = 10;
        let slope = (trace.phi[mid + 1] - trace.phi[mid - 1]) / (2.0 * dk);
        // Both numbers are small here (the phase is nearly flat at k = 2.5),
        // so the comparison is absolute: the 8-disc truncation leaves an
        // absolute error far below the phase scale of the problem.
        let predicted = fit.phase_derivative(grid[mid]);
        assert!(
            predicted.im.abs() <= 0.1,
            "imaginary leakage {predicted} from truncation"
        );
        assert!(
            (predicted.re - slope).abs() <= 0.25 * slope.abs().max(0.1),
            "predicted {predicted} vs measured slope {slope}"
        );
    }
}
