//! Change of variables from an Euler–Bernoulli beam to a half-line operator.
//!
//! A hinged beam on `[0, 1]` with stiffness `a(x)` and density `b(x)` (both
//! positive, equal to `1` near the ends and outside) is unitarily equivalent
//! to a fourth-order operator `∂⁴ + 2 ∂ p ∂ + q` on `[0, gamma]` in the
//! travel-time variable `t(x) = ∫₀ˣ (b/a)^{1/4}`.  This module computes that
//! change of variables numerically:
//!
//! * the logarithmic profiles `α = (a'/a)(a/b)^{1/4}`, `β = (b'/b)(a/b)^{1/4}`
//!   are evaluated pointwise and exactly from the piecewise polynomials;
//! * the auxiliary combinations
//!   `ε₀ = (3α+5β)/4`, `ε₁ = (α+3β)/8`, `ε₂ = (3α+β)/8`,
//!   `κ = (5α² + 5β² + 6αβ)/32`
//!   produce the transformed coefficients
//!   `p = -(ε₀̇ + κ)/2` and `q = Ẋ + X ε₁` with `X = (ε₂̇ + ε₂²) ε₁ - ε₁̈`,
//!   where dots are `t`-derivatives, computed as `x`-derivatives divided by
//!   `τ = dt/dx` on a spectral grid per beam piece;
//! * the results are re-fit as piecewise polynomials in `t` with certified
//!   interpolation error, so the output is an ordinary [`CoeffPair`].
//!
//! Intervals on which both profiles are exactly `1` map to exact gaps
//! (`p = q = 0`), so the uniform beam transforms to the free pair without
//! any floating-point noise.

use nalgebra::DMatrix;

use crate::coeffs::{dedup_sorted, BeamCoeffs, CoeffPair, CompactCoeff, Piece, BREAK_TOL};
use crate::error::{Error, Result};

/// Tuning knobs for [`liouville_transform`].
#[derive(Clone, Debug)]
pub struct TransformOptions {
    /// Spectral grid size per beam piece (number of Chebyshev intervals).
    pub grid_order: usize,
    /// Polynomial degree of the fitted output pieces.
    pub fit_degree: usize,
    /// Absolute-plus-relative tolerance of the output fit.
    pub fit_tol: f64,
}

impl Default for TransformOptions {
    fn default() -> Self {
        TransformOptions { grid_order: 64, fit_degree: 10, fit_tol: 1e-11 }
    }
}

/// Result of [`liouville_transform`].
#[derive(Clone, Debug)]
pub struct TransformOutput {
    /// Transformed coefficient pair on `[0, gamma]`.
    pub pair: CoeffPair,
    /// Length of the transformed support, `gamma = t(1)`.
    pub gamma: f64,
    /// `∫₀^gamma κ dt`, the quantity controlling the large-`|k|` size of the
    /// determinant (zero exactly when the beam is uniform).
    pub kappa_integral: f64,
}

/// Pointwise beam data on one interval that lies inside a single piece of
/// each profile.
struct LocalBeam {
    a_piece: Option<Piece>,
    b_piece: Option<Piece>,
}

impl LocalBeam {
    fn locate(beam: &BeamCoeffs, x_mid: f64) -> Self {
        let find = |c: &CompactCoeff| {
            c.pieces()
                .iter()
                .find(|p| x_mid >= p.x0 && x_mid < p.x1)
                .cloned()
        };
        LocalBeam { a_piece: find(beam.a_offset()), b_piece: find(beam.b_offset()) }
    }

    fn is_uniform(&self) -> bool {
        let flat = |p: &Option<Piece>| match p {
            None => true,
            Some(p) => p.coeffs.iter().all(|&c| c == 0.0),
        };
        flat(&self.a_piece) && flat(&self.b_piece)
    }

    fn a(&self, x: f64) -> f64 {
        1.0 + self.a_piece.as_ref().map_or(0.0, |p| p.eval(x))
    }

    fn b(&self, x: f64) -> f64 {
        1.0 + self.b_piece.as_ref().map_or(0.0, |p| p.eval(x))
    }

    fn a_prime(&self, x: f64) -> f64 {
        self.a_piece.as_ref().map_or(0.0, |p| p.eval_derivative(x, 1))
    }

    fn b_prime(&self, x: f64) -> f64 {
        self.b_piece.as_ref().map_or(0.0, |p| p.eval_derivative(x, 1))
    }

    /// `(tau, alpha, beta)` at `x`, all pointwise-exact.
    fn profiles(&self, x: f64) -> (f64, f64, f64) {
        let (a, b) = (self.a(x), self.b(x));
        let r = (a / b).powf(0.25);
        let tau = 1.0 / r;
        let alpha = self.a_prime(x) / a * r;
        let beta = self.b_prime(x) / b * r;
        (tau, alpha, beta)
    }

    /// `κ(x)`, pointwise-exact.
    fn kappa(&self, x: f64) -> f64 {
        let (_, alpha, beta) = self.profiles(x);
        (5.0 * alpha * alpha + 5.0 * beta * beta + 6.0 * alpha * beta) / 32.0
    }
}

/// Chebyshev–Lobatto grid on `[x0, x1]` with its differentiation matrix and
/// barycentric weights, nodes in increasing order.
struct ChebGrid {
    nodes: Vec<f64>,
    lambda: Vec<f64>,
    diff: DMatrix<f64>,
    half: f64,
}

impl ChebGrid {
    fn new(m: usize, x0: f64, x1: f64) -> Self {
        let half = 0.5 * (x1 - x0);
        let mid = 0.5 * (x0 + x1);
        let mut nodes = Vec::with_capacity(m + 1);
        let mut lambda = Vec::with_capacity(m + 1);
        for j in 0..=m {
            let s = -(std::f64::consts::PI * j as f64 / m as f64).cos();
            nodes.push(mid + half * s);
            let mut l = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == m {
                l *= 0.5;
            }
            lambda.push(l);
        }
        let n = m + 1;
        let mut diff = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                if i != j {
                    let d = (lambda[j] / lambda[i]) / (nodes[i] - nodes[j]);
                    diff[(i, j)] = d;
                    row_sum += d;
                }
            }
            diff[(i, i)] = -row_sum;
        }
        ChebGrid { nodes, lambda, diff, half }
    }

    fn apply_diff(&self, v: &[f64]) -> Vec<f64> {
        let n = v.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.diff[(i, j)] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Barycentric interpolation of grid values at `x`.
    fn interp(&self, values: &[f64], x: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..self.nodes.len() {
            let d = x - self.nodes[j];
            if d.abs() < 1e-14 * self.half.max(1.0) {
                return values[j];
            }
            let w = self.lambda[j] / d;
            num += w * values[j];
            den += w;
        }
        num / den
    }

    /// Chebyshev coefficients of the interpolant of `values`.
    fn values_to_coeffs(&self, values: &[f64]) -> Vec<f64> {
        // Standard transform uses nodes cos(j pi / m) in decreasing order;
        // our nodes are the mirror image, so read the values reversed.
        let m = self.nodes.len() - 1;
        let mut coeffs = vec![0.0; m + 1];
        for (k, ck) in coeffs.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..=m {
                let v = values[m - j];
                let w = if j == 0 || j == m { 0.5 } else { 1.0 };
                acc += w * v * (std::f64::consts::PI * (k * j) as f64 / m as f64).cos();
            }
            *ck = 2.0 * acc / m as f64;
        }
        coeffs[0] *= 0.5;
        if m > 0 {
            coeffs[m] *= 0.5;
        }
        coeffs
    }

    /// Coefficients of the antiderivative vanishing at the left endpoint,
    /// scaled to the physical interval.
    fn antiderivative(&self, coeffs: &[f64]) -> Vec<f64> {
        let m = coeffs.len() - 1;
        let c = |k: usize| if k <= m { coeffs[k] } else { 0.0 };
        let mut out = vec![0.0; m + 2];
        out[1] = c(0) - 0.5 * c(2);
        for k in 2..=m + 1 {
            out[k] = (c(k - 1) - c(k + 1)) / (2.0 * k as f64);
        }
        for v in out.iter_mut() {
            *v *= self.half;
        }
        // Fix the constant so the series vanishes at s = -1.
        let mut at_left = 0.0;
        for (k, &v) in out.iter().enumerate().skip(1) {
            at_left += v * if k % 2 == 0 { 1.0 } else { -1.0 };
        }
        out[0] = -at_left;
        out
    }

    /// Clenshaw evaluation of a Chebyshev series at physical `x`.
    fn eval_series(&self, coeffs: &[f64], x: f64) -> f64 {
        let mid = 0.5 * (self.nodes[0] + self.nodes[self.nodes.len() - 1]);
        let s = (x - mid) / self.half;
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in coeffs.iter().rev() {
            let b0 = 2.0 * s * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        b1 - s * b2
    }
}

/// Fits `f` on `[t0, t1]` by piecewise polynomials of degree `deg`,
/// subdividing until the Chebyshev tail certifies the requested accuracy.
pub(crate) fn fit_piecewise(
    f: &dyn Fn(f64) -> f64,
    t0: f64,
    t1: f64,
    deg: usize,
    tol: f64,
    out: &mut Vec<Piece>,
) -> Result<()> {
    fit_rec(f, t0, t1, deg, tol, 0, out)
}

fn fit_rec(
    f: &dyn Fn(f64) -> f64,
    t0: f64,
    t1: f64,
    deg: usize,
    tol: f64,
    depth: usize,
    out: &mut Vec<Piece>,
) -> Result<()> {
    let grid = ChebGrid::new(deg, t0, t1);
    let values: Vec<f64> = grid.nodes.iter().map(|&t| f(t)).collect();
    let coeffs = grid.values_to_coeffs(&values);
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tail = coeffs[deg].abs() + if deg >= 1 { coeffs[deg - 1].abs() } else { 0.0 };
    if tail <= tol * (1.0 + scale) || depth >= 14 {
        if depth >= 14 && tail > 1e3 * tol * (1.0 + scale) {
            return Err(Error::InsufficientSmoothness(format!(
                "piecewise fit did not converge on [{t0:.6}, {t1:.6}] \
                 (residual {tail:.3e})"
            )));
        }
        out.push(chebyshev_to_piece(&coeffs, t0, t1));
        return Ok(());
    }
    let tm = 0.5 * (t0 + t1);
    fit_rec(f, t0, tm, deg, tol, depth + 1, out)?;
    fit_rec(f, tm, t1, deg, tol, depth + 1, out)
}

/// Converts a Chebyshev series on `[t0, t1]` into a [`Piece`] with monomial
/// coefficients in `t - t0`.
fn chebyshev_to_piece(coeffs: &[f64], t0: f64, t1: f64) -> Piece {
    let deg = coeffs.len() - 1;
    // Monomial coefficients in u = t - t0 of T_k(s), s = (2/(t1-t0)) u - 1.
    let c = 2.0 / (t1 - t0);
    let mut tk_prev = vec![1.0]; // T_0 = 1
    let mut tk = vec![-1.0, c]; // T_1 = s = c u - 1
    let mut out = vec![0.0; deg + 1];
    out[0] += coeffs[0] * tk_prev[0];
    if deg >= 1 {
        for (j, &v) in tk.iter().enumerate() {
            out[j] += coeffs[1] * v;
        }
    }
    for k in 2..=deg {
        // T_k = 2 s T_{k-1} - T_{k-2}; multiply by s = c u - 1 in u-space.
        let mut next = vec![0.0; k + 1];
        for (j, &v) in tk.iter().enumerate() {
            next[j] -= 2.0 * v;
            next[j + 1] += 2.0 * c * v;
        }
        for (j, &v) in tk_prev.iter().enumerate() {
            next[j] -= v;
        }
        for (j, &v) in next.iter().enumerate() {
            out[j] += coeffs[k] * v;
        }
        tk_prev = tk;
        tk = next;
    }
    while out.len() > 1 && *out.last().unwrap() == 0.0 {
        out.pop();
    }
    Piece { x0: t0, x1: t1, coeffs: out }
}

/// Gauss–Legendre integral of `f` over `[a, b]` with `n` nodes.
fn gauss_integral(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let (nodes, weights) = crate::quad::gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nodes
        .iter()
        .zip(&weights)
        .map(|(&t, &w)| w * f(mid + half * t))
        .sum::<f64>()
        * half
}

/// Transforms beam profiles into the equivalent `(p, q)` pair on
/// `[0, t(1)]`.
///
/// Uniform stretches of the beam map to exact gaps of the output, so the
/// identity beam yields the free pair exactly.  Accuracy on non-uniform
/// stretches is set by [`TransformOptions`]; with the defaults the output
/// coefficients are accurate to roughly `1e-10` for smooth profiles.
pub fn liouville_transform(beam: &BeamCoeffs, opts: &TransformOptions) -> Result<TransformOutput> {
    if opts.grid_order < 8 || opts.fit_degree < 2 || opts.fit_degree > 16 {
        return Err(Error::InvalidInput(
            "transform options out of range: need grid_order >= 8 and 2 <= fit_degree <= 16"
                .into(),
        ));
    }
    let mut breaks = beam.merged_breakpoints();
    if breaks.first().map_or(true, |&x| x > BREAK_TOL) {
        breaks.insert(0, 0.0);
    }
    if breaks.last().map_or(true, |&x| x < 1.0 - BREAK_TOL) {
        breaks.push(1.0);
    }
    dedup_sorted(&mut breaks, BREAK_TOL);

    let mut t_cursor = 0.0_f64;
    let mut p_pieces: Vec<Piece> = Vec::new();
    let mut q_pieces: Vec<Piece> = Vec::new();
    let mut kappa_total = 0.0_f64;

    for w in breaks.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        if x1 - x0 <= BREAK_TOL {
            continue;
        }
        let local = LocalBeam::locate(beam, 0.5 * (x0 + x1));
        if local.is_uniform() {
            // tau = 1, p = q = 0: an exact gap of length x1 - x0.
            t_cursor += x1 - x0;
            continue;
        }

        let grid = ChebGrid::new(opts.grid_order, x0, x1);
        let n = grid.nodes.len();
        let mut tau = vec![0.0; n];
        let mut e0 = vec![0.0; n];
        let mut e1 = vec![0.0; n];
        let mut e2 = vec![0.0; n];
        let mut kappa = vec![0.0; n];
        for (j, &x) in grid.nodes.iter().enumerate() {
            let (t, alpha, beta) = local.profiles(x);
            tau[j] = t;
            e0[j] = (3.0 * alpha + 5.0 * beta) / 4.0;
            e1[j] = (alpha + 3.0 * beta) / 8.0;
            e2[j] = (3.0 * alpha + beta) / 8.0;
            kappa[j] = (5.0 * alpha * alpha + 5.0 * beta * beta + 6.0 * alpha * beta) / 32.0;
        }
        let dt = |v: &[f64]| -> Vec<f64> {
            grid.apply_diff(v)
                .iter()
                .zip(tau.iter())
                .map(|(d, t)| d / t)
                .collect()
        };
        let e0_dot = dt(&e0);
        let p_vals: Vec<f64> = e0_dot
            .iter()
            .zip(&kappa)
            .map(|(d, k)| -(d + k) / 2.0)
            .collect();
        let e1_dot = dt(&e1);
        let e1_ddot = dt(&e1_dot);
        let e2_dot = dt(&e2);
        let x_vals: Vec<f64> = (0..n)
            .map(|j| (e2_dot[j] + e2[j] * e2[j]) * e1[j] - e1_ddot[j])
            .collect();
        let x_dot = dt(&x_vals);
        let q_vals: Vec<f64> = (0..n).map(|j| x_dot[j] + x_vals[j] * e1[j]).collect();

        // Travel-time map on this interval.
        let tau_series = grid.values_to_coeffs(&tau);
        let t_series = grid.antiderivative(&tau_series);
        let delta_t = grid.eval_series(&t_series, x1);
        if !(delta_t > 0.0) {
            return Err(Error::InvalidInput(format!(
                "travel-time increment is not positive on [{x0:.6}, {x1:.6}]"
            )));
        }
        let t_of = |x: f64| grid.eval_series(&t_series, x);
        let x_of_t = |t_rel: f64| -> f64 {
            // Monotone inversion of t_of on [x0, x1]: bisection then Newton.
            let (mut lo, mut hi) = (x0, x1);
            for _ in 0..20 {
                let mid = 0.5 * (lo + hi);
                if t_of(mid) < t_rel {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let mut x = 0.5 * (lo + hi);
            for _ in 0..30 {
                let slope = grid.interp(&tau, x);
                let step = (t_of(x) - t_rel) / slope;
                x = (x - step).clamp(x0, x1);
                if step.abs() < 1e-15 * (1.0 + x.abs()) {
                    break;
                }
            }
            x
        };

        let t0 = t_cursor;
        let t1 = t_cursor + delta_t;
        let p_of_t = |t: f64| grid.interp(&p_vals, x_of_t(t - t0));
        let q_of_t = |t: f64| grid.interp(&q_vals, x_of_t(t - t0));
        fit_piecewise(&p_of_t, t0, t1, opts.fit_degree, opts.fit_tol, &mut p_pieces)?;
        fit_piecewise(&q_of_t, t0, t1, opts.fit_degree, opts.fit_tol, &mut q_pieces)?;

        kappa_total += gauss_integral(&|x| local.kappa(x) * grid.interp(&tau, x), x0, x1, 64);
        t_cursor = t1;
    }

    let gamma = t_cursor;
    let p = CompactCoeff::new(gamma, p_pieces)?;
    let q = CompactCoeff::new(gamma, q_pieces)?;
    let pair = CoeffPair::new(p, q)?;
    Ok(TransformOutput { pair, gamma, kappa_integral: kappa_total })
}

/// `∫ κ dt` over the beam, computed directly from the profiles without
/// running the full transform.  Zero exactly for the uniform beam; for any
/// genuinely non-uniform beam it is strictly positive, since
/// `32 κ = 5α² + 5β² + 6αβ ≥ 2(α² + β²)`.
pub fn kappa_integral(beam: &BeamCoeffs) -> Result<f64> {
    let breaks = beam.merged_breakpoints();
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        if x1 - x0 <= BREAK_TOL {
            continue;
        }
        let local = LocalBeam::locate(beam, 0.5 * (x0 + x1));
        if local.is_uniform() {
            continue;
        }
        total += gauss_integral(
            &|x| {
                let (tau, _, _) = local.profiles(x);
                local.kappa(x) * tau
            },
            x0,
            x1,
            64,
        );
    }
    Ok(total)
}
