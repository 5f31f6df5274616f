//! Independent second-order cross-check machinery.
//!
//! For the half-line Schrödinger operator `h = -d²/dx² - p` with a compactly
//! supported potential `p`, the Jost solution `f₊(x, k)` is the unique
//! solution of `-f″ - p f = k² f` that equals `e^{ikx}` to the right of the
//! support.  Its boundary value `d(k) = f₊(0, k)` is entire in `k`, and when
//! the fourth-order coefficients are built from a single profile via
//! `q = p″ + p²` the fourth-order determinant factors as `d(ik)·d(k)`.
//!
//! Everything here goes through an explicit Runge–Kutta integration of the
//! Jost ODE, deliberately sharing no code with the Nyström determinant path,
//! so agreement between the two is an independent consistency check.

use num_complex::Complex64;

use crate::coeffs::CompactCoeff;
use crate::error::{Error, Result};
use crate::kernels::sinc;

/// Default local error tolerance for the adaptive Jost integration.
pub const DEFAULT_ODE_TOL: f64 = 1e-11;

/// Value of the Jost function at the origin for one wavenumber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JostEval {
    /// Wavenumber at which the Jost function was evaluated.
    pub k: Complex64,
    /// Boundary value `f₊(0, k)`.
    pub d: Complex64,
    /// Local error tolerance used by the step controller.
    pub ode_tolerance: f64,
}

/// Dormand–Prince 5(4) tableau (classic `ode45` coefficients).
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order solution weights (row 7 of `A`; the method is FSAL).
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
/// Embedded fourth-order weights used for the error estimate.
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

type State = [Complex64; 2];

#[inline]
fn rhs(potential: &dyn Fn(f64) -> f64, k2: Complex64, x: f64, y: &State) -> State {
    [y[1], -(k2 + potential(x)) * y[0]]
}

/// Integrates the Jost ODE over one smooth interval `[lo, hi]`, advancing the
/// state `y = (f, f′)` from `x = hi` down to `x = lo`.
///
/// Adaptive Dormand–Prince 5(4) with a PI step-size controller; `potential`
/// must be smooth on the closed interval (we evaluate its polynomial
/// extension at the endpoints, so coefficient jumps must coincide with the
/// interval boundaries chosen by the caller).
fn integrate_down(
    potential: &dyn Fn(f64) -> f64,
    k2: Complex64,
    lo: f64,
    hi: f64,
    y: &mut State,
    tol: f64,
) -> Result<()> {
    let span = hi - lo;
    if span <= 0.0 {
        return Ok(());
    }
    let mut x = hi;
    let mut h = -(span / 16.0);
    let mut err_prev: f64 = 1.0;
    let mut stages: [State; 7] = [[Complex64::default(); 2]; 7];
    stages[0] = rhs(potential, k2, x, y);
    let mut first_same_as_last = true;

    while x > lo {
        if x + h < lo {
            h = lo - x;
            first_same_as_last = false; // stage 0 must be rebuilt after clipping
        }
        if h.abs() < 1e-13 * span {
            return Err(Error::OdeFailure { x, step: h });
        }
        if !first_same_as_last {
            stages[0] = rhs(potential, k2, x, y);
        }
        for s in 1..7 {
            let mut ys = *y;
            for (j, st) in stages.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    ys[0] += h * a * st[0];
                    ys[1] += h * a * st[1];
                }
            }
            stages[s] = rhs(potential, k2, x + C[s] * h, &ys);
        }
        let mut y5 = *y;
        let mut err_vec = [Complex64::default(); 2];
        for (s, st) in stages.iter().enumerate() {
            let db = B5[s] - B4[s];
            for i in 0..2 {
                if B5[s] != 0.0 {
                    y5[i] += h * B5[s] * st[i];
                }
                if db != 0.0 {
                    err_vec[i] += h * db * st[i];
                }
            }
        }
        // Purely state-relative control: the Jost data `e^{ikγ}` can be many
        // orders of magnitude below 1, and any absolute-error floor would
        // seed the mode that grows like `e^{-ik x}` on the way down.
        let state_norm = y[0]
            .norm()
            .max(y[1].norm())
            .max(y5[0].norm())
            .max(y5[1].norm())
            .max(f64::MIN_POSITIVE);
        let mut err: f64 = 0.0;
        for e in &err_vec {
            let r = e.norm() / (tol * state_norm);
            err += r * r;
        }
        err = (err / 2.0).sqrt().max(1e-20);

        if err <= 1.0 {
            x += h;
            *y = y5;
            // FSAL: the seventh stage is the derivative at the accepted point.
            stages[0] = stages[6];
            first_same_as_last = true;
            let factor = (0.9 * err.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0)).clamp(0.2, 5.0);
            err_prev = err;
            h *= factor;
        } else {
            let factor = (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            h *= factor;
            first_same_as_last = true; // state unchanged; stage 0 still valid
        }
    }
    Ok(())
}

/// Evaluates the Jost function `d(k) = f₊(0, k)` for `h = -d²/dx² - p`.
///
/// Integrates the Jost ODE backward from the support end `γ` with data
/// `f₊(γ) = e^{ikγ}`, `f₊′(γ) = ik·e^{ikγ}`, restarting the one-step method
/// at every breakpoint of `p` so that each sub-integration sees a smooth
/// polynomial potential.  For `p ≡ 0` the result is exactly 1.
pub fn jost_d(p: &CompactCoeff, k: Complex64, ode_tolerance: f64) -> Result<JostEval> {
    if k.norm() == 0.0 {
        return Err(Error::InvalidInput(
            "the Jost function is evaluated away from k = 0".into(),
        ));
    }
    if !(ode_tolerance.is_finite() && ode_tolerance > 0.0) {
        return Err(Error::InvalidInput(format!(
            "ODE tolerance must be positive, got {ode_tolerance}"
        )));
    }
    if p.pieces().iter().all(|pc| pc.coeffs.iter().all(|c| *c == 0.0)) {
        // Free potential: f₊ = e^{ikx} exactly, so the boundary value is 1.
        return Ok(JostEval {
            k,
            d: Complex64::new(1.0, 0.0),
            ode_tolerance,
        });
    }
    let gamma = p.support_end();
    let k2 = k * k;
    let mut y: State = [(Complex64::i() * k * gamma).exp(), Complex64::default()];
    y[1] = Complex64::i() * k * y[0];

    let bps = p.breakpoints();
    // Walk the smooth intervals from the right end of the support down to 0.
    for w in bps.windows(2).rev() {
        let (lo, hi) = (w[0], w[1]);
        let mid = 0.5 * (lo + hi);
        let local: Box<dyn Fn(f64) -> f64> = match p.pieces().iter().find(|pc| pc.x0 <= mid && mid <= pc.x1) {
            Some(pc) => {
                let pc = pc.clone();
                Box::new(move |x| pc.eval(x))
            }
            None => Box::new(|_| 0.0),
        };
        integrate_down(local.as_ref(), k2, lo, hi, &mut y, ode_tolerance)?;
    }
    Ok(JostEval {
        k,
        d: y[0],
        ode_tolerance,
    })
}

/// Closed-form Jost value for a constant potential `p = c·1_{[0,γ]}`.
///
/// Matching `e^{ikx}` at `x = γ` against the interior solution with
/// wavenumber `ω = √(k² + c)` gives
/// `d(k) = e^{ikγ}·(cos ωγ − ik·γ·sinc(ωγ))`; both factors are even in `ω`,
/// so the branch of the square root is immaterial.
pub fn jost_d_constant(c: f64, gamma: f64, k: Complex64) -> Complex64 {
    let omega = (k * k + c).sqrt();
    let z = omega * gamma;
    (Complex64::i() * k * gamma).exp() * (z.cos() - Complex64::i() * k * gamma * sinc(z))
}

/// Determinant of the squared case through the second-order oracle.
///
/// When the fourth-order coefficient pair is `(p, p″ + p²)` the Fredholm
/// determinant factors as `D(k) = d(ik)·d(k)`; this evaluates that product
/// entirely through the Jost ODE.
pub fn oracle_det(p: &CompactCoeff, k: Complex64, ode_tolerance: f64) -> Result<Complex64> {
    let rotated = jost_d(p, Complex64::i() * k, ode_tolerance)?;
    let plain = jost_d(p, k, ode_tolerance)?;
    Ok(rotated.d * plain.d)
}
