//! Free-resolvent kernels on the half-line and their diagonal-kink split.
//!
//! Everything here concerns the constant-coefficient problems with the
//! boundary conditions `y(0) = y''(0) = 0`:
//!
//! * `r0` is the kernel of `(-d²/dx² - k²)^{-1}` with `y(0) = 0`;
//! * `r0_fourth` is the kernel of `(d⁴/dx⁴ - k⁴)^{-1}` with
//!   `y(0) = y''(0) = 0`, and `dr0_fourth_dx` / `dr0_fourth_dy` /
//!   `dr0_fourth_dxdy` are its partial derivatives, with the convention
//!   `sign(0) = 0` on the diagonal.
//!
//! All kernels are built from the four exponentials
//! `A = e^{ik|x-y|}`, `B = e^{ik(x+y)}`, `C = e^{-k|x-y|}`, `D = e^{-k(x+y)}`.
//! As functions of `v = x - y` they are smooth except for a `|v|`-type kink
//! (or, for the mixed first derivatives, a `v|v|`-type one) on the diagonal;
//! the crate-internal `kink_g11` / `kink_g12` / `kink_g22` return the
//! densities `g` in the exact splits `kernel = smooth + |v| · g(k, v)`, which
//! the determinant code combines with product-integration weights.

use num_complex::Complex64;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Smallest admissible `|k|` for a support of length `gamma`: the kernels
/// scale like `k^{-3}` near the origin and all routines refuse smaller `|k|`.
pub fn k_min(gamma: f64) -> f64 {
    1e-3 / gamma
}

/// Validates `|k| >= k_min(gamma)`.
pub fn ensure_k(k: Complex64, gamma: f64) -> crate::error::Result<()> {
    let min = k_min(gamma);
    if k.norm() < min {
        return Err(crate::error::Error::KTooSmall { abs_k: k.norm(), min });
    }
    Ok(())
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn exps(k: Complex64, x: f64, y: f64) -> (Complex64, Complex64, Complex64, Complex64) {
    let u = (x - y).abs();
    let s = x + y;
    let a = (I * k * u).exp();
    let b = (I * k * s).exp();
    let c = (-k * u).exp();
    let d = (-k * s).exp();
    (a, b, c, d)
}

/// Second-order free-resolvent kernel `(i/2k)(A - B)`.
pub fn r0(k: Complex64, x: f64, y: f64) -> Complex64 {
    let (a, b, _, _) = exps(k, x, y);
    I / (2.0 * k) * (a - b)
}

/// Fourth-order free-resolvent kernel `(i/4k³)(A - B + iC - iD)`.
pub fn r0_fourth(k: Complex64, x: f64, y: f64) -> Complex64 {
    let (a, b, c, d) = exps(k, x, y);
    I / (4.0 * k * k * k) * (a - b + I * c - I * d)
}

/// `∂/∂x` of [`r0_fourth`]; on the diagonal the convention `sign(0) = 0`
/// applies.
pub fn dr0_fourth_dx(k: Complex64, x: f64, y: f64) -> Complex64 {
    let (a, b, c, d) = exps(k, x, y);
    let s = sign(x - y);
    -(s * a - b - s * c + d) / (4.0 * k * k)
}

/// `∂/∂y` of [`r0_fourth`]; on the diagonal the convention `sign(0) = 0`
/// applies.
pub fn dr0_fourth_dy(k: Complex64, x: f64, y: f64) -> Complex64 {
    let (a, b, c, d) = exps(k, x, y);
    let s = sign(x - y);
    (s * a + b - s * c - d) / (4.0 * k * k)
}

/// `∂²/∂x∂y` of [`r0_fourth`] away from the diagonal, extended continuously
/// to it.
pub fn dr0_fourth_dxdy(k: Complex64, x: f64, y: f64) -> Complex64 {
    let (a, b, c, d) = exps(k, x, y);
    (I * (a + b) + (c + d)) / (4.0 * k)
}

// --- entire even combinations used by the kink split --------------------

/// `sin(z)/z`, stable for small `|z|`.
pub(crate) fn sinc(z: Complex64) -> Complex64 {
    if z.norm() < 0.1 {
        let z2 = z * z;
        1.0 + z2 * (-1.0 / 6.0 + z2 * (1.0 / 120.0 + z2 * (-1.0 / 5040.0 + z2 / 362_880.0)))
    } else {
        z.sin() / z
    }
}

/// `sinh(z)/z`, stable for small `|z|`.
pub(crate) fn sinhc(z: Complex64) -> Complex64 {
    if z.norm() < 0.1 {
        let z2 = z * z;
        1.0 + z2 * (1.0 / 6.0 + z2 * (1.0 / 120.0 + z2 * (1.0 / 5040.0 + z2 / 362_880.0)))
    } else {
        z.sinh() / z
    }
}

/// `(sin z - sinh z)/z`, with the leading cancellation removed analytically.
pub(crate) fn sinc_minus_sinhc(z: Complex64) -> Complex64 {
    if z.norm() < 0.5 {
        let z4 = (z * z) * (z * z);
        -(z * z) / 3.0 * (1.0 + z4 * (1.0 / 840.0 + z4 / 6_652_800.0))
    } else {
        (z.sin() - z.sinh()) / z
    }
}

/// `(cos z - cosh z)/z²`, with the leading cancellation removed analytically.
pub(crate) fn coshdiff(z: Complex64) -> Complex64 {
    if z.norm() < 0.5 {
        let z4 = (z * z) * (z * z);
        -(1.0 + z4 * (1.0 / 360.0 + z4 / 1_814_400.0))
    } else {
        (z.cos() - z.cosh()) / (z * z)
    }
}

// --- kink densities -----------------------------------------------------
//
// With v = x - y, the assembled kernel blocks
//   K11 = -dr0_fourth_dxdy, K12 = dr0_fourth_dx,
//   K21 = -dr0_fourth_dy,  K22 = r0_fourth
// split as  K(x, y) = smooth(x, y) + |v| * g(k, v)  with the following
// entire, k-even densities (g12 serves both off-diagonal blocks).

/// Kink density of the `-∂²R₀/∂x∂y` block: `(sinc(kv) + sinhc(kv))/4`.
pub(crate) fn kink_g11(k: Complex64, v: f64) -> Complex64 {
    (sinc(k * v) + sinhc(k * v)) / 4.0
}

/// Kink density of both mixed blocks: `-v·(cos kv - cosh kv)/(4 (kv)²) · k² v`
/// written stably as `-v · coshdiff(kv) / 4`.
pub(crate) fn kink_g12(k: Complex64, v: f64) -> Complex64 {
    -v * coshdiff(k * v) / 4.0
}

/// Kink density of the `R₀` block: `-(sinc(kv) - sinhc(kv))/(4k²)`.
pub(crate) fn kink_g22(k: Complex64, v: f64) -> Complex64 {
    -sinc_minus_sinhc(k * v) / (4.0 * k * k)
}
