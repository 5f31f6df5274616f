//! Compactly supported piecewise-polynomial coefficients.
//!
//! The operators treated by this crate have two real coefficients `p` and `q`
//! supported on a common interval `[0, gamma]`.  Both are represented as
//! [`CompactCoeff`]: a sorted list of non-overlapping pieces, each a
//! polynomial in the local variable `x - x0` of degree at most
//! [`MAX_DEGREE`].  Gaps between pieces (and everything outside the support)
//! are identically zero, and evaluation is right-continuous at breakpoints,
//! so step discontinuities are first-class citizens.
//!
//! [`CoeffPair`] bundles `p` and `q` on a common support and caches the
//! handful of integrals (`p0`, `q0`, the edge value `p(gamma-0)`) that the
//! asymptotic formulas need.  [`BeamCoeffs`] holds the two positive profiles
//! of an Euler–Bernoulli beam in offset form; the change of variables that
//! turns a beam into a `CoeffPair` lives in this module as
//! [`liouville_transform`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use crate::liouville::{kappa_integral, liouville_transform, TransformOptions, TransformOutput};

/// Maximum polynomial degree of a single piece.
pub const MAX_DEGREE: usize = 16;

/// Relative tolerance used when comparing breakpoints.
pub(crate) const BREAK_TOL: f64 = 1e-12;

/// One polynomial piece: the value on `[x0, x1)` is
/// `sum_j coeffs[j] * (x - x0)^j`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Piece {
    /// Left endpoint of the piece.
    pub x0: f64,
    /// Right endpoint of the piece.
    pub x1: f64,
    /// Monomial coefficients in the local variable `x - x0`, constant first.
    pub coeffs: Vec<f64>,
}

impl Piece {
    /// Value of the piece polynomial at `x` (no support check).
    pub fn eval(&self, x: f64) -> f64 {
        let u = x - self.x0;
        let mut acc = 0.0;
        for &c in self.coeffs.iter().rev() {
            acc = acc * u + c;
        }
        acc
    }

    /// Value of the `n`-th derivative of the piece polynomial at `x`.
    pub fn eval_derivative(&self, x: f64, n: usize) -> f64 {
        let u = x - self.x0;
        let mut acc = 0.0;
        for j in (n..self.coeffs.len()).rev() {
            let mut f = 1.0;
            for m in 0..n {
                f *= (j - m) as f64;
            }
            acc = acc * u + f * self.coeffs[j];
        }
        acc
    }

    /// Exact integral of the piece polynomial over `[x0, x1]`.
    pub fn integral(&self) -> f64 {
        let h = self.x1 - self.x0;
        let mut acc = 0.0;
        for (j, &c) in self.coeffs.iter().enumerate().rev() {
            acc = acc * h + c / (j as f64 + 1.0);
        }
        acc * h
    }

    /// Coefficients of the derivative polynomial (same local variable).
    fn derivative_coeffs(&self) -> Vec<f64> {
        if self.coeffs.len() <= 1 {
            return vec![0.0];
        }
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(j, &c)| j as f64 * c)
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if !self.x0.is_finite() || !self.x1.is_finite() || self.x1 <= self.x0 {
            return Err(Error::InvalidInput(format!(
                "piece endpoints must be finite with x0 < x1, got [{}, {}]",
                self.x0, self.x1
            )));
        }
        if self.coeffs.is_empty() {
            return Err(Error::InvalidInput("piece has no coefficients".into()));
        }
        if self.coeffs.len() > MAX_DEGREE + 1 {
            return Err(Error::InvalidInput(format!(
                "piece degree {} exceeds the maximum {}",
                self.coeffs.len() - 1,
                MAX_DEGREE
            )));
        }
        if self.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("piece has non-finite coefficients".into()));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct RawCoeff {
    support_end: f64,
    pieces: Vec<Piece>,
}

/// A compactly supported piecewise polynomial on `[0, support_end]`.
///
/// Evaluation is right-continuous; [`CompactCoeff::left_limit`] recovers the
/// limit from the left at breakpoints (in particular the edge value at
/// `support_end`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCoeff", into = "RawCoeff")]
pub struct CompactCoeff {
    support_end: f64,
    pieces: Vec<Piece>,
}

impl From<CompactCoeff> for RawCoeff {
    fn from(c: CompactCoeff) -> Self {
        RawCoeff { support_end: c.support_end, pieces: c.pieces }
    }
}

impl TryFrom<RawCoeff> for CompactCoeff {
    type Error = Error;
    fn try_from(raw: RawCoeff) -> Result<Self> {
        CompactCoeff::new(raw.support_end, raw.pieces)
    }
}

impl CompactCoeff {
    /// Builds a coefficient from explicit pieces, validating the layout:
    /// pieces must be sorted, non-overlapping, contained in
    /// `[0, support_end]`, and of degree at most [`MAX_DEGREE`].
    pub fn new(support_end: f64, mut pieces: Vec<Piece>) -> Result<Self> {
        if !support_end.is_finite() || support_end <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "support_end must be positive and finite, got {support_end}"
            )));
        }
        for p in &pieces {
            p.validate()?;
        }
        pieces.sort_by(|a, b| a.x0.total_cmp(&b.x0));
        let slack = BREAK_TOL * support_end.max(1.0);
        let mut prev_end = 0.0_f64;
        for p in &pieces {
            if p.x0 < -slack || p.x1 > support_end + slack {
                return Err(Error::InvalidInput(format!(
                    "piece [{}, {}] lies outside the support [0, {support_end}]",
                    p.x0, p.x1
                )));
            }
            if p.x0 < prev_end - slack {
                return Err(Error::InvalidInput(format!(
                    "pieces overlap near x = {}",
                    p.x0
                )));
            }
            prev_end = p.x1;
        }
        Ok(CompactCoeff { support_end, pieces })
    }

    /// The identically zero coefficient on `[0, support_end]`.
    pub fn zero(support_end: f64) -> Self {
        CompactCoeff { support_end, pieces: Vec::new() }
    }

    /// A single polynomial piece covering all of `[0, support_end]`, with
    /// monomial coefficients in `x` (constant first).
    pub fn single(support_end: f64, coeffs: Vec<f64>) -> Result<Self> {
        CompactCoeff::new(
            support_end,
            vec![Piece { x0: 0.0, x1: support_end, coeffs }],
        )
    }

    /// A step of the given height on `[x0, x1]`, inside `[0, support_end]`.
    pub fn step(height: f64, x0: f64, x1: f64, support_end: f64) -> Result<Self> {
        CompactCoeff::new(support_end, vec![Piece { x0, x1, coeffs: vec![height] }])
    }

    /// Right end of the support interval.
    pub fn support_end(&self) -> f64 {
        self.support_end
    }

    /// The pieces, sorted by left endpoint.
    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// `true` if the coefficient is identically zero.
    pub fn is_zero(&self) -> bool {
        self.pieces
            .iter()
            .all(|p| p.coeffs.iter().all(|&c| c == 0.0))
    }

    /// Largest polynomial degree over all pieces (0 for the zero coefficient).
    pub fn max_degree(&self) -> usize {
        self.pieces
            .iter()
            .map(|p| p.coeffs.len().saturating_sub(1))
            .max()
            .unwrap_or(0)
    }

    /// Right-continuous evaluation; zero outside the support and in gaps.
    pub fn eval(&self, x: f64) -> f64 {
        for p in &self.pieces {
            if x >= p.x0 && x < p.x1 {
                return p.eval(x);
            }
        }
        0.0
    }

    /// Limit from the left at `x`; zero for `x <= 0`.
    pub fn left_limit(&self, x: f64) -> f64 {
        let slack = BREAK_TOL * self.support_end.max(1.0);
        for p in &self.pieces {
            if x > p.x0 + slack && x <= p.x1 + slack {
                return p.eval(x);
            }
        }
        0.0
    }

    /// Piecewise classical derivative (jumps at breakpoints are ignored; the
    /// result has the same piece layout).
    pub fn derivative(&self) -> CompactCoeff {
        let pieces = self
            .pieces
            .iter()
            .map(|p| Piece { x0: p.x0, x1: p.x1, coeffs: p.derivative_coeffs() })
            .collect();
        CompactCoeff { support_end: self.support_end, pieces }
    }

    /// Exact integral over the whole support.
    pub fn integral(&self) -> f64 {
        self.pieces.iter().map(Piece::integral).sum()
    }

    /// Sorted, de-duplicated breakpoints, always including `0` and
    /// `support_end`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = vec![0.0, self.support_end];
        for p in &self.pieces {
            pts.push(p.x0);
            pts.push(p.x1);
        }
        dedup_sorted(&mut pts, BREAK_TOL * self.support_end.max(1.0));
        pts
    }

    /// Re-embeds the coefficient into a larger support `[0, new_end]`.
    pub fn with_support_end(&self, new_end: f64) -> Result<CompactCoeff> {
        if new_end < self.support_end - BREAK_TOL * self.support_end.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "cannot shrink support from {} to {new_end}",
                self.support_end
            )));
        }
        Ok(CompactCoeff {
            support_end: new_end.max(self.support_end),
            pieces: self.pieces.clone(),
        })
    }

    /// Maximum of `|f|` on a dense sample (validation helper, not exact).
    pub fn max_abs_sampled(&self) -> f64 {
        let mut m = 0.0_f64;
        for p in &self.pieces {
            for i in 0..=64 {
                let x = p.x0 + (p.x1 - p.x0) * i as f64 / 64.0;
                m = m.max(p.eval(x).abs());
            }
        }
        m
    }

    /// Parses a coefficient from its JSON form
    /// `{"support_end": g, "pieces": [{"x0", "x1", "coeffs"}, ...]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Serializes to the JSON form accepted by [`CompactCoeff::from_json`].
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialization cannot fail")
    }
}

pub(crate) fn dedup_sorted(pts: &mut Vec<f64>, tol: f64) {
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= tol);
}

/// A `(p, q)` coefficient pair on a common support `[0, gamma]`, with the
/// integrals that the large-`|k|` asymptotics and trace formulas use cached
/// at construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawPair", into = "RawPair")]
pub struct CoeffPair {
    p: CompactCoeff,
    q: CompactCoeff,
    gamma: f64,
    p0: f64,
    q0: f64,
    p_plus: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPair {
    p: CompactCoeff,
    q: CompactCoeff,
}

impl From<CoeffPair> for RawPair {
    fn from(c: CoeffPair) -> Self {
        RawPair { p: c.p, q: c.q }
    }
}

impl TryFrom<RawPair> for CoeffPair {
    type Error = Error;
    fn try_from(raw: RawPair) -> Result<Self> {
        CoeffPair::new(raw.p, raw.q)
    }
}

impl CoeffPair {
    /// Bundles `p` and `q`, extending both supports to the larger of the two.
    pub fn new(p: CompactCoeff, q: CompactCoeff) -> Result<Self> {
        let gamma = p.support_end().max(q.support_end());
        let p = p.with_support_end(gamma)?;
        let q = q.with_support_end(gamma)?;
        let p0 = p.integral();
        let q0 = q.integral();
        let p_plus = p.left_limit(gamma);
        Ok(CoeffPair { p, q, gamma, p0, q0, p_plus })
    }

    /// The free pair `p = q = 0` on `[0, gamma]`.
    pub fn free(gamma: f64) -> Self {
        CoeffPair {
            p: CompactCoeff::zero(gamma),
            q: CompactCoeff::zero(gamma),
            gamma,
            p0: 0.0,
            q0: 0.0,
            p_plus: 0.0,
        }
    }

    /// First-order coefficient `p`.
    pub fn p(&self) -> &CompactCoeff {
        &self.p
    }

    /// Zeroth-order coefficient `q`.
    pub fn q(&self) -> &CompactCoeff {
        &self.q
    }

    /// Right end of the common support.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `∫ p`.
    pub fn p0(&self) -> f64 {
        self.p0
    }

    /// `∫ q`.
    pub fn q0(&self) -> f64 {
        self.q0
    }

    /// Edge value `p(gamma - 0)`.
    pub fn p_plus(&self) -> f64 {
        self.p_plus
    }

    /// `true` if both coefficients vanish identically.
    pub fn is_free(&self) -> bool {
        self.p.is_zero() && self.q.is_zero()
    }

    /// Union of the breakpoints of `p` and `q` (sorted, includes `0` and
    /// `gamma`).
    pub fn merged_breakpoints(&self) -> Vec<f64> {
        let mut pts = self.p.breakpoints();
        pts.extend(self.q.breakpoints());
        dedup_sorted(&mut pts, BREAK_TOL * self.gamma.max(1.0));
        pts
    }

    /// Parses a pair from `{"p": {...}, "q": {...}}`.
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Serializes to the JSON form accepted by [`CoeffPair::from_json`].
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialization cannot fail")
    }
}

/// Builds `q = p'' + p^2` so that the fourth-order operator factors as the
/// square of a second-order one.
///
/// Requires `p` of degree at most [`MAX_DEGREE`]`/2` (so `p^2` stays
/// representable), continuously differentiable across internal breakpoints,
/// and flat to first order at both ends of the support (`p` and `p'` vanish
/// at `0` and `gamma`); these are exactly the conditions under which the
/// squared operator has the same boundary behaviour and the determinant
/// factorizes over the second-order problem.
pub fn square_case_q(p: &CompactCoeff) -> Result<CompactCoeff> {
    if p.max_degree() > MAX_DEGREE / 2 {
        return Err(Error::InvalidInput(format!(
            "square-case construction needs deg p <= {}, got {}",
            MAX_DEGREE / 2,
            p.max_degree()
        )));
    }
    let gamma = p.support_end();
    let scale = p.max_abs_sampled().max(1.0);
    let tol = 1e-9 * scale;
    let dp = p.derivative();
    for &x in &p.breakpoints() {
        let (v_l, v_r) = (p.left_limit(x), p.eval(x));
        let (d_l, d_r) = (dp.left_limit(x), dp.eval(x));
        if (v_l - v_r).abs() > tol || (d_l - d_r).abs() > tol * gamma.max(1.0) {
            return Err(Error::InsufficientSmoothness(format!(
                "square-case construction needs p continuously differentiable; \
                 jump detected at x = {x:.6}"
            )));
        }
    }
    // Flatness at the ends; p and p' must vanish there after zero extension.
    for (x, v, d) in [
        (0.0, p.eval(0.0), dp.eval(0.0)),
        (gamma, p.left_limit(gamma), dp.left_limit(gamma)),
    ] {
        if v.abs() > tol || d.abs() > tol * gamma.max(1.0) {
            return Err(Error::InsufficientSmoothness(format!(
                "square-case construction needs p = p' = 0 at x = {x:.6}, \
                 got p = {v:.3e}, p' = {d:.3e}"
            )));
        }
    }

    let mut pieces = Vec::with_capacity(p.pieces().len());
    for piece in p.pieces() {
        // p'' coefficients.
        let n = piece.coeffs.len();
        let mut out = vec![0.0; (2 * (n.max(1) - 1) + 1).max(n.saturating_sub(2).max(1))];
        for j in 2..n {
            out[j - 2] += (j * (j - 1)) as f64 * piece.coeffs[j];
        }
        // p^2 coefficients (local variable is shared, so plain convolution).
        for (a, &ca) in piece.coeffs.iter().enumerate() {
            for (b, &cb) in piece.coeffs.iter().enumerate() {
                out[a + b] += ca * cb;
            }
        }
        while out.len() > 1 && *out.last().unwrap() == 0.0 {
            out.pop();
        }
        pieces.push(Piece { x0: piece.x0, x1: piece.x1, coeffs: out });
    }
    CompactCoeff::new(gamma, pieces)
}

/// Euler–Bernoulli beam profiles in offset form: the physical profiles are
/// `a(x) = 1 + ã(x)` and `b(x) = 1 + b̃(x)` on `[0, 1]`, both required to be
/// strictly positive, equal to `1` outside the pieces, and compatible with
/// the hinged end at `x = 0` (`3 a'/a + 5 b'/b` must vanish there).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawBeam", into = "RawBeam")]
pub struct BeamCoeffs {
    a_tilde: CompactCoeff,
    b_tilde: CompactCoeff,
}

#[derive(Serialize, Deserialize)]
struct RawBeam {
    a: CompactCoeff,
    b: CompactCoeff,
}

impl From<BeamCoeffs> for RawBeam {
    fn from(c: BeamCoeffs) -> Self {
        RawBeam { a: c.a_tilde, b: c.b_tilde }
    }
}

impl TryFrom<RawBeam> for BeamCoeffs {
    type Error = Error;
    fn try_from(raw: RawBeam) -> Result<Self> {
        BeamCoeffs::new(raw.a, raw.b)
    }
}

/// Tolerance for the hinged-end compatibility value `(3 a'/a + 5 b'/b)(0)`.
pub const BOUNDARY_CONSTRAINT_TOL: f64 = 1e-8;

impl BeamCoeffs {
    /// Validates and bundles the two offset profiles.
    pub fn new(a_tilde: CompactCoeff, b_tilde: CompactCoeff) -> Result<Self> {
        for (name, c) in [("a", &a_tilde), ("b", &b_tilde)] {
            if c.support_end() > 1.0 + BREAK_TOL {
                return Err(Error::InvalidInput(format!(
                    "beam profile `{name}` must be supported in [0, 1], \
                     got support end {}",
                    c.support_end()
                )));
            }
            // Positivity of 1 + offset on a dense per-piece sample.
            for piece in c.pieces() {
                for i in 0..=256 {
                    let x = piece.x0 + (piece.x1 - piece.x0) * i as f64 / 256.0;
                    let v = 1.0 + piece.eval(x);
                    if v <= 1e-10 {
                        return Err(Error::NonPositiveCoefficient {
                            which: if name == "a" { "a" } else { "b" },
                            at: x,
                            value: v,
                        });
                    }
                }
            }
        }
        let a_tilde = a_tilde.with_support_end(1.0)?;
        let b_tilde = b_tilde.with_support_end(1.0)?;
        let beam = BeamCoeffs { a_tilde, b_tilde };
        let constraint = 3.0 * beam.a_prime(0.0) / beam.a(0.0)
            + 5.0 * beam.b_prime(0.0) / beam.b(0.0);
        if constraint.abs() > BOUNDARY_CONSTRAINT_TOL {
            return Err(Error::BoundaryConstraintViolated {
                value: constraint,
                tol: BOUNDARY_CONSTRAINT_TOL,
            });
        }
        Ok(beam)
    }

    /// The uniform beam `a = b = 1`.
    pub fn identity() -> Self {
        BeamCoeffs {
            a_tilde: CompactCoeff::zero(1.0),
            b_tilde: CompactCoeff::zero(1.0),
        }
    }

    /// Offset profile `ã` (so `a = 1 + ã`).
    pub fn a_offset(&self) -> &CompactCoeff {
        &self.a_tilde
    }

    /// Offset profile `b̃` (so `b = 1 + b̃`).
    pub fn b_offset(&self) -> &CompactCoeff {
        &self.b_tilde
    }

    /// Stiffness profile `a(x)`, extended by `1` outside `[0, 1]`.
    pub fn a(&self, x: f64) -> f64 {
        1.0 + self.a_tilde.eval(x)
    }

    /// Density profile `b(x)`, extended by `1` outside `[0, 1]`.
    pub fn b(&self, x: f64) -> f64 {
        1.0 + self.b_tilde.eval(x)
    }

    /// Piecewise derivative `a'(x)` (right-continuous).
    pub fn a_prime(&self, x: f64) -> f64 {
        self.a_tilde.derivative().eval(x)
    }

    /// Piecewise derivative `b'(x)` (right-continuous).
    pub fn b_prime(&self, x: f64) -> f64 {
        self.b_tilde.derivative().eval(x)
    }

    /// Union of the breakpoints of the two profiles on `[0, 1]`.
    pub fn merged_breakpoints(&self) -> Vec<f64> {
        let mut pts = self.a_tilde.breakpoints();
        pts.extend(self.b_tilde.breakpoints());
        dedup_sorted(&mut pts, BREAK_TOL);
        pts
    }

    /// Parses beam profiles from `{"a": {...}, "b": {...}}` (offset form).
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Serializes to the JSON form accepted by [`BeamCoeffs::from_json`].
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialization cannot fail")
    }
}
