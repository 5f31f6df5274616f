//! Gauss–Legendre quadrature, composite grids, and product-integration
//! weights for the `|x - y|`-type kink of the kernels.
//!
//! The Nyström discretization built in [`crate::fredholm`] uses one
//! Gauss–Legendre rule per coefficient piece (so integrands are smooth within
//! each piece except for the diagonal kink) together with the
//! product-integration correction weights computed here: for nodes `x_i` and
//! Lagrange basis `ℓ_j` on a piece, the matrix
//! `ΔW_ij = ∫ ℓ_j(y) |x_i - y| dy - w_j |x_i - x_j|`
//! converts a plain Nyström product into an exact integral of
//! `|x - y| × (polynomial)`.  `ΔW` is independent of `k`, so it is computed
//! once per grid and cached by the determinant code.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::coeffs::CoeffPair;
use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes increasing.
///
/// Nodes are Newton-refined roots of the Legendre polynomial; for the orders
/// used here (`n <= 1024`) they are accurate to machine precision.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-style initial guess for the i-th root (descending order).
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P_n'(x).
            let mut p0 = 1.0;
            let mut p1 = x;
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
        if n % 2 == 1 && i == m - 1 {
            nodes[i] = 0.0;
        }
    }
    (nodes, weights)
}

/// A composite Gauss–Legendre rule: the same `order` on each of a list of
/// contiguous pieces.
#[derive(Clone, Debug)]
pub struct Quadrature {
    /// Nodes per piece.
    pub order: usize,
    /// All physical nodes, increasing.
    pub nodes: Vec<f64>,
    /// Matching weights.
    pub weights: Vec<f64>,
    pieces: Vec<(f64, f64)>,
    /// Standard-interval nodes and weights, shared by all pieces.
    std_nodes: Vec<f64>,
    std_weights: Vec<f64>,
}

impl Quadrature {
    /// Builds the composite rule over explicit pieces (must be sorted and
    /// non-degenerate).
    pub fn composite(pieces: &[(f64, f64)], order: usize) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidInput("no quadrature pieces".into()));
        }
        if order < 2 {
            return Err(Error::InvalidInput("quadrature order must be at least 2".into()));
        }
        for &(a, b) in pieces {
            if !(b > a) {
                return Err(Error::InvalidInput(format!(
                    "degenerate quadrature piece [{a}, {b}]"
                )));
            }
        }
        let (std_nodes, std_weights) = gauss_legendre(order);
        let mut nodes = Vec::with_capacity(order * pieces.len());
        let mut weights = Vec::with_capacity(order * pieces.len());
        for &(a, b) in pieces {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (&t, &w) in std_nodes.iter().zip(&std_weights) {
                nodes.push(mid + half * t);
                weights.push(half * w);
            }
        }
        Ok(Quadrature {
            order,
            nodes,
            weights,
            pieces: pieces.to_vec(),
            std_nodes,
            std_weights,
        })
    }

    /// Composite rule adapted to a coefficient pair: one Gauss rule between
    /// each pair of consecutive merged breakpoints.
    pub fn for_pair(pair: &CoeffPair, order: usize) -> Result<Self> {
        let breaks = pair.merged_breakpoints();
        let pieces: Vec<(f64, f64)> = breaks.windows(2).map(|w| (w[0], w[1])).collect();
        Quadrature::composite(&pieces, order)
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// `true` when the rule has no nodes (never, for a validated rule).
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The pieces this rule was built on.
    pub fn pieces(&self) -> &[(f64, f64)] {
        &self.pieces
    }

    /// `∫ f` over the union of pieces.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Product-integration corrections for the kink factor `|x - y|`.
    ///
    /// Returns the full matrix `ΔW` (block-diagonal over pieces; integrating
    /// across a piece boundary never crosses the kink, so those blocks are
    /// exactly zero).
    pub fn kink_corrections(&self) -> DMatrix<f64> {
        let n_tot = self.len();
        let order = self.order;
        let mut delta = DMatrix::zeros(n_tot, n_tot);

        // Barycentric weights of the Gauss nodes on [-1, 1] (common factor
        // irrelevant): lambda_j ∝ (-1)^j sqrt((1 - t_j^2) w_j).
        let lambda: Vec<f64> = self
            .std_nodes
            .iter()
            .zip(&self.std_weights)
            .enumerate()
            .map(|(j, (&t, &w))| {
                let s = ((1.0 - t * t) * w).sqrt();
                if j % 2 == 0 {
                    s
                } else {
                    -s
                }
            })
            .collect();
        let n_aux = order / 2 + 4;
        let (aux_nodes, aux_weights) = gauss_legendre(n_aux);

        // The standard-interval correction is the same for every piece; the
        // physical correction scales by half^2.
        let mut std_delta = DMatrix::<f64>::zeros(order, order);
        let mut basis = vec![0.0; order];
        for i in 0..order {
            let ti = self.std_nodes[i];
            for (p0, p1) in [(-1.0, ti), (ti, 1.0)] {
                let h = 0.5 * (p1 - p0);
                if h <= 0.0 {
                    continue;
                }
                let m = 0.5 * (p0 + p1);
                for (&s, &wa) in aux_nodes.iter().zip(&aux_weights) {
                    let y = m + h * s;
                    // Lagrange basis values at y via the barycentric formula.
                    let mut den = 0.0;
                    for j in 0..order {
                        let r = lambda[j] / (y - self.std_nodes[j]);
                        basis[j] = r;
                        den += r;
                    }
                    let f = wa * h * (ti - y).abs() / den;
                    for j in 0..order {
                        std_delta[(i, j)] += f * basis[j];
                    }
                }
            }
            for j in 0..order {
                std_delta[(i, j)] -= self.std_weights[j] * (ti - self.std_nodes[j]).abs();
            }
        }

        for (pi, &(a, b)) in self.pieces.iter().enumerate() {
            let half = 0.5 * (b - a);
            let scale = half * half;
            let off = pi * order;
            for i in 0..order {
                for j in 0..order {
                    delta[(off + i, off + j)] = scale * std_delta[(i, j)];
                }
            }
        }
        delta
    }
}

/// Adaptive complex-valued integration of `f` over `[a, b]` to tolerance
/// `tol`, by interval bisection with a 15-point Gauss rule.
pub fn adaptive_quad(
    f: &dyn Fn(f64) -> Complex64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<Complex64> {
    let (nodes, weights) = gauss_legendre(15);
    fn gl(
        f: &dyn Fn(f64) -> Complex64,
        a: f64,
        b: f64,
        nodes: &[f64],
        weights: &[f64],
    ) -> Complex64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = Complex64::new(0.0, 0.0);
        for (&t, &w) in nodes.iter().zip(weights) {
            acc += w * f(mid + half * t);
        }
        acc * half
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> Complex64,
        a: f64,
        b: f64,
        whole: Complex64,
        tol: f64,
        scale: f64,
        depth: usize,
        nodes: &[f64],
        weights: &[f64],
    ) -> Result<Complex64> {
        let mid = 0.5 * (a + b);
        let left = gl(f, a, mid, nodes, weights);
        let right = gl(f, mid, b, nodes, weights);
        let sum = left + right;
        let err = (sum - whole).norm();
        // The split tolerance is floored at roundoff relative to the global
        // result scale, so deep recursion (e.g. toward an integrand jump)
        // cannot chase an unreachable target.
        if err <= tol.max(5e-14 * scale) || b - a < 1e-14 * b.abs().max(1.0) {
            return Ok(sum);
        }
        if depth >= 48 {
            return Err(Error::NoConvergence { tol, err_est: err, prev: whole, last: sum });
        }
        Ok(rec(f, a, mid, left, 0.5 * tol, scale, depth + 1, nodes, weights)?
            + rec(f, mid, b, right, 0.5 * tol, scale, depth + 1, nodes, weights)?)
    }
    let whole = gl(f, a, b, &nodes, &weights);
    let scale = 1.0 + whole.norm();
    rec(f, a, b, whole, tol, scale, 0, &nodes, &weights)
}
