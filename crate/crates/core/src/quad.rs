//! Quadrature engine: Gauss-Legendre rules, adaptive panel integration,
//! and generalized Gauss-Laguerre rules (Golub-Welsch) matched to the
//! u^a e^{-u} weight structure of the radial eigenfunctions.

use crate::error::{AbError, Result};
use crate::specfun::ln_gamma;
use num_complex::Complex64;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GlRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn gl_cache() -> &'static Mutex<HashMap<usize, Arc<GlRule>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GlRule>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Gauss-Legendre rule of order n (Newton iteration on the Legendre
/// recurrence; nodes converge to machine precision in a few steps).
pub fn gauss_legendre(n: usize) -> Arc<GlRule> {
    assert!(n >= 1);
    if let Some(r) = gl_cache().lock().unwrap().get(&n) {
        return r.clone();
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-style initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            // Legendre P_n(x) and derivative by recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            pp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / pp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let rule = Arc::new(GlRule { nodes, weights });
    gl_cache().lock().unwrap().insert(n, rule.clone());
    rule
}

/// Fixed 15-point Gauss-Legendre estimate of int_a^b f.
pub fn gl_fixed<F: Fn(f64) -> Complex64 + ?Sized>(f: &F, a: f64, b: f64, n: usize) -> Complex64 {
    let rule = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = Complex64::new(0.0, 0.0);
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * f(c + h * x);
    }
    acc * h
}

struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn make_panel<F: Fn(f64) -> Complex64 + ?Sized>(f: &F, a: f64, b: f64) -> Panel {
    let whole = gl_fixed(f, a, b, 15);
    let mid = 0.5 * (a + b);
    let halves = gl_fixed(f, a, mid, 15) + gl_fixed(f, mid, b, 15);
    Panel { a, b, value: halves, err: (halves - whole).norm() }
}

/// Adaptive Gauss-Legendre integration of a complex integrand to the given
/// absolute tolerance, by global worst-panel refinement. `max_depth`
/// bounds the panel count as 2^max_depth; exhausting it is an error
/// rather than a silent degradation.
pub fn adaptive_quad<F: Fn(f64) -> Complex64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_depth: u32,
) -> Result<(Complex64, f64)> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(AbError::InvalidArgument("adaptive_quad needs finite endpoints".into()));
    }
    let abs_tol = abs_tol.max(1e-300);
    let max_panels = 1usize << max_depth.min(14);
    let mut heap = std::collections::BinaryHeap::new();
    let first = make_panel(f, a, b);
    let mut total_err = first.err;
    heap.push(first);
    while total_err > abs_tol {
        if heap.len() >= max_panels {
            return Err(AbError::QuadratureFailure(format!(
                "adaptive refinement exhausted at {} panels on [{a}, {b}], err ~ {total_err:.3e} > {abs_tol:.3e}",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("nonempty heap");
        total_err -= worst.err;
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval at floating-point resolution; keep as is
            heap.push(Panel { err: 0.0, ..worst });
            continue;
        }
        let left = make_panel(f, worst.a, mid);
        let right = make_panel(f, mid, worst.b);
        total_err += left.err + right.err;
        heap.push(left);
        heap.push(right);
    }
    let value = heap.iter().map(|p| p.value).sum();
    let err = heap.iter().map(|p| p.err).sum();
    Ok((value, err))
}

/// Real-valued wrapper around [`adaptive_quad`].
pub fn adaptive_quad_real<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_depth: u32,
) -> Result<(f64, f64)> {
    let (v, e) = adaptive_quad(&|x: f64| Complex64::new(f(x), 0.0), a, b, abs_tol, max_depth)?;
    Ok((v.re, e))
}

/// Generalized Gauss-Laguerre rule: nodes u_i and weights w_i with
/// sum_i w_i g(u_i) ~ int_0^infty u^a e^{-u} g(u) du, exact for
/// polynomials g of degree <= 2n-1.
#[derive(Debug, Clone)]
pub struct GglRule {
    pub alpha: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// ln of each weight, kept for overflow-free weight conversions.
    pub ln_weights: Vec<f64>,
}

impl GglRule {
    /// Weights converted to a plain du-rule on the same nodes:
    /// sum_i wt_i h(u_i) ~ int_0^infty h(u) du for h concentrated where the
    /// nodes live. wt_i = w_i u_i^{-a} e^{u_i}, computed in log space.
    pub fn plain_du_weights(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .zip(&self.ln_weights)
            .map(|(&u, &lw)| (lw + u - self.alpha * u.ln()).exp())
            .collect()
    }
}

fn ggl_cache() -> &'static Mutex<HashMap<(u64, usize), Arc<GglRule>>> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, usize), Arc<GglRule>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Golub-Welsch construction of the generalized Gauss-Laguerre rule for
/// weight u^alpha e^{-u}, alpha > -1.
pub fn gauss_gen_laguerre(alpha: f64, n: usize) -> Result<Arc<GglRule>> {
    if !(alpha > -1.0) {
        return Err(AbError::Domain(format!(
            "gauss_gen_laguerre requires alpha > -1, got {alpha}"
        )));
    }
    if n == 0 {
        return Err(AbError::InvalidArgument("gauss_gen_laguerre needs n >= 1".into()));
    }
    let key = (alpha.to_bits(), n);
    if let Some(r) = ggl_cache().lock().unwrap().get(&key) {
        return Ok(r.clone());
    }
    // Jacobi matrix of the Laguerre recurrence.
    let mut d: Vec<f64> = (0..n).map(|i| 2.0 * i as f64 + alpha + 1.0).collect();
    let mut e: Vec<f64> = (0..n)
        .map(|i| {
            let i1 = i as f64 + 1.0;
            (i1 * (i1 + alpha)).sqrt()
        })
        .collect();
    e[n - 1] = 0.0;
    let mut z = vec![0.0; n];
    z[0] = 1.0;
    tql_first_row(&mut d, &mut e, &mut z)?;
    // Sort ascending by node.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap());
    let ln_mu0 = ln_gamma(alpha + 1.0);
    let nodes: Vec<f64> = idx.iter().map(|&i| d[i]).collect();
    let ln_weights: Vec<f64> = idx.iter().map(|&i| ln_mu0 + 2.0 * z[i].abs().max(1e-300).ln()).collect();
    let weights: Vec<f64> = ln_weights.iter().map(|&lw| lw.exp()).collect();
    let rule = Arc::new(GglRule { alpha, nodes, weights, ln_weights });
    ggl_cache().lock().unwrap().insert(key, rule.clone());
    Ok(rule)
}

/// Implicit-shift QL iteration for a symmetric tridiagonal matrix,
/// accumulating the rotations only on the supplied row vector `z`
/// (all that Golub-Welsch weights need).
fn tql_first_row(d: &mut [f64], e: &mut [f64], z: &mut [f64]) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(AbError::NonConvergence(
                    "tridiagonal QL did not converge".into(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.abs().copysign(g));
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Equispaced angular nodes theta_l = 2 pi l / n on [0, 2 pi); the matching
/// trapezoid weight is 2 pi / n for every node.
pub fn angular_nodes(n: usize) -> Vec<f64> {
    (0..n).map(|l| 2.0 * std::f64::consts::PI * l as f64 / n as f64).collect()
}
