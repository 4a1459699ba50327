//! Exact spectral data of the magnetic Schrödinger operator: eigenvalues
//! lambda_{k,m} = (2m+1+|k+alpha|) B0 + (k+alpha) B0 with Laguerre-type
//! eigenfunctions, mode expansion/synthesis, and functional calculus by
//! spectral multipliers acting on coefficients.

use crate::error::{AbError, Result};
use crate::quad::{angular_nodes, gauss_gen_laguerre, gauss_legendre};
use crate::specfun::{laguerre_ortho_seq, ln_gamma, pkm_from_laguerre};
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Physical parameters of the field: Aharonov-Bohm flux `alpha` in (0,1)
/// and uniform field strength `b0 > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldConfig {
    alpha: f64,
    b0: f64,
}

impl FieldConfig {
    pub fn new(alpha: f64, b0: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(AbError::Domain(format!(
                "alpha must lie in the open interval (0,1), got {alpha}"
            )));
        }
        if !(b0 > 0.0) {
            return Err(AbError::Domain(format!("b0 must be positive, got {b0}")));
        }
        Ok(Self { alpha, b0 })
    }

    /// Normalize a user-supplied flux by dropping its integer part (gauge
    /// shifts by whole flux quanta). Integer flux is rejected: it is the
    /// flux-free case in disguise. Returns the config and whether the
    /// input was shifted.
    pub fn normalized(alpha_raw: f64, b0: f64) -> Result<(Self, bool)> {
        let frac = alpha_raw - alpha_raw.floor();
        if frac == 0.0 {
            return Err(AbError::Domain(format!(
                "alpha = {alpha_raw} is an integer flux; the operator is gauge-equivalent to the flux-free case"
            )));
        }
        let shifted = frac != alpha_raw;
        Ok((Self::new(frac, b0)?, shifted))
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    /// alpha_k = |k + alpha|, strictly positive for alpha in (0,1).
    pub fn alpha_k(&self, k: i64) -> f64 {
        (k as f64 + self.alpha).abs()
    }

    /// beta_k = (1 + |k+alpha|) B0 + (k+alpha) B0 >= B0.
    pub fn beta_k(&self, k: i64) -> f64 {
        (1.0 + self.alpha_k(k)) * self.b0 + (k as f64 + self.alpha) * self.b0
    }
}

/// Discrete spectral label: angular index k and radial index m.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeIndex {
    pub k: i64,
    pub m: u32,
}

impl ModeIndex {
    pub fn new(k: i64, m: u32) -> Self {
        Self { k, m }
    }
}

/// Rectangular truncation window of modes: all (k, m) with
/// k_min <= k <= k_max and 0 <= m <= m_max.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeSet {
    pub k_min: i64,
    pub k_max: i64,
    pub m_max: u32,
}

impl ModeSet {
    pub fn new(k_min: i64, k_max: i64, m_max: u32) -> Result<Self> {
        if k_min > k_max {
            return Err(AbError::InvalidArgument(format!(
                "ModeSet needs k_min <= k_max, got [{k_min}, {k_max}]"
            )));
        }
        Ok(Self { k_min, k_max, m_max })
    }

    /// Default truncation window.
    pub fn default_window() -> Self {
        Self { k_min: -32, k_max: 32, m_max: 64 }
    }

    pub fn contains(&self, mode: ModeIndex) -> bool {
        mode.k >= self.k_min && mode.k <= self.k_max && mode.m <= self.m_max
    }

    pub fn iter(&self) -> impl Iterator<Item = ModeIndex> + '_ {
        (self.k_min..=self.k_max)
            .flat_map(move |k| (0..=self.m_max).map(move |m| ModeIndex::new(k, m)))
    }

    pub fn len(&self) -> usize {
        ((self.k_max - self.k_min + 1) as usize) * (self.m_max as usize + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A point of the plane in polar coordinates; theta is reduced into
/// [0, 2 pi) on construction so the Aharonov-Bohm phase branch is fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarPoint {
    r: f64,
    theta: f64,
}

impl PolarPoint {
    pub fn new(r: f64, theta: f64) -> Result<Self> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(AbError::Domain(format!("radius must be finite and >= 0, got {r}")));
        }
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut t = theta % two_pi;
        if t < 0.0 {
            t += two_pi;
        }
        if t >= two_pi {
            t = 0.0;
        }
        Ok(Self { r, theta: t })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn from_cartesian(x: f64, y: f64) -> Self {
        let r = x.hypot(y);
        let theta = y.atan2(x);
        Self::new(r, theta).expect("finite cartesian input")
    }

    pub fn to_cartesian(&self) -> (f64, f64) {
        (self.r * self.theta.cos(), self.r * self.theta.sin())
    }

    pub fn dist(&self, other: &PolarPoint) -> f64 {
        let (x1, y1) = self.to_cartesian();
        let (x2, y2) = other.to_cartesian();
        (x1 - x2).hypot(y1 - y2)
    }
}

/// Eigenvalue lambda_{k,m} = (2m + 1 + |k+alpha|) B0 + (k+alpha) B0.
/// Always >= B0, with equality exactly on the bottom Landau level
/// (k <= -1, m = 0).
pub fn eigenvalue(cfg: &FieldConfig, mode: ModeIndex) -> f64 {
    (2.0 * mode.m as f64 + 1.0 + cfg.alpha_k(mode.k)) * cfg.b0()
        + (mode.k as f64 + cfg.alpha()) * cfg.b0()
}

/// ln of the squared L^2 norm of the unnormalized eigenfunction V_{k,m}:
/// pi (2/B0)^{alpha_k+1} Gamma(1+alpha_k) binom(m+alpha_k, m)^{-1}.
pub fn ln_mode_norm_sq(cfg: &FieldConfig, mode: ModeIndex) -> f64 {
    let a = cfg.alpha_k(mode.k);
    let m = mode.m as f64;
    let ln_binom = ln_gamma(m + a + 1.0) - ln_gamma(a + 1.0) - ln_gamma(m + 1.0);
    std::f64::consts::PI.ln() + (a + 1.0) * (2.0 / cfg.b0()).ln() + ln_gamma(1.0 + a) - ln_binom
}

/// Squared L^2 norm of V_{k,m}.
pub fn mode_norm_sq(cfg: &FieldConfig, mode: ModeIndex) -> f64 {
    ln_mode_norm_sq(cfg, mode).exp()
}

/// Eigenfunction V_{k,m}(p) = r^{alpha_k} e^{-B0 r^2/4} P_{k,m}(B0 r^2/2)
/// e^{i k theta}; with `normalized`, divided by its L^2 norm. The origin is
/// handled by the limit: all modes vanish there for alpha in (0,1).
pub fn eigenfunction(
    cfg: &FieldConfig,
    mode: ModeIndex,
    p: &PolarPoint,
    normalized: bool,
) -> Complex64 {
    let a = cfg.alpha_k(mode.k);
    let u = cfg.b0() * p.r() * p.r() / 2.0;
    let phase = Complex64::from_polar(1.0, mode.k as f64 * p.theta());
    if normalized {
        // sqrt(B0 / 2 pi) * orthonormal Laguerre function; stable for any m.
        let ell = laguerre_ortho_seq(a, u, mode.m as usize)[mode.m as usize];
        return (cfg.b0() / (2.0 * std::f64::consts::PI)).sqrt() * ell * phase;
    }
    if p.r() == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let radial = (a * p.r().ln() - u / 2.0).exp()
        * pkm_from_laguerre(a, mode.m, u).expect("alpha_k > 0");
    radial * phase
}

/// Number of modes in the window whose eigenvalue is within `tol` of
/// `lambda`.
pub fn multiplicity_in_window(
    cfg: &FieldConfig,
    lambda: f64,
    window: &ModeSet,
    tol: f64,
) -> usize {
    assert!(tol > 0.0, "tolerance must be positive");
    window
        .iter()
        .filter(|&mode| (eigenvalue(cfg, mode) - lambda).abs() <= tol)
        .count()
}

/// Finite spectral representation of an L^2 function: coefficients against
/// the L^2-normalized eigenbasis over a truncation window.
#[derive(Debug, Clone, PartialEq)]
pub struct StateCoeffs {
    config: FieldConfig,
    modes: ModeSet,
    coeffs: BTreeMap<ModeIndex, Complex64>,
}

impl StateCoeffs {
    pub fn new(
        config: FieldConfig,
        modes: ModeSet,
        coeffs: BTreeMap<ModeIndex, Complex64>,
    ) -> Result<Self> {
        if let Some(mode) = coeffs.keys().find(|m| !modes.contains(**m)) {
            return Err(AbError::InvalidArgument(format!(
                "coefficient at {mode:?} lies outside the mode window {modes:?}"
            )));
        }
        Ok(Self { config, modes, coeffs })
    }

    pub fn zero(config: FieldConfig, modes: ModeSet) -> Self {
        Self { config, modes, coeffs: BTreeMap::new() }
    }

    pub fn single(config: FieldConfig, modes: ModeSet, mode: ModeIndex, c: Complex64) -> Result<Self> {
        let mut map = BTreeMap::new();
        map.insert(mode, c);
        Self::new(config, modes, map)
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    pub fn coeffs(&self) -> &BTreeMap<ModeIndex, Complex64> {
        &self.coeffs
    }

    pub fn get(&self, mode: ModeIndex) -> Complex64 {
        self.coeffs.get(&mode).copied().unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Exact squared l^2 norm of the coefficient vector.
    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm_sqr()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let coeffs = self.coeffs.iter().map(|(&m, &v)| (m, c * v)).collect();
        Self { config: self.config, modes: self.modes, coeffs }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.config != other.config {
            return Err(AbError::InvalidArgument("states have different field configs".into()));
        }
        let modes = ModeSet::new(
            self.modes.k_min.min(other.modes.k_min),
            self.modes.k_max.max(other.modes.k_max),
            self.modes.m_max.max(other.modes.m_max),
        )?;
        let mut coeffs = self.coeffs.clone();
        for (&m, &v) in &other.coeffs {
            *coeffs.entry(m).or_insert(Complex64::new(0.0, 0.0)) += v;
        }
        Self::new(self.config, modes, coeffs)
    }

    /// Hermitian L^2 pairing <self, other> = sum c_self conj(c_other).
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.coeffs
            .iter()
            .map(|(m, c)| c * other.get(*m).conj())
            .sum()
    }

    /// Drop coefficients with |c| <= cutoff (used to keep adaptively built
    /// windows small).
    pub fn pruned(&self, cutoff: f64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(_, c)| c.norm() > cutoff)
            .map(|(&m, &c)| (m, c))
            .collect();
        Self { config: self.config, modes: self.modes, coeffs }
    }
}

/// New state with coefficients F(lambda_{k,m}) c_{k,m}. Composes exactly:
/// apply(F) then apply(G) equals apply(F*G) on coefficients.
pub fn apply_multiplier<F: Fn(f64) -> Complex64>(state: &StateCoeffs, f: F) -> StateCoeffs {
    let coeffs = state
        .coeffs
        .iter()
        .map(|(&mode, &c)| (mode, f(eigenvalue(&state.config, mode)) * c))
        .collect();
    StateCoeffs { config: state.config, modes: state.modes, coeffs }
}

/// Pointwise synthesis sum_{k,m} c_{k,m} Vt_{k,m}(p).
pub fn synthesize(state: &StateCoeffs, p: &PolarPoint) -> Complex64 {
    let cfg = &state.config;
    let u = cfg.b0() * p.r() * p.r() / 2.0;
    let amp = (cfg.b0() / (2.0 * std::f64::consts::PI)).sqrt();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut iter = state.coeffs.iter().peekable();
    while let Some((&ModeIndex { k, .. }, _)) = iter.peek() {
        // gather the run of coefficients sharing this k
        let a = cfg.alpha_k(k);
        let mut dense: Vec<(u32, Complex64)> = Vec::new();
        let mut m_max = 0;
        while let Some((&mode, &c)) = iter.peek() {
            if mode.k != k {
                break;
            }
            dense.push((mode.m, c));
            m_max = m_max.max(mode.m);
            iter.next();
        }
        let ells = laguerre_ortho_seq(a, u, m_max as usize);
        let mut radial = Complex64::new(0.0, 0.0);
        for (m, c) in dense {
            radial += c * ells[m as usize];
        }
        acc += radial * amp * Complex64::from_polar(1.0, k as f64 * p.theta());
    }
    acc
}

/// Spatial evaluation grid in polar coordinates.
#[derive(Debug, Clone)]
pub struct PolarGrid {
    pub radii: Vec<f64>,
    pub thetas: Vec<f64>,
}

impl PolarGrid {
    /// Uniform radial spacing on (0, r_max]; angular nodes equispaced.
    pub fn uniform(r_max: f64, n_r: usize, n_theta: usize) -> Self {
        let radii = (1..=n_r).map(|i| r_max * i as f64 / n_r as f64).collect();
        Self { radii, thetas: angular_nodes(n_theta) }
    }

    /// Radial nodes stretched proportionally to sqrt(i/n), denser at large
    /// radii where the classically allowed annuli of high modes live.
    pub fn sqrt_stretched(r_max: f64, n_r: usize, n_theta: usize) -> Self {
        let radii = (1..=n_r)
            .map(|i| r_max * (i as f64 / n_r as f64).sqrt())
            .collect();
        Self { radii, thetas: angular_nodes(n_theta) }
    }
}

/// Synthesize a state on a full polar grid. Exploits the tensor structure:
/// radial Laguerre profiles are accumulated per k by the normalized
/// recurrence, then combined with the angular phases. Rows (fixed radius)
/// are evaluated in parallel.
pub fn synthesize_grid(state: &StateCoeffs, grid: &PolarGrid) -> Vec<Vec<Complex64>> {
    let cfg = state.config;
    let amp = (cfg.b0() / (2.0 * std::f64::consts::PI)).sqrt();
    // dense per-k coefficient tables
    let mut per_k: BTreeMap<i64, Vec<Complex64>> = BTreeMap::new();
    for (&mode, &c) in &state.coeffs {
        let v = per_k.entry(mode.k).or_default();
        if v.len() <= mode.m as usize {
            v.resize(mode.m as usize + 1, Complex64::new(0.0, 0.0));
        }
        v[mode.m as usize] = c;
    }
    let ks: Vec<i64> = per_k.keys().copied().collect();
    // angular phase table [k][theta]
    let phases: Vec<Vec<Complex64>> = ks
        .iter()
        .map(|&k| {
            grid.thetas
                .iter()
                .map(|&t| Complex64::from_polar(1.0, k as f64 * t))
                .collect()
        })
        .collect();
    grid.radii
        .par_iter()
        .map(|&r| {
            let u = cfg.b0() * r * r / 2.0;
            // radial profile per k at this radius
            let mut row = vec![Complex64::new(0.0, 0.0); grid.thetas.len()];
            for (ki, &k) in ks.iter().enumerate() {
                let table = &per_k[&k];
                let a = cfg.alpha_k(k);
                // streaming normalized Laguerre recurrence
                let mut g = Complex64::new(0.0, 0.0);
                if u > 0.0 {
                    let mut lm1 = (0.5 * a * u.ln() - 0.5 * u - 0.5 * ln_gamma(a + 1.0)).exp();
                    let mut lm = (a + 1.0 - u) / (a + 1.0).sqrt() * lm1;
                    g += table[0] * lm1;
                    if table.len() > 1 {
                        g += table[1] * lm;
                        for m in 1..(table.len() - 1) {
                            let mf = m as f64;
                            let c1 =
                                (2.0 * mf + a + 1.0 - u) / ((mf + 1.0) * (mf + a + 1.0)).sqrt();
                            let c2 = (mf * (mf + a) / ((mf + 1.0) * (mf + a + 1.0))).sqrt();
                            let next = c1 * lm - c2 * lm1;
                            lm1 = lm;
                            lm = next;
                            g += table[m + 1] * lm;
                        }
                    }
                }
                let g = g * amp;
                if g.norm_sqr() > 0.0 {
                    let ph = &phases[ki];
                    for (dst, p) in row.iter_mut().zip(ph) {
                        *dst += g * p;
                    }
                }
            }
            row
        })
        .collect()
}

/// Radial quadrature specification for [`expand`]: Gauss-Laguerre node
/// count after the substitution u = B0 r^2 / 2 (weight-matched per angular
/// index), angular trapezoid node count, and the absolute coefficient
/// tolerance at which the embedded error estimate triggers the adaptive
/// fallback or, failing that, an error.
#[derive(Debug, Clone, Copy)]
pub struct QuadSpec {
    pub radial_nodes: usize,
    pub angular_nodes: usize,
    pub tol: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self { radial_nodes: 128, angular_nodes: 256, tol: 1e-9 }
    }
}

/// Expand a function into normalized-eigenbasis coefficients over a mode
/// window: c_{k,m} = int f conj(Vt_{k,m}).
///
/// The radial integral uses the weight-matched generalized Gauss-Laguerre
/// rule (exact when f lies in the eigenbasis span of the window). Each
/// coefficient carries an embedded error estimate from the half-node rule;
/// if any estimate exceeds `quad.tol`, the offending angular sector is
/// re-integrated with adaptive panels in r, and the operation fails only
/// if that still cannot reach the tolerance.
pub fn expand<F>(cfg: &FieldConfig, f: F, modes: &ModeSet, quad: &QuadSpec) -> Result<StateCoeffs>
where
    F: Fn(&PolarPoint) -> Complex64 + Sync,
{
    let n_theta = quad.angular_nodes;
    let thetas = angular_nodes(n_theta);
    let ks: Vec<i64> = (modes.k_min..=modes.k_max).collect();
    let results: Vec<Result<Vec<(ModeIndex, Complex64)>>> = ks
        .par_iter()
        .map(|&k| expand_one_k(cfg, &f, k, modes.m_max, quad, &thetas))
        .collect();
    let mut coeffs = BTreeMap::new();
    for res in results {
        for (mode, c) in res? {
            coeffs.insert(mode, c);
        }
    }
    StateCoeffs::new(*cfg, *modes, coeffs)
}

fn angular_component<F>(f: &F, k: i64, r: f64, thetas: &[f64]) -> Complex64
where
    F: Fn(&PolarPoint) -> Complex64,
{
    let n = thetas.len() as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for &t in thetas {
        let p = PolarPoint::new(r, t).expect("grid point");
        acc += f(&p) * Complex64::from_polar(1.0, -(k as f64) * t);
    }
    acc / n
}

fn expand_one_k<F>(
    cfg: &FieldConfig,
    f: &F,
    k: i64,
    m_max: u32,
    quad: &QuadSpec,
    thetas: &[f64],
) -> Result<Vec<(ModeIndex, Complex64)>>
where
    F: Fn(&PolarPoint) -> Complex64,
{
    let a = cfg.alpha_k(k);
    let scale = (2.0 * std::f64::consts::PI / cfg.b0()).sqrt();
    let eval = |n_nodes: usize| -> Result<Vec<Complex64>> {
        let rule = gauss_gen_laguerre(a, n_nodes)?;
        let wt = rule.plain_du_weights();
        let mut out = vec![Complex64::new(0.0, 0.0); m_max as usize + 1];
        for (&u, &w) in rule.nodes.iter().zip(&wt) {
            if w == 0.0 {
                continue;
            }
            let r = (2.0 * u / cfg.b0()).sqrt();
            let fk = angular_component(f, k, r, thetas);
            if fk.norm_sqr() == 0.0 {
                continue;
            }
            let ells = laguerre_ortho_seq(a, u, m_max as usize);
            for (m, &ell) in ells.iter().enumerate() {
                out[m] += w * fk * ell;
            }
        }
        Ok(out.into_iter().map(|c| c * scale).collect())
    };
    let full = eval(quad.radial_nodes)?;
    let half = eval(quad.radial_nodes / 2)?;
    let worst = full
        .iter()
        .zip(&half)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f64, f64::max);
    let coeffs = if worst <= quad.tol {
        full
    } else {
        // weight-matched rule did not stabilize (data outside the
        // eigenbasis span); fall back to adaptive panels in r
        expand_one_k_adaptive(cfg, f, k, m_max, quad, thetas)?
    };
    Ok(coeffs
        .into_iter()
        .enumerate()
        .map(|(m, c)| (ModeIndex::new(k, m as u32), c))
        .collect())
}

/// Vector-valued GL16 estimate of int f_k(r) l_m(u(r)) r dr over [lo, hi]
/// for every m at once (the angular transform per radius dominates the
/// cost, so the degrees share it).
fn radial_vector_gl<F>(
    cfg: &FieldConfig,
    f: &F,
    k: i64,
    m_max: u32,
    thetas: &[f64],
    lo: f64,
    hi: f64,
) -> Vec<Complex64>
where
    F: Fn(&PolarPoint) -> Complex64,
{
    let a = cfg.alpha_k(k);
    let rule = gauss_legendre(16);
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let mut acc = vec![Complex64::new(0.0, 0.0); m_max as usize + 1];
    for (&x, &wgt) in rule.nodes.iter().zip(&rule.weights) {
        let r = c + h * x;
        let fk = angular_component(f, k, r, thetas);
        if fk.norm_sqr() == 0.0 {
            continue;
        }
        let u = cfg.b0() * r * r / 2.0;
        let ells = laguerre_ortho_seq(a, u, m_max as usize);
        for (m, &ell) in ells.iter().enumerate() {
            acc[m] += wgt * fk * ell * r;
        }
    }
    acc.iter_mut().for_each(|v| *v *= h);
    acc
}

#[allow(clippy::too_many_arguments)]
fn radial_bisect<F>(
    cfg: &FieldConfig,
    f: &F,
    k: i64,
    m_max: u32,
    thetas: &[f64],
    lo: f64,
    hi: f64,
    whole: Vec<Complex64>,
    budget: f64,
    depth: u32,
    out: &mut [Complex64],
) -> Result<()>
where
    F: Fn(&PolarPoint) -> Complex64,
{
    let mid = 0.5 * (lo + hi);
    let left = radial_vector_gl(cfg, f, k, m_max, thetas, lo, mid);
    let right = radial_vector_gl(cfg, f, k, m_max, thetas, mid, hi);
    let err = whole
        .iter()
        .enumerate()
        .map(|(m, w)| (left[m] + right[m] - w).norm())
        .fold(0.0f64, f64::max);
    if err <= budget {
        for (m, dst) in out.iter_mut().enumerate() {
            *dst += left[m] + right[m];
        }
        return Ok(());
    }
    if depth == 0 {
        return Err(AbError::QuadratureFailure(format!(
            "radial expansion for k={k} did not converge on [{lo:.3e}, {hi:.3e}] (err {err:.3e} > {budget:.3e})"
        )));
    }
    radial_bisect(cfg, f, k, m_max, thetas, lo, mid, left, 0.6 * budget, depth - 1, out)?;
    radial_bisect(cfg, f, k, m_max, thetas, mid, hi, right, 0.6 * budget, depth - 1, out)
}

fn expand_one_k_adaptive<F>(
    cfg: &FieldConfig,
    f: &F,
    k: i64,
    m_max: u32,
    quad: &QuadSpec,
    thetas: &[f64],
) -> Result<Vec<Complex64>>
where
    F: Fn(&PolarPoint) -> Complex64,
{
    let scale = (2.0 * std::f64::consts::PI * cfg.b0()).sqrt();
    // c_{k,m} = sqrt(2 pi B0) int_0^R f_k(r) l_m(B0 r^2/2) r dr.
    // Integrand support: the Gaussian-class envelope e^{-u} dies by u ~ 45
    // and the Laguerre functions live below u ~ 4 m + 30.
    let u_cap = (4.0 * m_max as f64 + 30.0).max(45.0);
    let r_cap = (2.0 * u_cap / cfg.b0()).sqrt();
    let n_base = 8;
    let mut out = vec![Complex64::new(0.0, 0.0); m_max as usize + 1];
    for i in 0..n_base {
        let lo = r_cap * i as f64 / n_base as f64;
        let hi = r_cap * (i + 1) as f64 / n_base as f64;
        let whole = radial_vector_gl(cfg, f, k, m_max, thetas, lo, hi);
        radial_bisect(
            cfg,
            f,
            k,
            m_max,
            thetas,
            lo,
            hi,
            whole,
            0.5 * quad.tol / scale / n_base as f64,
            22,
            &mut out,
        )?;
    }
    Ok(out.into_iter().map(|c| c * scale).collect())
}

/// Relative L^2 residual of the radial eigen-relation on a finite
/// difference grid: applies -d^2/dr^2 - (1/r) d/dr + (k+alpha+B0 r^2/2)^2/r^2
/// to V_{k,m} with second-order central differences and compares against
/// lambda_{k,m} V_{k,m} over [r_lo, r_hi].
pub fn radial_eigen_residual(
    cfg: &FieldConfig,
    mode: ModeIndex,
    h: f64,
    r_lo: f64,
    r_hi: f64,
) -> f64 {
    let lam = eigenvalue(cfg, mode);
    let radial = |r: f64| -> f64 {
        let p = PolarPoint::new(r, 0.0).unwrap();
        eigenfunction(cfg, mode, &p, false).re
    };
    let n = ((r_hi - r_lo) / h) as usize;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let r = r_lo + (i as f64 + 0.5) * h;
        let vm = radial(r - h);
        let v0 = radial(r);
        let vp = radial(r + h);
        let d2 = (vp - 2.0 * v0 + vm) / (h * h);
        let d1 = (vp - vm) / (2.0 * h);
        let w = mode.k as f64 + cfg.alpha() + cfg.b0() * r * r / 2.0;
        let hv = -d2 - d1 / r + w * w / (r * r) * v0;
        num += (hv - lam * v0).powi(2) * r;
        den += (lam * v0).powi(2) * r;
    }
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(alpha: f64, b0: f64) -> FieldConfig {
        FieldConfig::new(alpha, b0).unwrap()
    }

    #[test]
    fn config_validation_and_normalization() {
        assert!(FieldConfig::new(0.0, 1.0).is_err());
        assert!(FieldConfig::new(1.0, 1.0).is_err());
        assert!(FieldConfig::new(0.5, 0.0).is_err());
        assert!(FieldConfig::new(0.5, -2.0).is_err());
        let (c, shifted) = FieldConfig::normalized(1.5, 1.0).unwrap();
        assert!(shifted);
        assert_relative_eq!(c.alpha(), 0.5);
        let (c, shifted) = FieldConfig::normalized(-0.3, 1.0).unwrap();
        assert!(shifted);
        assert_relative_eq!(c.alpha(), 0.7);
        assert!(FieldConfig::normalized(2.0, 1.0).is_err());
    }

    #[test]
    fn eigenvalue_examples() {
        assert_relative_eq!(eigenvalue(&cfg(0.5, 1.0), ModeIndex::new(0, 0)), 2.0);
        assert_relative_eq!(eigenvalue(&cfg(0.5, 1.0), ModeIndex::new(-1, 0)), 1.0);
        assert_relative_eq!(eigenvalue(&cfg(0.25, 2.0), ModeIndex::new(1, 2)), 15.0);
    }

    #[test]
    fn spectrum_bottom() {
        let c = cfg(0.3, 1.7);
        let mut rng = crate::rng::SplitMix64::new(5);
        for _ in 0..500 {
            let k = rng.below(61) as i64 - 30;
            let m = rng.below(40) as u32;
            let lam = eigenvalue(&c, ModeIndex::new(k, m));
            assert!(lam >= c.b0() * (1.0 - 1e-12));
            let at_bottom = (lam - c.b0()).abs() <= 1e-12 * c.b0() * (1.0 + k.unsigned_abs() as f64);
            assert_eq!(at_bottom, k <= -1 && m == 0, "k={k} m={m} lam={lam}");
        }
    }

    #[test]
    fn norm_formula_examples() {
        let expect = std::f64::consts::PI * crate::specfun::gamma_fn(1.5).unwrap();
        assert_relative_eq!(
            mode_norm_sq(&cfg(0.5, 2.0), ModeIndex::new(0, 0)),
            expect,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            mode_norm_sq(&cfg(0.5, 2.0), ModeIndex::new(-1, 0)),
            expect,
            max_relative = 1e-13
        );
        assert_relative_eq!(expect, 2.784_163_998_4, max_relative = 1e-9);
    }

    #[test]
    fn norm_formula_vs_quadrature() {
        // 2D quadrature of |V_{k,m}|^2: angular part is exactly 2 pi, the
        // radial integral is weight-matched Gauss-Laguerre (exact for the
        // polynomial P^2)
        for &(alpha, b0, k, m) in
            &[(0.3, 1.0, 2i64, 3u32), (0.7, 2.0, -3, 5), (0.5, 0.5, 0, 0), (0.1, 1.3, 4, 7)]
        {
            let c = cfg(alpha, b0);
            let a = c.alpha_k(k);
            let rule = gauss_gen_laguerre(a, 64).unwrap();
            let mut acc = 0.0;
            for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
                let p = crate::specfun::pkm_from_laguerre(a, m, u).unwrap();
                acc += w * p * p;
            }
            let quad_val =
                2.0 * std::f64::consts::PI * (2.0f64 / b0).powf(a) / b0 * acc / 2.0 * 2.0;
            let formula = mode_norm_sq(&c, ModeIndex::new(k, m));
            assert_relative_eq!(quad_val, formula, max_relative = 1e-8);
        }
    }

    #[test]
    fn eigenfunction_examples() {
        let c = cfg(0.5, 1.0);
        let origin = PolarPoint::new(0.0, 0.3).unwrap();
        assert_eq!(eigenfunction(&c, ModeIndex::new(2, 1), &origin, false).norm(), 0.0);
        assert_eq!(eigenfunction(&c, ModeIndex::new(2, 1), &origin, true).norm(), 0.0);
        let p = PolarPoint::new(1.0, 0.0).unwrap();
        let v = eigenfunction(&c, ModeIndex::new(0, 0), &p, false);
        assert_relative_eq!(v.re, (-0.25f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(v.re, 0.778_800_783_1, max_relative = 1e-9);
        assert_eq!(v.im, 0.0);
    }

    #[test]
    fn eigenfunction_normalized_consistent_with_unnormalized() {
        let c = cfg(0.3, 1.0);
        let mode = ModeIndex::new(1, 2);
        let p = PolarPoint::new(1.7, 2.1).unwrap();
        let vn = eigenfunction(&c, mode, &p, true);
        let vu = eigenfunction(&c, mode, &p, false);
        let norm = mode_norm_sq(&c, mode).sqrt();
        assert_relative_eq!(vn.re, vu.re / norm, max_relative = 1e-11);
        assert_relative_eq!(vn.im, vu.im / norm, max_relative = 1e-11);
        // independent route: explicit P_{k,m} sum
        let a = c.alpha_k(mode.k);
        let u = c.b0() * p.r() * p.r() / 2.0;
        let direct = (a * p.r().ln() - u / 2.0).exp()
            * crate::specfun::pkm_poly(a, mode.m, u)
            * Complex64::from_polar(1.0, mode.k as f64 * p.theta());
        assert_relative_eq!(vu.re, direct.re, max_relative = 1e-11);
        assert_relative_eq!(vu.im, direct.im, max_relative = 1e-11);
    }

    #[test]
    fn multiplicity_examples() {
        let w = ModeSet::new(-6, 6, 6).unwrap();
        assert_eq!(multiplicity_in_window(&cfg(0.3, 1.0), 1.0, &w, 1e-9), 6);
        assert_eq!(multiplicity_in_window(&cfg(0.3, 1.0), 0.5, &w, 1e-9), 0);
        // enumeration oracle: with alpha = 1/2, B0 = 1 the spectrum is
        // {2m+2} for k >= 0 shifted by 2k, union {2m+1} on k <= -1; only
        // (k,m) = (0,0) hits lambda = 2 in the window below.
        let w = ModeSet::new(-3, 3, 3).unwrap();
        assert_eq!(multiplicity_in_window(&cfg(0.5, 1.0), 2.0, &w, 1e-9), 1);
    }

    #[test]
    fn synthesize_single_and_zero() {
        let c = cfg(0.4, 1.2);
        let w = ModeSet::new(-2, 2, 4).unwrap();
        let p = PolarPoint::new(0.9, 1.1).unwrap();
        let s = StateCoeffs::single(c, w, ModeIndex::new(1, 2), Complex64::new(1.0, 0.0)).unwrap();
        let direct = eigenfunction(&c, ModeIndex::new(1, 2), &p, true);
        let synth = synthesize(&s, &p);
        assert_relative_eq!(synth.re, direct.re, max_relative = 1e-12);
        assert_relative_eq!(synth.im, direct.im, max_relative = 1e-12);
        let z = StateCoeffs::zero(c, w);
        assert_eq!(synthesize(&z, &p), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn synthesize_matches_term_by_term_oracle() {
        let c = cfg(0.35, 0.8);
        let w = ModeSet::new(-3, 3, 3).unwrap();
        let mut rng = crate::rng::SplitMix64::new(11);
        let mut map = BTreeMap::new();
        for _ in 0..10 {
            let k = rng.below(7) as i64 - 3;
            let m = rng.below(4) as u32;
            map.insert(
                ModeIndex::new(k, m),
                Complex64::new(rng.range(-1.0, 1.0), rng.range(-1.0, 1.0)),
            );
        }
        let s = StateCoeffs::new(c, w, map.clone()).unwrap();
        for _ in 0..5 {
            let p = PolarPoint::new(rng.range(0.1, 3.0), rng.range(0.0, 6.28)).unwrap();
            let oracle: Complex64 = map
                .iter()
                .map(|(&mode, &cc)| cc * eigenfunction(&c, mode, &p, true))
                .sum();
            let got = synthesize(&s, &p);
            assert_relative_eq!(got.re, oracle.re, max_relative = 1e-10, epsilon = 1e-13);
            assert_relative_eq!(got.im, oracle.im, max_relative = 1e-10, epsilon = 1e-13);
        }
    }

    #[test]
    fn synthesize_grid_matches_pointwise() {
        let c = cfg(0.35, 0.8);
        let w = ModeSet::new(-3, 3, 5).unwrap();
        let mut rng = crate::rng::SplitMix64::new(3);
        let mut map = BTreeMap::new();
        for _ in 0..12 {
            let k = rng.below(7) as i64 - 3;
            let m = rng.below(6) as u32;
            map.insert(
                ModeIndex::new(k, m),
                Complex64::new(rng.range(-1.0, 1.0), rng.range(-1.0, 1.0)),
            );
        }
        let s = StateCoeffs::new(c, w, map).unwrap();
        let grid = PolarGrid::uniform(3.0, 7, 5);
        let vals = synthesize_grid(&s, &grid);
        for (i, &r) in grid.radii.iter().enumerate() {
            for (l, &t) in grid.thetas.iter().enumerate() {
                let p = PolarPoint::new(r, t).unwrap();
                let direct = synthesize(&s, &p);
                assert_relative_eq!(vals[i][l].re, direct.re, max_relative = 1e-10, epsilon = 1e-13);
                assert_relative_eq!(vals[i][l].im, direct.im, max_relative = 1e-10, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn apply_multiplier_examples_and_composition() {
        let c = cfg(0.5, 1.0);
        let w = ModeSet::new(-2, 2, 3).unwrap();
        let s = StateCoeffs::single(c, w, ModeIndex::new(0, 0), Complex64::new(1.0, 0.0)).unwrap();
        let id = apply_multiplier(&s, |_| Complex64::new(1.0, 0.0));
        assert_eq!(id.get(ModeIndex::new(0, 0)), Complex64::new(1.0, 0.0));
        let heat = apply_multiplier(&s, |lam| Complex64::new((-lam).exp(), 0.0));
        assert_relative_eq!(heat.get(ModeIndex::new(0, 0)).re, (-2.0f64).exp(), max_relative = 1e-14);
        // composition apply(F) . apply(G) = apply(F G) exactly
        let mut rng = crate::rng::SplitMix64::new(9);
        let mut map = BTreeMap::new();
        for _ in 0..8 {
            map.insert(
                ModeIndex::new(rng.below(5) as i64 - 2, rng.below(4) as u32),
                Complex64::new(rng.range(-1.0, 1.0), rng.range(-1.0, 1.0)),
            );
        }
        let s = StateCoeffs::new(c, w, map).unwrap();
        let f = |lam: f64| Complex64::new((0.3 * lam).cos(), (0.1 * lam).sin());
        let g = |lam: f64| Complex64::new((-0.2 * lam).exp(), 0.05 * lam);
        let lhs = apply_multiplier(&apply_multiplier(&s, f), g);
        let rhs = apply_multiplier(&s, |lam| f(lam) * g(lam));
        for (m, c1) in lhs.coeffs() {
            // identical up to the one reassociated complex product
            assert!((c1 - rhs.get(*m)).norm() <= 1e-15 * c1.norm());
        }
    }

    #[test]
    fn expand_recovers_orthonormal_modes() {
        let c = cfg(0.5, 1.0);
        let w = ModeSet::new(-2, 2, 3).unwrap();
        let quad = QuadSpec::default();
        let f = |p: &PolarPoint| eigenfunction(&c, ModeIndex::new(0, 0), p, true);
        let s = expand(&c, f, &w, &quad).unwrap();
        for (mode, cc) in s.coeffs() {
            let expect = if *mode == ModeIndex::new(0, 0) { 1.0 } else { 0.0 };
            assert!(
                (cc - Complex64::new(expect, 0.0)).norm() <= 1e-10,
                "mode {mode:?}: {cc}"
            );
        }
    }

    #[test]
    fn expand_is_linear_on_the_span() {
        let c = cfg(0.5, 1.0);
        let w = ModeSet::new(-2, 2, 3).unwrap();
        let quad = QuadSpec::default();
        let f = |p: &PolarPoint| {
            2.5 * eigenfunction(&c, ModeIndex::new(1, 2), p, true)
                + Complex64::i() * eigenfunction(&c, ModeIndex::new(-1, 0), p, true)
        };
        let s = expand(&c, f, &w, &quad).unwrap();
        for (mode, cc) in s.coeffs() {
            let expect = if *mode == ModeIndex::new(1, 2) {
                Complex64::new(2.5, 0.0)
            } else if *mode == ModeIndex::new(-1, 0) {
                Complex64::i()
            } else {
                Complex64::new(0.0, 0.0)
            };
            assert!((cc - expect).norm() <= 1e-10, "mode {mode:?}: {cc}");
        }
    }

    #[test]
    fn expand_gaussian_bump_stable_under_refinement() {
        let c = cfg(0.5, 1.0);
        let w = ModeSet::new(-2, 2, 16).unwrap();
        let f = |p: &PolarPoint| Complex64::new((-p.r() * p.r()).exp(), 0.0);
        let hi = expand(&c, f, &w, &QuadSpec { radial_nodes: 256, angular_nodes: 256, tol: 1e-9 })
            .unwrap();
        let lo = expand(&c, f, &w, &QuadSpec { radial_nodes: 128, angular_nodes: 128, tol: 1e-9 })
            .unwrap();
        for (mode, cc) in hi.coeffs() {
            assert!(
                (cc - lo.get(*mode)).norm() <= 1e-8,
                "mode {mode:?}: {} vs {}",
                cc,
                lo.get(*mode)
            );
        }
        // only k = 0 sees a radially symmetric function
        for (mode, cc) in hi.coeffs() {
            if mode.k != 0 {
                assert!(cc.norm() <= 1e-10);
            }
        }
    }

    #[test]
    fn expand_synthesize_roundtrip() {
        let c = cfg(0.3, 1.5);
        let w = ModeSet::new(-3, 3, 4).unwrap();
        let mut rng = crate::rng::SplitMix64::new(21);
        let mut map = BTreeMap::new();
        for _ in 0..9 {
            map.insert(
                ModeIndex::new(rng.below(7) as i64 - 3, rng.below(5) as u32),
                Complex64::new(rng.range(-1.0, 1.0), rng.range(-1.0, 1.0)),
            );
        }
        let s = StateCoeffs::new(c, w, map).unwrap();
        let back = expand(&c, |p| synthesize(&s, p), &w, &QuadSpec::default()).unwrap();
        for mode in w.iter() {
            assert!(
                (back.get(mode) - s.get(mode)).norm() <= 1e-9,
                "mode {mode:?}"
            );
        }
    }

    #[test]
    fn parseval_for_gaussian_class_data() {
        let c = cfg(0.5, 1.0);
        let w = ModeSet::new(-6, 6, 48).unwrap();
        // Gaussian-class data compatible with the operator domain: each
        // angular sector vanishes like r^{alpha_k} at the flux line, so the
        // radial coefficients decay geometrically and the window captures
        // the full mass. (A generic smooth f has r^{|k|} sectors, which
        // this basis resolves only algebraically in m.)
        let f = |p: &PolarPoint| {
            let g = (-(p.r() * p.r())).exp();
            let s0 = p.r().powf(0.5) * g;
            let s1 = 0.7 * p.r().powf(1.5) * g;
            let sm1 = 0.3 * p.r().powf(0.5) * g;
            Complex64::new(s0, 0.0)
                + s1 * Complex64::from_polar(1.0, p.theta())
                + Complex64::i() * sm1 * Complex64::from_polar(1.0, -p.theta())
        };
        let s = expand(&c, f, &w, &QuadSpec::default()).unwrap();
        // quadrature L^2 norm of f
        let (norm_sq, _) = crate::quad::adaptive_quad_real(
            &|r: f64| {
                let n = 256;
                let mut acc = 0.0;
                for t in angular_nodes(n) {
                    let p = PolarPoint::new(r, t).unwrap();
                    acc += f(&p).norm_sqr();
                }
                acc * 2.0 * std::f64::consts::PI / n as f64 * r
            },
            0.0,
            8.0,
            1e-10,
            20,
        )
        .unwrap();
        assert_relative_eq!(s.l2_norm(), norm_sq.sqrt(), max_relative = 1e-6);
    }

    #[test]
    fn eigen_residual_is_small_and_second_order() {
        let c = cfg(0.3, 1.0);
        for &(k, m) in &[(0i64, 0u32), (1, 2), (-2, 1)] {
            let r1 = radial_eigen_residual(&c, ModeIndex::new(k, m), 1e-3, 0.4, 3.5);
            assert!(r1 <= 1e-4, "residual {r1:e} at h=1e-3 for k={k}, m={m}");
            let r2 = radial_eigen_residual(&c, ModeIndex::new(k, m), 2e-3, 0.4, 3.5);
            let order = (r2 / r1).log2();
            assert!(
                (order - 2.0).abs() < 0.35,
                "residual order {order} (r1={r1:e}, r2={r2:e})"
            );
        }
    }

    #[test]
    fn gram_matrix_is_identity() {
        let c = cfg(0.37, 1.1);
        let w = ModeSet::new(-4, 4, 4).unwrap();
        let quad = QuadSpec::default();
        for mode in w.iter() {
            let f = |p: &PolarPoint| eigenfunction(&c, mode, p, true);
            let s = expand(&c, f, &w, &quad).unwrap();
            for other in w.iter() {
                let expect = if other == mode { 1.0 } else { 0.0 };
                let got = s.get(other);
                assert!(
                    (got - Complex64::new(expect, 0.0)).norm() <= 1e-8,
                    "<V{:?}, V{:?}> = {got}",
                    mode,
                    other
                );
            }
        }
    }
}
