//! Schrödinger, half-wave and full wave evolution at spectral-coefficient
//! level, Littlewood-Paley frequency localization, kernel rows, the
//! subordination-formula checks, and the spatial sup-norm used by the decay
//! harness.

use crate::error::{AbError, Result};
use crate::quad::{adaptive_quad_real, gauss_legendre};
use crate::spectrum::{
    apply_multiplier, eigenvalue, synthesize, synthesize_grid, FieldConfig, ModeIndex, ModeSet,
    PolarGrid, PolarPoint, StateCoeffs,
};
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// One dyadic Littlewood-Paley bump phi(2^{-j} lambda).
///
/// The profile is phi(x) = psi(x) - psi(2x) with
/// psi(x) = g(2-x)/(g(2-x)+g(x-1)) and g(u) = e^{-1/u} for u > 0 (0
/// otherwise): smooth, supported exactly in [1/2, 2], and telescoping to
/// the partition of unity sum_j phi(2^{-j} lambda) = 1 for lambda > 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LPBump {
    pub j: i32,
}

fn bump_g(u: f64) -> f64 {
    if u > 0.0 {
        (-1.0 / u).exp()
    } else {
        0.0
    }
}

/// The smooth cutoff psi: 1 on (-inf, 1], 0 on [2, inf).
pub fn bump_psi(x: f64) -> f64 {
    if x <= 1.0 {
        1.0
    } else if x >= 2.0 {
        0.0
    } else {
        let a = bump_g(2.0 - x);
        a / (a + bump_g(x - 1.0))
    }
}

impl LPBump {
    pub fn new(j: i32) -> Self {
        Self { j }
    }

    /// The scale-free profile phi, supported in [1/2, 2], phi(1) = 1.
    pub fn profile(x: f64) -> f64 {
        bump_psi(x) - bump_psi(2.0 * x)
    }

    /// phi(2^{-j} x): the weight this bump applies at sqrt(lambda) = x.
    pub fn weight(&self, sqrt_lambda: f64) -> f64 {
        Self::profile(sqrt_lambda * (-self.j as f64).exp2())
    }

    /// Dyadic scales whose bumps meet [lo, hi] (in sqrt(lambda)).
    pub fn scales_covering(lo: f64, hi: f64) -> std::ops::RangeInclusive<i32> {
        assert!(lo > 0.0 && hi >= lo);
        let j_lo = (lo.log2() - 1.0).floor() as i32;
        let j_hi = (hi.log2() + 1.0).ceil() as i32;
        j_lo..=j_hi
    }
}

/// Schrödinger evolution: coefficients times e^{-i t lambda}. Exactly
/// norm-preserving.
pub fn schrodinger_evolve(state: &StateCoeffs, t: f64) -> StateCoeffs {
    apply_multiplier(state, |lam| Complex64::from_polar(1.0, -t * lam))
}

/// Half-wave evolution: coefficients times e^{i t sqrt(lambda)}. Unitary.
pub fn halfwave_evolve(state: &StateCoeffs, t: f64) -> StateCoeffs {
    apply_multiplier(state, |lam| Complex64::from_polar(1.0, t * lam.sqrt()))
}

/// Wave solution with data (u0, u1): per mode
/// a(t) = cos(t sqrt(lambda)) a0 + sin(t sqrt(lambda))/sqrt(lambda) a1.
pub fn wave_solution(u0: &StateCoeffs, u1: &StateCoeffs, t: f64) -> Result<StateCoeffs> {
    Ok(wave_solution_pair(u0, u1, t)?.0)
}

/// Wave solution together with its time derivative
/// a'(t) = -sqrt(lambda) sin(t sqrt(lambda)) a0 + cos(t sqrt(lambda)) a1.
pub fn wave_solution_pair(
    u0: &StateCoeffs,
    u1: &StateCoeffs,
    t: f64,
) -> Result<(StateCoeffs, StateCoeffs)> {
    if u0.config() != u1.config() {
        return Err(AbError::InvalidArgument(
            "wave data must share one field configuration".into(),
        ));
    }
    let cfg = *u0.config();
    let modes = ModeSet::new(
        u0.modes().k_min.min(u1.modes().k_min),
        u0.modes().k_max.max(u1.modes().k_max),
        u0.modes().m_max.max(u1.modes().m_max),
    )?;
    let mut pos = BTreeMap::new();
    let mut vel = BTreeMap::new();
    let keys: std::collections::BTreeSet<ModeIndex> =
        u0.coeffs().keys().chain(u1.coeffs().keys()).copied().collect();
    for mode in keys {
        let lam = eigenvalue(&cfg, mode);
        let w = lam.sqrt();
        let (c, s) = ((t * w).cos(), (t * w).sin());
        let a0 = u0.get(mode);
        let a1 = u1.get(mode);
        pos.insert(mode, c * a0 + s / w * a1);
        vel.insert(mode, -w * s * a0 + c * a1);
    }
    Ok((StateCoeffs::new(cfg, modes, pos)?, StateCoeffs::new(cfg, modes, vel)?))
}

/// Conserved wave energy sum lambda |a|^2 + |a'|^2 of a (state, velocity)
/// pair.
pub fn wave_energy(u: &StateCoeffs, v: &StateCoeffs) -> f64 {
    let cfg = u.config();
    let keys: std::collections::BTreeSet<ModeIndex> =
        u.coeffs().keys().chain(v.coeffs().keys()).copied().collect();
    keys.iter()
        .map(|&m| eigenvalue(cfg, m) * u.get(m).norm_sqr() + v.get(m).norm_sqr())
        .sum()
}

/// Frequency localization: coefficients times phi(2^{-j} sqrt(lambda)).
/// Modes with sqrt(lambda) outside [2^{j-1}, 2^{j+1}] are zeroed exactly
/// (and dropped from the coefficient map).
pub fn frequency_localize(state: &StateCoeffs, bump: &LPBump) -> StateCoeffs {
    apply_multiplier(state, |lam| Complex64::new(bump.weight(lam.sqrt()), 0.0)).pruned(0.0)
}

/// Kernel row: the state whose synthesis at x equals
/// sum F(lambda) Vt_{k,m}(x) conj(Vt_{k,m}(y0)), i.e. the kernel of F(H)
/// with the second argument frozen at y0. Coefficients below `prune` times
/// the largest are dropped.
///
/// No extra angular normalization enters: with the orthonormal basis the
/// heat row (F = e^{-t lambda}) synthesizes to exactly the series kernel,
/// whose 1/(4 pi) prefactor already absorbs the angular measure.
pub fn kernel_row<F>(
    cfg: &FieldConfig,
    modes: &ModeSet,
    y0: &PolarPoint,
    multiplier: F,
    prune: f64,
) -> Result<StateCoeffs>
where
    F: Fn(f64) -> Complex64,
{
    let mut coeffs = BTreeMap::new();
    let amp = (cfg.b0() / (2.0 * PI)).sqrt();
    let u = cfg.b0() * y0.r() * y0.r() / 2.0;
    for k in modes.k_min..=modes.k_max {
        let a = cfg.alpha_k(k);
        let ells = crate::specfun::laguerre_ortho_seq(a, u, modes.m_max as usize);
        let phase = Complex64::from_polar(1.0, -(k as f64) * y0.theta());
        for (m, &ell) in ells.iter().enumerate() {
            let mode = ModeIndex::new(k, m as u32);
            let c = multiplier(eigenvalue(cfg, mode)) * (amp * ell) * phase;
            if c.norm_sqr() > 0.0 {
                coeffs.insert(mode, c);
            }
        }
    }
    let state = StateCoeffs::new(*cfg, *modes, coeffs)?;
    let cutoff = prune * state.coeffs().values().map(|c| c.norm()).fold(0.0, f64::max);
    Ok(state.pruned(cutoff))
}

/// Frequency-localized kernel row at dyadic scale j: the row of
/// phi_j(sqrt(H)) at y0, over a mode window sized from the bump support in
/// lambda and the radial reach of the eigenfunctions at y0.
pub fn localized_kernel_row(cfg: &FieldConfig, j: i32, y0: &PolarPoint) -> Result<StateCoeffs> {
    if y0.r() == 0.0 {
        return Err(AbError::Domain(
            "kernel row at the solenoid vanishes identically; pick y0 off the origin".into(),
        ));
    }
    let bump = LPBump::new(j);
    let lam_max = (2.0f64).powi(2 * (j + 1));
    let m_cap = (((lam_max - cfg.b0()) / (2.0 * cfg.b0())).ceil() as u32).max(1);
    let u0 = cfg.b0() * y0.r() * y0.r() / 2.0;
    // orders with any weight at u0: the orthonormal Laguerre functions of
    // order a reach down to u ~ a^2/(4m), so a <= sqrt(4 m u0) plus margin
    let k_cap = ((4.0 * m_cap as f64 * u0).sqrt() * 1.3 + 24.0).ceil() as i64;
    let modes = ModeSet::new(-k_cap, k_cap, m_cap)?;
    kernel_row(cfg, &modes, y0, |lam| Complex64::new(bump.weight(lam.sqrt()), 0.0), 1e-12)
}

/// Subordination identity at heat level:
/// e^{-y sqrt(x)} = (y/2 sqrt(pi)) int_0^infty e^{-sx - y^2/4s} s^{-3/2} ds.
#[derive(Debug, Clone, Copy)]
pub struct SubordinationHeat {
    pub lhs: f64,
    pub rhs: f64,
    pub quad_error_estimate: f64,
}

/// Evaluates both sides; the integral is computed after the substitution
/// s = (y/(2 sqrt(x))) e^u, which symmetrizes the saddle:
/// rhs = sqrt(y sqrt(x) / (2 pi)) int_R e^{-y sqrt(x) cosh u} e^{-u/2} du.
pub fn subordination_heat_check(x: f64, y: f64, quad_tol: f64) -> Result<SubordinationHeat> {
    if !(x > 0.0 && y > 0.0) {
        return Err(AbError::Domain(format!(
            "subordination_heat_check needs x, y > 0, got x={x}, y={y}"
        )));
    }
    let w = y * x.sqrt();
    let lhs = (-w).exp();
    let u_cut = (45.0 / w).max(1.0).acosh() + 3.0;
    let (val, err) = adaptive_quad_real(
        &|u: f64| (-w * u.cosh() - 0.5 * u).exp(),
        -u_cut,
        u_cut,
        (quad_tol * lhs * 0.1).max(1e-300),
        13,
    )?;
    let rhs = (w / (2.0 * PI)).sqrt() * val;
    Ok(SubordinationHeat { lhs, rhs, quad_error_estimate: (w / (2.0 * PI)).sqrt() * err })
}

/// Regularized half-wave subordination:
/// e^{it sqrt(x)} = sqrt(t/4 pi) e^{-i pi/4} lim_{eps->0} I_{eps, eps x}(tx, t),
/// where I_{eps,delta}(a,t) = int_0^infty e^{ira} e^{-delta r} e^{it/4r}
/// e^{-eps/4r} r^{-3/2} dr.
#[derive(Debug, Clone)]
pub struct SubordinationHalfwave {
    pub lhs: Complex64,
    pub rhs_extrapolated: Complex64,
    pub rhs_at_eps: Vec<(f64, Complex64)>,
}

/// I_{eps, eps x}(a, t) after r = e^u: panels are sized to the local phase
/// rate a e^u + (t/4) e^{-u} so a 16-point rule resolves each one, and the
/// eps-damping fixes the truncation window.
fn osc_integral(a: f64, t: f64, eps: f64, x: f64) -> Complex64 {
    let phase_rate = |u: f64| (a * u.exp() - 0.25 * t * (-u).exp()).abs();
    let u_hi = (40.0 / (eps * x)).ln();
    let u_lo = -(160.0 / eps).ln();
    let rule = gauss_legendre(16);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut u = u_lo;
    while u < u_hi {
        let mut w = (5.0 / (1.0 + phase_rate(u))).min(0.4).min(u_hi - u);
        w = w.min(5.0 / (1.0 + phase_rate(u + w))).max(1e-9);
        let (c, h) = (u + 0.5 * w, 0.5 * w);
        let mut panel = Complex64::new(0.0, 0.0);
        for (&xn, &wn) in rule.nodes.iter().zip(&rule.weights) {
            let uu = c + h * xn;
            let eu = uu.exp();
            let emu = (-uu).exp();
            panel += wn
                * Complex64::new(
                    -eps * x * eu - 0.25 * eps * emu - 0.5 * uu,
                    a * eu + 0.25 * t * emu,
                )
                .exp();
        }
        acc += panel * h;
        u += w;
    }
    acc
}

/// Evaluate the half-wave subordination identity for each member of the
/// decreasing `eps_seq` and Richardson-extrapolate to eps = 0 (linear
/// model, iterated once when enough members exist). Fails if the
/// extrapolant tail stops contracting.
pub fn subordination_halfwave_check(
    x: f64,
    t: f64,
    eps_seq: &[f64],
    _quad_tol: f64,
) -> Result<SubordinationHalfwave> {
    if !(x > 0.0 && t > 0.0) {
        return Err(AbError::Domain(format!(
            "subordination_halfwave_check needs x, t > 0, got x={x}, t={t}"
        )));
    }
    if eps_seq.len() < 2 || eps_seq.windows(2).any(|w| w[1] >= w[0]) || eps_seq[0] <= 0.0 {
        return Err(AbError::InvalidArgument(
            "eps_seq must be a decreasing sequence of positive numbers".into(),
        ));
    }
    let lhs = Complex64::from_polar(1.0, t * x.sqrt());
    let pref = (t / (4.0 * PI)).sqrt() * Complex64::from_polar(1.0, -PI / 4.0);
    let rhs_at_eps: Vec<(f64, Complex64)> =
        eps_seq.iter().map(|&eps| (eps, pref * osc_integral(t * x, t, eps, x))).collect();
    let mut level1 = Vec::new();
    for w in rhs_at_eps.windows(2) {
        let (e0, v0) = w[0];
        let (e1, v1) = w[1];
        level1.push(v1 + (v1 - v0) / (e0 / e1 - 1.0));
    }
    let extrapolated = if level1.len() >= 2 {
        let mut level2 = Vec::new();
        for (i, w) in level1.windows(2).enumerate() {
            let r = rhs_at_eps[i].0 / rhs_at_eps[i + 1].0;
            level2.push(w[1] + (w[1] - w[0]) / (r * r - 1.0));
        }
        if level2.len() >= 2 {
            let n = level2.len();
            let last = (level2[n - 1] - level2[n - 2]).norm();
            if last > 0.2 * level2[n - 1].norm().max(1e-30) {
                return Err(AbError::NonConvergence(format!(
                    "eps-extrapolation not contracting (last step {last:.3e})"
                )));
            }
        }
        *level2.last().unwrap()
    } else {
        *level1.last().unwrap()
    };
    Ok(SubordinationHalfwave { lhs, rhs_extrapolated: extrapolated, rhs_at_eps })
}

/// Result of a grid sup-norm evaluation.
#[derive(Debug, Clone, Copy)]
pub struct SupNorm {
    pub value: f64,
    pub argmax: PolarPoint,
}

/// Default sup-norm grid: sqrt-stretched 200 x 256 polar grid out to twice
/// the classical turning radius of the state's largest eigenvalue.
pub fn default_sup_grid(state: &StateCoeffs) -> PolarGrid {
    let cfg = state.config();
    let lam_max = state.coeffs().keys().map(|&m| eigenvalue(cfg, m)).fold(cfg.b0(), f64::max);
    let r = 2.0 * (2.0 / cfg.b0() * lam_max).sqrt();
    PolarGrid::sqrt_stretched(r, 200, 256)
}

/// Max of |synthesize| over the grid, with one Newton polish around the
/// coarse argmax. Errors when the outermost radial ring carries more than
/// 1e-3 of the interior maximum (grid too small for the state).
pub fn sup_norm(state: &StateCoeffs, grid: &PolarGrid) -> Result<SupNorm> {
    if state.is_empty() {
        return Ok(SupNorm { value: 0.0, argmax: PolarPoint::new(0.0, 0.0)? });
    }
    let values = synthesize_grid(state, grid);
    let (mut best, mut ir, mut il) = (0.0f64, 0usize, 0usize);
    for (i, row) in values.iter().enumerate() {
        for (l, v) in row.iter().enumerate() {
            let n = v.norm();
            if n > best {
                best = n;
                ir = i;
                il = l;
            }
        }
    }
    let edge = values.last().unwrap().iter().map(|v| v.norm()).fold(0.0, f64::max);
    if edge > 1e-3 * best {
        return Err(AbError::GridTooSmall(format!(
            "boundary magnitude {edge:.3e} vs interior max {best:.3e}; enlarge the radial extent"
        )));
    }
    // one Newton refinement on |F|^2 around the coarse argmax
    let r0 = grid.radii[ir];
    let th0 = grid.thetas[il];
    let dr = if ir + 1 < grid.radii.len() {
        grid.radii[ir + 1] - grid.radii[ir]
    } else {
        grid.radii[ir] - grid.radii[ir - 1]
    };
    let dth = if grid.thetas.len() > 1 { grid.thetas[1] - grid.thetas[0] } else { 0.1 };
    let q = |r: f64, th: f64| -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        synthesize(state, &PolarPoint::new(r, th).unwrap()).norm_sqr()
    };
    let (hr, ht) = (0.25 * dr, 0.25 * dth);
    let q0 = best * best;
    let (qpr, qmr) = (q(r0 + hr, th0), q(r0 - hr, th0));
    let (qpt, qmt) = (q(r0, th0 + ht), q(r0, th0 - ht));
    let gr = (qpr - qmr) / (2.0 * hr);
    let gt = (qpt - qmt) / (2.0 * ht);
    let hrr = (qpr - 2.0 * q0 + qmr) / (hr * hr);
    let htt = (qpt - 2.0 * q0 + qmt) / (ht * ht);
    let hrt = (q(r0 + hr, th0 + ht) - q(r0 + hr, th0 - ht) - q(r0 - hr, th0 + ht)
        + q(r0 - hr, th0 - ht))
        / (4.0 * hr * ht);
    let det = hrr * htt - hrt * hrt;
    let mut out = SupNorm { value: best, argmax: PolarPoint::new(r0, th0)? };
    if det > 0.0 && hrr < 0.0 {
        let sr = -(htt * gr - hrt * gt) / det;
        let st = -(-hrt * gr + hrr * gt) / det;
        if sr.abs() <= dr && st.abs() <= dth {
            let cand = q(r0 + sr, th0 + st);
            if cand > q0 {
                out = SupNorm { value: cand.sqrt(), argmax: PolarPoint::new(r0 + sr, th0 + st)? };
            }
        }
    }
    Ok(out)
}
