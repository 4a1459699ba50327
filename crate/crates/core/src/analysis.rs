//! Littlewood-Paley/Besov/Sobolev norms and the estimate-verification
//! harness: Bernstein ratios, square-function ratios, microlocalized wave
//! decay fits, and desk-scale Strichartz norms.

use crate::error::{AbError, Result};
use crate::propagators::{
    frequency_localize, halfwave_evolve, localized_kernel_row, sup_norm, wave_solution, LPBump,
};
use crate::spectrum::{eigenvalue, synthesize_grid, FieldConfig, PolarGrid, PolarPoint, StateCoeffs};
use std::f64::consts::PI;

/// Sobolev norm (sum lambda^s |c|^2)^{1/2}, exact at coefficient level.
pub fn sobolev_norm(state: &StateCoeffs, s: f64) -> f64 {
    let cfg = state.config();
    state
        .coeffs()
        .iter()
        .map(|(&m, c)| eigenvalue(cfg, m).powf(s) * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Spatial L^p norm of a state by polar-grid quadrature (trapezoid-type
/// weights in r, equispaced trapezoid in theta). `p = infinity` returns the
/// grid maximum. p = 2 callers that need exactness use the coefficient sum
/// instead (see [`besov_norm`]).
pub fn lp_norm(state: &StateCoeffs, p: f64, grid: &PolarGrid) -> f64 {
    let values = synthesize_grid(state, grid);
    if p.is_infinite() {
        return values
            .iter()
            .flat_map(|row| row.iter().map(|v| v.norm()))
            .fold(0.0, f64::max);
    }
    let w_rad = radial_weights(&grid.radii);
    let w_ang = 2.0 * PI / grid.thetas.len() as f64;
    let mut acc = 0.0;
    for (i, row) in values.iter().enumerate() {
        let w = w_rad[i] * grid.radii[i];
        for v in row {
            acc += v.norm().powf(p) * w * w_ang;
        }
    }
    acc.powf(1.0 / p)
}

/// Quadrature weights (without the polar r factor) for the radial nodes:
/// composite Simpson when the grid is uniform with an implicit node at 0
/// (where the r factor kills the integrand), trapezoid otherwise.
fn radial_weights(radii: &[f64]) -> Vec<f64> {
    let n = radii.len();
    if n < 3 {
        return vec![radii.last().copied().unwrap_or(0.0) / n.max(1) as f64; n];
    }
    let h = radii[0];
    let uniform = radii
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h)
        && (radii[0] - h).abs() <= 1e-9 * h;
    let mut w = vec![0.0; n];
    if uniform {
        // Simpson over nodes 0..n (node 0 contributes nothing); odd panel
        // counts finish with one trapezoid panel
        let m = if n % 2 == 0 { n } else { n - 1 };
        for i in 1..=m {
            w[i - 1] += if i == m {
                h / 3.0
            } else if i % 2 == 1 {
                4.0 * h / 3.0
            } else {
                2.0 * h / 3.0
            };
        }
        if n % 2 == 1 {
            w[n - 2] += 0.5 * h;
            w[n - 1] += 0.5 * h;
        }
    } else {
        for i in 0..n {
            let lo = if i == 0 { 0.0 } else { radii[i - 1] };
            let hi = if i + 1 < n { radii[i + 1] } else { 2.0 * radii[n - 1] - radii[n - 2] };
            w[i] = 0.5 * (hi - lo);
        }
    }
    w
}

fn spectral_range(state: &StateCoeffs) -> Option<(f64, f64)> {
    if state.is_empty() {
        return None;
    }
    let cfg = state.config();
    let lo = state.coeffs().keys().map(|&m| eigenvalue(cfg, m)).fold(f64::MAX, f64::min);
    let hi = state.coeffs().keys().map(|&m| eigenvalue(cfg, m)).fold(0.0, f64::max);
    Some((lo.sqrt(), hi.sqrt()))
}

/// Homogeneous Besov norm (sum_j 2^{jsr} ||phi_j(sqrt(H)) f||_p^r)^{1/r};
/// the j-sum runs over the finitely many scales meeting the state's
/// spectral support. For p = 2 the piece norms are exact coefficient sums;
/// otherwise they come from polar quadrature on `grid`.
pub fn besov_norm(state: &StateCoeffs, s: f64, p: f64, r: f64, grid: &PolarGrid) -> Result<f64> {
    if !(p >= 1.0) || !(r >= 1.0) || r.is_infinite() {
        return Err(AbError::InvalidArgument(format!(
            "besov_norm needs 1 <= p, r < infinity, got p={p}, r={r}"
        )));
    }
    let Some((lo, hi)) = spectral_range(state) else {
        return Ok(0.0);
    };
    let mut acc = 0.0;
    for j in LPBump::scales_covering(lo, hi) {
        let piece = frequency_localize(state, &LPBump::new(j));
        if piece.is_empty() {
            continue;
        }
        let norm_p = if p == 2.0 { piece.l2_norm() } else { lp_norm(&piece, p, grid) };
        acc += (j as f64 * s).exp2().powf(r) * norm_p.powf(r);
    }
    Ok(acc.powf(1.0 / r))
}

/// Bernstein ratio ||phi_j(sqrt(H)) f||_p / (2^{2j(1/q - 1/p)} ||f||_q),
/// with both norms by quadrature (coefficient-exact for exponent 2).
pub fn bernstein_ratio(
    state: &StateCoeffs,
    j: i32,
    p: f64,
    q: f64,
    grid: &PolarGrid,
) -> Result<f64> {
    if !(1.0 <= q && q <= p) {
        return Err(AbError::InvalidArgument(format!(
            "bernstein_ratio needs 1 <= q <= p, got q={q}, p={p}"
        )));
    }
    let norm = |st: &StateCoeffs, e: f64| -> f64 {
        if e == 2.0 {
            st.l2_norm()
        } else {
            lp_norm(st, e, grid)
        }
    };
    let denom = norm(state, q);
    if denom == 0.0 {
        return Err(AbError::Domain("bernstein_ratio of the zero state".into()));
    }
    let piece = frequency_localize(state, &LPBump::new(j));
    let inv_p = if p.is_infinite() { 0.0 } else { 1.0 / p };
    let inv_q = if q.is_infinite() { 0.0 } else { 1.0 / q };
    let scale = (2.0 * j as f64 * (inv_q - inv_p)).exp2();
    Ok(norm(&piece, p) / (scale * denom))
}

/// Square-function ratio || (sum_j |phi_j(sqrt(H)) f|^2)^{1/2} ||_p / ||f||_p
/// for 1 < p < infinity. Exact at coefficient level for p = 2.
pub fn square_function_ratio(state: &StateCoeffs, p: f64, grid: &PolarGrid) -> Result<f64> {
    if !(p > 1.0) || p.is_infinite() {
        return Err(AbError::InvalidArgument(format!(
            "square_function_ratio needs 1 < p < infinity, got {p}"
        )));
    }
    let Some((lo, hi)) = spectral_range(state) else {
        return Err(AbError::Domain("square-function ratio of the zero state is undefined".into()));
    };
    let scales: Vec<i32> = LPBump::scales_covering(lo, hi).collect();
    if p == 2.0 {
        // sum_j ||phi_j f||_2^2 = sum_modes (sum_j phi_j(sqrt(lambda))^2) |c|^2
        let cfg = state.config();
        let num: f64 = state
            .coeffs()
            .iter()
            .map(|(&m, c)| {
                let sl = eigenvalue(cfg, m).sqrt();
                let w: f64 = scales.iter().map(|&j| LPBump::new(j).weight(sl).powi(2)).sum();
                w * c.norm_sqr()
            })
            .sum();
        return Ok((num / state.l2_norm_sq()).sqrt());
    }
    let pieces: Vec<Vec<Vec<num_complex::Complex64>>> = scales
        .iter()
        .map(|&j| synthesize_grid(&frequency_localize(state, &LPBump::new(j)), grid))
        .collect();
    let n = grid.radii.len();
    let w_ang = 2.0 * PI / grid.thetas.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    let base = synthesize_grid(state, grid);
    for i in 0..n {
        let lo_r = if i == 0 { 0.0 } else { grid.radii[i - 1] };
        let hi_r = if i + 1 < n {
            grid.radii[i + 1]
        } else {
            2.0 * grid.radii[n - 1] - grid.radii[n - 2]
        };
        let w_rad = grid.radii[i] * 0.5 * (hi_r - lo_r);
        for l in 0..grid.thetas.len() {
            let sq: f64 = pieces.iter().map(|pc| pc[i][l].norm_sqr()).sum();
            num += sq.sqrt().powf(p) * w_rad * w_ang;
            den += base[i][l].norm().powf(p) * w_rad * w_ang;
        }
    }
    Ok((num / den).powf(1.0 / p))
}

/// Proven time regime of the microlocalized decay bound at scale j:
/// 2^j t >= 1 and 2^{-j} t <= pi / (8 B0).
pub fn decay_regime(j: i32, b0: f64) -> (f64, f64) {
    ((-j as f64).exp2(), PI * (j as f64).exp2() / (8.0 * b0))
}

/// Outcome of a microlocalized decay experiment at scale j: the measured
/// sup norms of the evolved kernel row, and the least-squares fit of
/// log(sup/2^{2j}) against log(1 + 2^j t).
#[derive(Debug, Clone)]
pub struct DecayFit {
    pub j: i32,
    pub times: Vec<f64>,
    pub sup_norms: Vec<f64>,
    pub fitted_exponent: f64,
    pub fitted_constant: f64,
    pub r_squared: f64,
}

fn decay_grid(cfg: &FieldConfig, j: i32, y0: &PolarPoint, t_max: f64, enlarge: f64) -> PolarGrid {
    let r_cap = (y0.r() + t_max + 4.0 / cfg.b0().sqrt().max(1.0) + 2.0) * enlarge;
    let per_wavelength = 3.0 * (j as f64 + 1.0).exp2();
    let n_r = ((r_cap * per_wavelength).ceil() as usize).clamp(256, 2048);
    let n_theta = ((6.0 * (4.0f64 * (2.0f64).powi(2 * j + 1) * 0.5).sqrt()) as usize)
        .next_multiple_of(64)
        .clamp(256, 1024);
    PolarGrid::uniform(r_cap, n_r, n_theta)
}

/// Build the frequency-localized kernel row at y0, evolve it by the half
/// wave group through `times` (restricted to the proven regime), measure
/// sup norms and fit the decay exponent.
pub fn decay_fit(cfg: &FieldConfig, j: i32, y0: &PolarPoint, times: &[f64]) -> Result<DecayFit> {
    let (t_lo, t_hi) = decay_regime(j, cfg.b0());
    let times: Vec<f64> = times
        .iter()
        .copied()
        .filter(|&t| t >= t_lo * (1.0 - 1e-12) && t <= t_hi * (1.0 + 1e-12))
        .collect();
    if times.len() < 3 {
        return Err(AbError::EmptyRegime(format!(
            "need at least 3 sample times inside [{t_lo:.4}, {t_hi:.4}] (scale j={j})"
        )));
    }
    let row = localized_kernel_row(cfg, j, y0)?;
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    let mut sups = Vec::with_capacity(times.len());
    let mut enlarge = 1.0;
    'attempt: for attempt in 0..4 {
        sups.clear();
        let grid = decay_grid(cfg, j, y0, t_max, enlarge);
        for &t in &times {
            match sup_norm(&halfwave_evolve(&row, t), &grid) {
                Ok(sn) => sups.push(sn.value),
                Err(AbError::GridTooSmall(_)) if attempt < 3 => {
                    enlarge *= 1.4;
                    continue 'attempt;
                }
                Err(e) => return Err(e),
            }
        }
        break;
    }
    if sups.len() != times.len() {
        return Err(AbError::GridTooSmall("decay grid did not stabilize".into()));
    }
    let scale = (2.0 * j as f64).exp2();
    let xs: Vec<f64> = times.iter().map(|&t| (1.0 + (j as f64).exp2() * t).ln()).collect();
    let ys: Vec<f64> = sups.iter().map(|&s| (s / scale).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (slope * x + intercept)).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    Ok(DecayFit {
        j,
        times,
        sup_norms: sups,
        fitted_exponent: slope,
        fitted_constant: intercept.exp(),
        r_squared: 1.0 - ss_res / ss_tot,
    })
}

/// Short-time boundedness probe: sup norms of the evolved row for
/// 2^j t <= 1 against the t = 0 value. Returns (min, max) of
/// sup(t)/sup(0) over the samples.
pub fn decay_short_time_spread(
    cfg: &FieldConfig,
    j: i32,
    y0: &PolarPoint,
    n_samples: usize,
) -> Result<(f64, f64)> {
    let row = localized_kernel_row(cfg, j, y0)?;
    let grid = decay_grid(cfg, j, y0, (-j as f64).exp2(), 1.0);
    let base = sup_norm(&row, &grid)?.value;
    let mut lo = f64::MAX;
    let mut hi: f64 = 0.0;
    for i in 1..=n_samples {
        let t = (-j as f64).exp2() * i as f64 / n_samples as f64;
        let s = sup_norm(&halfwave_evolve(&row, t), &grid)?.value;
        lo = lo.min(s / base);
        hi = hi.max(s / base);
    }
    Ok((lo, hi))
}

/// Wave-admissible exponent pair: (q, p) in [2, infinity] x [2, infinity)
/// with 2/q <= 1/2 - 1/p, and the scaling index s = 1 - 1/q - 2/p.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissiblePair {
    pub q: f64,
    pub p: f64,
    pub s: f64,
}

impl AdmissiblePair {
    /// Validates the pair against the admissibility and scaling relations;
    /// the error message marks which condition failed.
    pub fn new(q: f64, p: f64) -> Result<Self> {
        if !(q >= 2.0) {
            return Err(AbError::InadmissiblePair(format!(
                "q must lie in [2, infinity] (got q={q}); 2/q <= 1/2 - 1/p not evaluated"
            )));
        }
        if !(p >= 2.0) || p.is_infinite() {
            return Err(AbError::InadmissiblePair(format!(
                "p must lie in [2, infinity) (got p={p}); 2/q <= 1/2 - 1/p not evaluated"
            )));
        }
        let inv_q = if q.is_infinite() { 0.0 } else { 1.0 / q };
        if 2.0 * inv_q > 0.5 - 1.0 / p + 1e-12 {
            return Err(AbError::InadmissiblePair(format!(
                "FAILED: 2/q <= 1/2 - 1/p ({:.6} > {:.6}); ranges q in [2,inf], p in [2,inf) hold",
                2.0 * inv_q,
                0.5 - 1.0 / p
            )));
        }
        Ok(Self { q, p, s: 1.0 - inv_q - 2.0 / p })
    }
}

/// One Strichartz comparison: lhs = ||u||_{L^q([0,T]; L^p)} by composite
/// quadrature, rhs = ||u0||_{H^s} + ||u1||_{H^{s-1}}.
#[derive(Debug, Clone, Copy)]
pub struct StrichartzReport {
    pub q: f64,
    pub p: f64,
    pub s: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Evaluate the Strichartz quotient for wave data (u0, u1) over [0, T].
/// The time integral uses composite Simpson on log-spaced nodes (the
/// integrand peaks at small t for high-frequency data) with a short-head
/// rectangle below T/200.
pub fn strichartz_norm(
    u0: &StateCoeffs,
    u1: &StateCoeffs,
    pair: &AdmissiblePair,
    t_final: f64,
    n_time: usize,
    grid: &PolarGrid,
) -> Result<StrichartzReport> {
    if !(0.0..1.0).contains(&pair.s) {
        return Err(AbError::InadmissiblePair(format!(
            "scaling index s = {:.4} outside [0, 1)",
            pair.s
        )));
    }
    if !(t_final > 0.0) {
        return Err(AbError::InvalidArgument("strichartz_norm needs T > 0".into()));
    }
    let norm_at = |t: f64| -> Result<f64> {
        let u = wave_solution(u0, u1, t)?;
        Ok(if pair.p == 2.0 { u.l2_norm() } else { lp_norm(&u, pair.p, grid) })
    };
    let lhs = if pair.q.is_infinite() {
        let mut best: f64 = 0.0;
        for i in 0..=n_time {
            best = best.max(norm_at(t_final * i as f64 / n_time as f64)?);
        }
        best
    } else {
        // Simpson in xi = ln t (even panel count), integrand ||u||_p^q times
        // the jacobian t
        let n = if n_time % 2 == 0 { n_time } else { n_time + 1 };
        let xi_lo = (t_final / 200.0).ln();
        let xi_hi = t_final.ln();
        let h = (xi_hi - xi_lo) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let xi = xi_lo + i as f64 * h;
            let t = xi.exp();
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * norm_at(t)?.powf(pair.q) * t;
        }
        acc *= h / 3.0;
        // head [0, T/200]
        let t_head = t_final / 200.0;
        acc += t_head * norm_at(0.5 * t_head)?.powf(pair.q);
        acc.powf(1.0 / pair.q)
    };
    let rhs = sobolev_norm(u0, pair.s) + sobolev_norm(u1, pair.s - 1.0);
    Ok(StrichartzReport { q: pair.q, p: pair.p, s: pair.s, lhs, rhs })
}
