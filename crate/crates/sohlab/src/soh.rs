//! Finite-volume solver for the self-organized hydrodynamics system
//!
//!   d_t rho + div(c1 rho u) = 0
//!   rho (d_t u + c2 (u . grad) u) + d P_{u-perp} grad rho = c3 P_{u-perp} lap(rho u)
//!   |u| = 1
//!
//! via relaxation time splitting: a Rusanov step on the conservative
//! subsystem
//!
//!   d_t rho + div(c1 rho u) = 0
//!   d_t (rho u) + div(c2 rho u x u) + d grad rho = 0
//!
//! followed by exact velocity renormalization (the stiff relaxation
//! limit), and an optional explicit viscous step for `c3 > 0`.
//!
//! The grid is uniform and periodic, 1 or 2 spatial dimensions; the
//! orientation `u` lives in `R^M` and may have more components than the
//! grid has axes (1D space with 2D velocity is the canonical Riemann
//! setting).

use crate::coefficients::CoefficientSet;
use crate::vector::{add, norm, normalized, project_tangent, scale, sub};
use thiserror::Error;

pub const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SohError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("step rejected: negative density {min_rho:e} in cell {cell} (dt={dt})")]
    StepRejected { min_rho: f64, cell: usize, dt: f64 },
}

/// Uniform periodic grid, 1 or 2 spatial axes.
#[derive(Debug, Clone, PartialEq)]
pub struct SohGrid {
    pub dims: usize,
    pub cells: [usize; 2],
    pub box_len: [f64; 2],
    pub dx: [f64; 2],
}

impl SohGrid {
    pub fn new_1d(nx: usize, lx: f64) -> Result<Self, SohError> {
        Self::checked(1, [nx, 1], [lx, 1.0])
    }

    pub fn new_2d(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self, SohError> {
        Self::checked(2, [nx, ny], [lx, ly])
    }

    fn checked(dims: usize, cells: [usize; 2], box_len: [f64; 2]) -> Result<Self, SohError> {
        for a in 0..dims {
            if cells[a] < 4 {
                return Err(SohError::Config(format!(
                    "axis {a} has {} cells, minimum is 4",
                    cells[a]
                )));
            }
            if !(box_len[a] > 0.0) {
                return Err(SohError::Config(format!("axis {a} has nonpositive extent")));
            }
        }
        let mut dx = [1.0; 2];
        for a in 0..dims {
            dx[a] = box_len[a] / cells[a] as f64;
        }
        Ok(Self { dims, cells, box_len, dx })
    }

    pub fn n_cells(&self) -> usize {
        self.cells[..self.dims].iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx[..self.dims].iter().product()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + j * self.cells[0]
    }

    /// Cell-center coordinate along `axis`.
    pub fn center(&self, axis: usize, idx: usize) -> f64 {
        (idx as f64 + 0.5) * self.dx[axis]
    }
}

/// Cell-centered density and unit mean orientation.
#[derive(Debug, Clone)]
pub struct SohFields<const M: usize> {
    pub grid: SohGrid,
    pub rho: Vec<f64>,
    pub u: Vec<[f64; M]>,
    pub t: f64,
}

impl<const M: usize> SohFields<M> {
    pub fn uniform(grid: SohGrid, rho: f64, u: [f64; M]) -> Result<Self, SohError> {
        if !(rho >= 0.0) {
            return Err(SohError::Config("density must be nonnegative".into()));
        }
        if (norm(&u) - 1.0).abs() > UNIT_TOL {
            return Err(SohError::Config("orientation must be a unit vector".into()));
        }
        let n = grid.n_cells();
        Ok(Self { grid, rho: vec![rho; n], u: vec![u; n], t: 0.0 })
    }

    pub fn total_mass(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max_unit_drift(&self) -> f64 {
        self.u.iter().map(|u| (norm(u) - 1.0).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct SohSolverConfig {
    pub coeffs: CoefficientSet,
    pub cfl: f64,
    pub viscous: bool,
    pub dt_cap: Option<f64>,
    /// Take the absolute value of a negative radicand in the wave-speed
    /// formula (only reachable in generalized settings).
    pub nonhyperbolic_fix: bool,
}

impl SohSolverConfig {
    pub fn new(coeffs: CoefficientSet, cfl: f64) -> Result<Self, SohError> {
        if !(cfl > 0.0 && cfl <= 1.0) {
            return Err(SohError::Config(format!("cfl={cfl} outside (0, 1]")));
        }
        Ok(Self { coeffs, cfl, viscous: coeffs.c3 > 0.0, dt_cap: None, nonhyperbolic_fix: true })
    }

    pub fn validate(&self) -> Result<(), SohError> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(SohError::Config(format!("cfl={} outside (0, 1]", self.cfl)));
        }
        if self.viscous && self.coeffs.c3 < 0.0 {
            return Err(SohError::Config("viscous step requires c3 >= 0".into()));
        }
        Ok(())
    }
}

/// Characteristic speeds of the first-order SOH system in the direction
/// forming angle `acos(s)` with `u`.
#[derive(Debug, Clone, Copy)]
pub struct WaveSpeeds {
    pub lambda_minus: f64,
    pub lambda_zero: f64,
    pub lambda_plus: f64,
    pub sound_speed: f64,
    pub hyperbolic: bool,
}

impl WaveSpeeds {
    pub fn max_abs(&self) -> f64 {
        self.lambda_minus
            .abs()
            .max(self.lambda_plus.abs())
            .max(self.lambda_zero.abs())
    }
}

/// lambda_pm = 1/2 [(c1+c2) s +- sqrt((c2-c1)^2 s^2 + 4 d (1 - s^2))],
/// lambda_0 = c1 s. With `fix` set, a negative radicand is replaced by
/// its absolute value to keep the numerical viscosity real.
pub fn characteristic_speeds(c1: f64, c2: f64, d: f64, cos_angle: f64, fix: bool) -> WaveSpeeds {
    let s = cos_angle;
    let mut radicand = (c2 - c1) * (c2 - c1) * s * s + 4.0 * d * (1.0 - s * s);
    let hyperbolic = radicand >= 0.0;
    if !hyperbolic && fix {
        radicand = radicand.abs();
    }
    let cs = radicand.sqrt();
    WaveSpeeds {
        lambda_minus: 0.5 * ((c1 + c2) * s - cs),
        lambda_zero: c1 * s,
        lambda_plus: 0.5 * ((c1 + c2) * s + cs),
        sound_speed: cs,
        hyperbolic,
    }
}

/// Hyperbolicity bound of the relaxation system: `None` when `c2 >= c1`
/// (unconditionally hyperbolic), otherwise the |u| threshold
/// `sqrt(d / ((c2/c1)(1 - c2/c1)))`.
pub fn rsoh_hyperbolicity_bound(c1: f64, c2: f64, d: f64) -> Result<Option<f64>, SohError> {
    if !(c1 > 0.0) {
        return Err(SohError::Config(format!("c1={c1} must be positive")));
    }
    if c2 <= 0.0 {
        return Err(SohError::Config(format!("c2={c2} must be positive")));
    }
    if c2 >= c1 {
        return Ok(None);
    }
    let ratio = c2 / c1;
    Ok(Some((d / (ratio * (1.0 - ratio))).sqrt()))
}

#[inline]
fn interface_speed(
    cfg: &SohSolverConfig,
    u_l: &[f64],
    u_r: &[f64],
    axis: usize,
) -> f64 {
    let c = &cfg.coeffs;
    let sl = u_l[axis].clamp(-1.0, 1.0);
    let sr = u_r[axis].clamp(-1.0, 1.0);
    let wl = characteristic_speeds(c.c1, c.c2, c.d, sl, cfg.nonhyperbolic_fix);
    let wr = characteristic_speeds(c.c1, c.c2, c.d, sr, cfg.nonhyperbolic_fix);
    wl.max_abs().max(wr.max_abs())
}

/// Largest characteristic speed over all cells and axes; sets the CFL
/// time step.
pub fn max_wave_speed<const M: usize>(fields: &SohFields<M>, cfg: &SohSolverConfig) -> f64 {
    let c = &cfg.coeffs;
    let mut a = 0.0f64;
    for u in &fields.u {
        for axis in 0..fields.grid.dims {
            let s = u[axis].clamp(-1.0, 1.0);
            a = a.max(characteristic_speeds(c.c1, c.c2, c.d, s, cfg.nonhyperbolic_fix).max_abs());
        }
    }
    a
}

/// Physical flux of the conservative subsystem along `axis`:
/// `(c1 rho u_a, c2 rho u_a u + d rho e_a)`.
#[inline]
fn flux<const M: usize>(
    rho: f64,
    u: &[f64; M],
    axis: usize,
    c1: f64,
    c2: f64,
    d: f64,
) -> (f64, [f64; M]) {
    let ua = u[axis];
    let mut fq = scale(u, c2 * rho * ua);
    fq[axis] += d * rho;
    (c1 * rho * ua, fq)
}

/// One conservative Rusanov update of `(rho, rho u)` over `dt`. The
/// returned fields carry the pre-normalization orientation (`|u|` free).
/// Total mass is conserved exactly by the telescoping flux form.
pub fn rusanov_step<const M: usize>(
    fields: &SohFields<M>,
    cfg: &SohSolverConfig,
    dt: f64,
) -> Result<SohFields<M>, SohError> {
    cfg.validate()?;
    let grid = &fields.grid;
    let c = &cfg.coeffs;
    let mut rho_new = fields.rho.clone();
    let mut q_new: Vec<[f64; M]> = fields
        .rho
        .iter()
        .zip(&fields.u)
        .map(|(&r, u)| scale(u, r))
        .collect();

    let (nx, ny) = (grid.cells[0], if grid.dims == 2 { grid.cells[1] } else { 1 });
    for axis in 0..grid.dims {
        let lambda = dt / grid.dx[axis];
        for j in 0..ny {
            for i in 0..nx {
                // Interface between `left` and its +axis neighbor `right`.
                let left = grid.index(i, j);
                let right = if axis == 0 {
                    grid.index((i + 1) % nx, j)
                } else {
                    grid.index(i, (j + 1) % ny)
                };
                let (rl, ul) = (fields.rho[left], &fields.u[left]);
                let (rr, ur) = (fields.rho[right], &fields.u[right]);
                let a = interface_speed(cfg, ul, ur, axis);
                let (frho_l, fq_l) = flux(rl, ul, axis, c.c1, c.c2, c.d);
                let (frho_r, fq_r) = flux(rr, ur, axis, c.c1, c.c2, c.d);
                let f_rho = 0.5 * (frho_l + frho_r) - 0.5 * a * (rr - rl);
                let mut f_q = [0.0; M];
                for k in 0..M {
                    f_q[k] = 0.5 * (fq_l[k] + fq_r[k]) - 0.5 * a * (rr * ur[k] - rl * ul[k]);
                }
                rho_new[left] -= lambda * f_rho;
                rho_new[right] += lambda * f_rho;
                for k in 0..M {
                    q_new[left][k] -= lambda * f_q[k];
                    q_new[right][k] += lambda * f_q[k];
                }
            }
        }
    }

    for (cell, &r) in rho_new.iter().enumerate() {
        if r < 0.0 {
            return Err(SohError::StepRejected { min_rho: r, cell, dt });
        }
    }
    let u_new: Vec<[f64; M]> = rho_new
        .iter()
        .zip(&q_new)
        .map(|(&r, q)| if r > 0.0 { scale(q, 1.0 / r) } else { [0.0; M] })
        .collect();
    Ok(SohFields { grid: grid.clone(), rho: rho_new, u: u_new, t: fields.t + dt })
}

/// Relaxation step in the stiff limit: `u <- u/|u|` per cell, density
/// untouched. Degenerate cells (`|u| < 1e-12`) fall back to the
/// orientation in `previous` when given, else keep their value.
pub fn normalize_velocity<const M: usize>(
    fields: &mut SohFields<M>,
    previous: Option<&[[f64; M]]>,
) {
    for (idx, u) in fields.u.iter_mut().enumerate() {
        match normalized(u, 1e-12) {
            Some(unit) => *u = unit,
            None => {
                if let Some(prev) = previous {
                    *u = prev[idx];
                }
            }
        }
    }
}

/// Explicit update of the orientation by the projected diffusion
/// `c3/rho P_{u-perp} lap(rho u)`, followed by renormalization.
pub fn viscous_step<const M: usize>(
    fields: &mut SohFields<M>,
    cfg: &SohSolverConfig,
    dt: f64,
) -> Result<(), SohError> {
    cfg.validate()?;
    let c3 = cfg.coeffs.c3;
    if c3 == 0.0 {
        return Ok(());
    }
    let grid = fields.grid.clone();
    let max_rho = fields.rho.iter().cloned().fold(0.0, f64::max);
    let min_rho = fields.rho.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_rho > 0.0) {
        return Err(SohError::Config("viscous step requires positive density".into()));
    }
    let dx_min = grid.dx[..grid.dims].iter().cloned().fold(f64::INFINITY, f64::min);
    let stable = dx_min * dx_min / (2.0 * grid.dims as f64 * c3 * max_rho / min_rho);
    if dt > stable {
        return Err(SohError::Config(format!(
            "viscous dt={dt} exceeds explicit stability bound {stable}"
        )));
    }
    let q: Vec<[f64; M]> =
        fields.rho.iter().zip(&fields.u).map(|(&r, u)| scale(u, r)).collect();
    let (nx, ny) = (grid.cells[0], if grid.dims == 2 { grid.cells[1] } else { 1 });
    let mut new_u = fields.u.clone();
    for j in 0..ny {
        for i in 0..nx {
            let idx = grid.index(i, j);
            let mut lap = [0.0; M];
            for axis in 0..grid.dims {
                let (p, m) = if axis == 0 {
                    (grid.index((i + 1) % nx, j), grid.index((i + nx - 1) % nx, j))
                } else {
                    (grid.index(i, (j + 1) % ny), grid.index(i, (j + ny - 1) % ny))
                };
                let inv = 1.0 / (grid.dx[axis] * grid.dx[axis]);
                for k in 0..M {
                    lap[k] += (q[p][k] - 2.0 * q[idx][k] + q[m][k]) * inv;
                }
            }
            let forcing = project_tangent(&fields.u[idx], &lap);
            let cand = add(&fields.u[idx], &scale(&forcing, dt * c3 / fields.rho[idx]));
            new_u[idx] = normalized(&cand, 1e-12).unwrap_or(fields.u[idx]);
        }
    }
    fields.u = new_u;
    Ok(())
}

fn stable_dt<const M: usize>(fields: &SohFields<M>, cfg: &SohSolverConfig) -> f64 {
    let grid = &fields.grid;
    let speed = max_wave_speed(fields, cfg).max(1e-12);
    let dx_min = grid.dx[..grid.dims].iter().cloned().fold(f64::INFINITY, f64::min);
    let mut dt = cfg.cfl * dx_min / speed;
    if let Some(cap) = cfg.dt_cap {
        dt = dt.min(cap);
    }
    if cfg.viscous && cfg.coeffs.c3 > 0.0 {
        let max_rho = fields.rho.iter().cloned().fold(0.0, f64::max);
        let min_rho = fields.rho.iter().cloned().fold(f64::INFINITY, f64::min).max(1e-300);
        dt = dt.min(
            0.9 * dx_min * dx_min / (2.0 * grid.dims as f64 * cfg.coeffs.c3 * max_rho / min_rho),
        );
    }
    dt
}

fn step_with_limit<const M: usize>(
    fields: &SohFields<M>,
    cfg: &SohSolverConfig,
    dt_limit: Option<f64>,
) -> Result<(SohFields<M>, f64), SohError> {
    let mut dt = stable_dt(fields, cfg);
    if let Some(lim) = dt_limit {
        dt = dt.min(lim);
    }
    // A rejected step (negative density) is retried with half the step.
    for _ in 0..8 {
        match rusanov_step(fields, cfg, dt) {
            Ok(mut next) => {
                normalize_velocity(&mut next, Some(&fields.u));
                if cfg.viscous {
                    viscous_step(&mut next, cfg, dt)?;
                }
                return Ok((next, dt));
            }
            Err(SohError::StepRejected { .. }) => dt *= 0.5,
            Err(e) => return Err(e),
        }
    }
    Err(SohError::Config("step rejected repeatedly; density near vacuum".into()))
}

/// One full splitting step: Rusanov transport, velocity renormalization,
/// optional viscous update. Returns the new fields and the dt used.
pub fn soh_step<const M: usize>(
    fields: &SohFields<M>,
    cfg: &SohSolverConfig,
) -> Result<(SohFields<M>, f64), SohError> {
    step_with_limit(fields, cfg, None)
}

/// Advances to `t_end`, clipping the final step, and collects snapshots
/// every `snapshot_every` time units (initial and final states always
/// included). `snapshot_every <= 0` keeps only the endpoints.
pub fn soh_run<const M: usize>(
    init: &SohFields<M>,
    cfg: &SohSolverConfig,
    t_end: f64,
    snapshot_every: f64,
) -> Result<Vec<SohFields<M>>, SohError> {
    if t_end < init.t {
        return Err(SohError::Config(format!("t_end={t_end} before initial time {}", init.t)));
    }
    let mut snaps = vec![init.clone()];
    if t_end == init.t {
        return Ok(snaps);
    }
    let mut state = init.clone();
    let mut next_snap = if snapshot_every > 0.0 {
        init.t + snapshot_every
    } else {
        f64::INFINITY
    };
    while state.t < t_end - 1e-12 {
        let (next, _) = step_with_limit(&state, cfg, Some(t_end - state.t))?;
        state = next;
        if state.t + 1e-12 >= next_snap && state.t < t_end - 1e-12 {
            snaps.push(state.clone());
            while next_snap <= state.t + 1e-12 {
                next_snap += snapshot_every;
            }
        }
    }
    snaps.push(state);
    Ok(snaps)
}

/// Naive shock-capturing discretization of the non-conservative form:
/// flux-form continuity update, but the orientation advanced in
/// primitive variables (central differences plus Rusanov-type
/// dissipation), then renormalized. Kept as a contrast scheme: it
/// produces wrong discontinuous solutions.
pub fn nonconservative_step<const M: usize>(
    fields: &SohFields<M>,
    cfg: &SohSolverConfig,
    dt: f64,
) -> Result<SohFields<M>, SohError> {
    cfg.validate()?;
    let grid = &fields.grid;
    let c = &cfg.coeffs;
    let mut rho_new = fields.rho.clone();
    let mut u_new = fields.u.clone();
    let (nx, ny) = (grid.cells[0], if grid.dims == 2 { grid.cells[1] } else { 1 });
    for axis in 0..grid.dims {
        let lambda = dt / grid.dx[axis];
        for j in 0..ny {
            for i in 0..nx {
                let idx = grid.index(i, j);
                let (p, m) = if axis == 0 {
                    (grid.index((i + 1) % nx, j), grid.index((i + nx - 1) % nx, j))
                } else {
                    (grid.index(i, (j + 1) % ny), grid.index(i, (j + ny - 1) % ny))
                };
                let a_p = interface_speed(cfg, &fields.u[idx], &fields.u[p], axis);
                let a_m = interface_speed(cfg, &fields.u[m], &fields.u[idx], axis);
                // Conservative Rusanov flux for the density equation.
                let f = |l: usize, r: usize, a: f64| {
                    0.5 * c.c1
                        * (fields.rho[l] * fields.u[l][axis] + fields.rho[r] * fields.u[r][axis])
                        - 0.5 * a * (fields.rho[r] - fields.rho[l])
                };
                rho_new[idx] -= lambda * (f(idx, p, a_p) - f(m, idx, a_m));
                // Primitive-variable update for the orientation.
                let a = a_p.max(a_m);
                let du = scale(&sub(&fields.u[p], &fields.u[m]), 0.5);
                let drho = 0.5 * (fields.rho[p] - fields.rho[m]);
                let mut grad_term = [0.0; M];
                grad_term[axis] = c.d * drho / fields.rho[idx].max(1e-300);
                let advect = add(&scale(&du, c.c2 * fields.u[idx][axis]), &grad_term);
                let tangent = project_tangent(&fields.u[idx], &advect);
                let visc = {
                    let mut v = [0.0; M];
                    for k in 0..M {
                        v[k] = 0.5
                            * a
                            * (fields.u[p][k] - 2.0 * fields.u[idx][k] + fields.u[m][k]);
                    }
                    v
                };
                for k in 0..M {
                    u_new[idx][k] += -lambda * tangent[k] + lambda * visc[k];
                }
            }
        }
    }
    for (cell, &r) in rho_new.iter().enumerate() {
        if r < 0.0 {
            return Err(SohError::StepRejected { min_rho: r, cell, dt });
        }
    }
    let mut next = SohFields { grid: grid.clone(), rho: rho_new, u: u_new, t: fields.t + dt };
    normalize_velocity(&mut next, Some(&fields.u));
    Ok(next)
}

/// Runs the contrast scheme with the same CFL policy as the relaxation
/// solver.
pub fn nonconservative_run<const M: usize>(
    init: &SohFields<M>,
    cfg: &SohSolverConfig,
    t_end: f64,
) -> Result<SohFields<M>, SohError> {
    let mut state = init.clone();
    while state.t < t_end - 1e-12 {
        let dt = stable_dt(&state, cfg).min(t_end - state.t);
        state = nonconservative_step(&state, cfg, dt)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn test_coeffs(c1: f64, c2: f64, d: f64) -> CoefficientSet {
        CoefficientSet { d, m: 2, c1, c2, c3: 0.0, eta0: 0.0, k: 0.125 }
    }

    fn cfg_inviscid(c1: f64, c2: f64, d: f64) -> SohSolverConfig {
        SohSolverConfig::new(test_coeffs(c1, c2, d), 0.5).unwrap()
    }

    #[test]
    fn speeds_at_normal_incidence() {
        let w = characteristic_speeds(0.9, 0.7, 1.0, 0.0, false);
        assert_relative_eq!(w.lambda_minus, -1.0, epsilon = 1e-14);
        assert_relative_eq!(w.lambda_plus, 1.0, epsilon = 1e-14);
        assert_eq!(w.lambda_zero, 0.0);
    }

    #[test]
    fn speeds_at_grazing_incidence() {
        let (c1, c2) = (0.9, 0.4);
        let w = characteristic_speeds(c1, c2, 0.3, 1.0, false);
        assert_relative_eq!(w.lambda_minus, c2.min(c1), epsilon = 1e-14);
        assert_relative_eq!(w.lambda_plus, c2.max(c1), epsilon = 1e-14);
        assert_relative_eq!(w.lambda_zero, c1, epsilon = 1e-14);
    }

    #[test]
    fn lambda_zero_identity_random_samples() {
        let mut rng = crate::rngstream::CounterRng::for_purpose(5, 1);
        use rand::Rng;
        for _ in 0..1000 {
            let c1 = rng.gen::<f64>();
            let c2 = rng.gen::<f64>();
            let d = rng.gen::<f64>() * 2.0 + 0.01;
            let s = rng.gen::<f64>() * 2.0 - 1.0;
            let w = characteristic_speeds(c1, c2, d, s, true);
            assert_eq!(w.lambda_zero, c1 * s);
        }
    }

    #[test]
    fn hyperbolicity_bound_cases() {
        assert!(rsoh_hyperbolicity_bound(0.5, 0.5, 1.0).unwrap().is_none());
        assert!(rsoh_hyperbolicity_bound(0.5, 0.7, 1.0).unwrap().is_none());
        let b = rsoh_hyperbolicity_bound(1.0, 0.5, 1.0).unwrap().unwrap();
        assert_relative_eq!(b, 2.0, epsilon = 1e-14);
        // Increasing in d at fixed ratio.
        let b2 = rsoh_hyperbolicity_bound(1.0, 0.5, 2.0).unwrap().unwrap();
        assert!(b2 > b);
        assert!(rsoh_hyperbolicity_bound(1.0, -0.1, 1.0).is_err());
    }

    #[test]
    fn uniform_state_is_exact_fixed_point() {
        let grid = SohGrid::new_2d(8, 8, 4.0, 4.0).unwrap();
        let f = SohFields::uniform(grid, 1.5, [0.6, 0.8]).unwrap();
        let cfg = cfg_inviscid(0.9, 0.6, 0.5);
        let (next, _) = soh_step(&f, &cfg).unwrap();
        for i in 0..f.rho.len() {
            assert_relative_eq!(next.rho[i], 1.5, epsilon = 1e-14);
            assert_relative_eq!(next.u[i][0], 0.6, epsilon = 1e-13);
            assert_relative_eq!(next.u[i][1], 0.8, epsilon = 1e-13);
        }
    }

    #[test]
    fn mass_is_conserved_exactly() {
        let grid = SohGrid::new_1d(64, 10.0).unwrap();
        let mut f = SohFields::uniform(grid, 1.0, [1.0, 0.0]).unwrap();
        for (i, r) in f.rho.iter_mut().enumerate() {
            *r = 1.0 + 0.5 * (i as f64 * 0.3).sin();
        }
        let cfg = cfg_inviscid(0.9, 0.6, 0.5);
        let m0 = f.total_mass();
        let mut state = f;
        for _ in 0..200 {
            let (next, _) = soh_step(&state, &cfg).unwrap();
            state = next;
        }
        assert_relative_eq!(state.total_mass(), m0, max_relative = 1e-12);
        assert!(state.max_unit_drift() < UNIT_TOL);
    }

    #[test]
    fn advection_sanity_against_upwind_oracle() {
        // With d = 0 and u frozen uniform (c2 arbitrary since u is
        // constant), the density bump advects at speed c1; compare
        // against a first-order upwind oracle at matching resolution.
        let n = 128;
        let l = 10.0;
        let grid = SohGrid::new_1d(n, l).unwrap();
        let mut f = SohFields::uniform(grid.clone(), 1.0, [1.0, 0.0]).unwrap();
        for i in 0..n {
            let x = grid.center(0, i);
            f.rho[i] = 1.0 + (-((x - 3.0) / 0.8).powi(2)).exp();
        }
        let c1 = 0.8;
        let coeffs = CoefficientSet { d: 1e-30, m: 2, c1, c2: c1, c3: 0.0, eta0: 0.0, k: 0.125 };
        let cfg = SohSolverConfig::new(coeffs, 0.5).unwrap();

        let dx = l / n as f64;
        let dt = 0.5 * dx / c1;
        let steps = 100;
        let mut upwind = f.rho.clone();
        let mut state = f;
        for _ in 0..steps {
            state = {
                let mut s = rusanov_step(&state, &cfg, dt).unwrap();
                normalize_velocity(&mut s, None);
                s
            };
            let prev = upwind.clone();
            for i in 0..n {
                let im = (i + n - 1) % n;
                upwind[i] = prev[i] - dt / dx * c1 * (prev[i] - prev[im]);
            }
        }
        // Both are first-order schemes for the same advection problem;
        // they should agree closely (Rusanov adds slightly more
        // diffusion through the sound-speed bound).
        let l1: f64 =
            state.rho.iter().zip(&upwind).map(|(a, b)| (a - b).abs()).sum::<f64>() * dx;
        assert!(l1 < 0.05, "rusanov vs upwind l1 = {l1}");
    }

    #[test]
    fn normalization_semantics() {
        let grid = SohGrid::new_1d(4, 1.0).unwrap();
        let mut f = SohFields::uniform(grid, 1.0, [1.0, 0.0]).unwrap();
        f.u[1] = [0.6, 0.0];
        f.u[2] = [0.0, 0.0]; // degenerate
        let prev = vec![[0.0, 1.0]; 4];
        let rho_before = f.rho.clone();
        normalize_velocity(&mut f, Some(&prev));
        assert_eq!(f.u[0], [1.0, 0.0]); // idempotent on unit input
        assert_eq!(f.u[1], [1.0, 0.0]);
        assert_eq!(f.u[2], [0.0, 1.0]); // degenerate keeps previous
        assert_eq!(f.rho, rho_before); // density untouched
    }

    #[test]
    fn viscous_step_identity_cases() {
        let grid = SohGrid::new_1d(16, 4.0).unwrap();
        let f0 = SohFields::uniform(grid, 2.0, [1.0, 0.0]).unwrap();
        let coeffs = CoefficientSet { d: 0.5, m: 2, c1: 0.9, c2: 0.6, c3: 0.0, eta0: 0.0, k: 0.125 };
        let mut cfg = SohSolverConfig::new(coeffs, 0.5).unwrap();
        cfg.viscous = true;
        let mut f = f0.clone();
        viscous_step(&mut f, &cfg, 0.01).unwrap(); // c3 = 0: identity
        assert_eq!(f.u, f0.u);

        cfg.coeffs.c3 = 0.1;
        let mut f = f0.clone();
        viscous_step(&mut f, &cfg, 0.01).unwrap(); // uniform: identity
        for u in &f.u {
            assert_relative_eq!(u[0], 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn viscous_decay_of_angle_perturbation() {
        // Sinusoidal angle perturbation on uniform density: the H1
        // seminorm of the angle decays monotonically (heat-like).
        let n = 64;
        let grid = SohGrid::new_1d(n, 4.0).unwrap();
        let mut f = SohFields::uniform(grid.clone(), 1.0, [1.0, 0.0]).unwrap();
        for i in 0..n {
            let x = grid.center(0, i);
            let phi = 0.2 * (std::f64::consts::TAU * x / 4.0).sin();
            f.u[i] = [phi.cos(), phi.sin()];
        }
        let coeffs = CoefficientSet { d: 0.5, m: 2, c1: 0.9, c2: 0.6, c3: 0.05, eta0: 1.0, k: 0.125 };
        let mut cfg = SohSolverConfig::new(coeffs, 0.5).unwrap();
        cfg.viscous = true;
        let dx = 4.0 / n as f64;
        let h1 = |f: &SohFields<2>| -> f64 {
            (0..n)
                .map(|i| {
                    let ip = (i + 1) % n;
                    let dphi = f.u[ip][1].atan2(f.u[ip][0]) - f.u[i][1].atan2(f.u[i][0]);
                    (dphi / dx).powi(2)
                })
                .sum::<f64>()
                * dx
        };
        let dt = 0.9 * dx * dx / (2.0 * coeffs.c3);
        let mut prev = h1(&f);
        for _ in 0..50 {
            viscous_step(&mut f, &cfg, dt).unwrap();
            let cur = h1(&f);
            assert!(cur <= prev + 1e-14, "H1 seminorm increased: {prev} -> {cur}");
            prev = cur;
        }
    }

    #[test]
    fn viscous_stability_guard_rejects_large_dt() {
        let grid = SohGrid::new_1d(16, 4.0).unwrap();
        let mut f = SohFields::uniform(grid, 1.0, [1.0, 0.0]).unwrap();
        let coeffs = CoefficientSet { d: 0.5, m: 2, c1: 0.9, c2: 0.6, c3: 1.0, eta0: 1.0, k: 0.125 };
        let mut cfg = SohSolverConfig::new(coeffs, 0.5).unwrap();
        cfg.viscous = true;
        assert!(viscous_step(&mut f, &cfg, 10.0).is_err());
    }

    #[test]
    fn run_endpoints_and_determinism() {
        let grid = SohGrid::new_1d(32, 8.0).unwrap();
        let mut f = SohFields::uniform(grid.clone(), 1.0, [1.0, 0.0]).unwrap();
        for i in 0..32 {
            f.rho[i] = 1.0 + 0.3 * (grid.center(0, i)).cos();
        }
        let cfg = cfg_inviscid(0.9, 0.6, 0.5);
        // t_end == t0: initial snapshot only.
        let same = soh_run(&f, &cfg, 0.0, 1.0).unwrap();
        assert_eq!(same.len(), 1);
        let a = soh_run(&f, &cfg, 2.0, 0.5).unwrap();
        let b = soh_run(&f, &cfg, 2.0, 0.5).unwrap();
        assert_eq!(a.len(), b.len());
        let last_a = a.last().unwrap();
        let last_b = b.last().unwrap();
        assert_eq!(last_a.rho, last_b.rho);
        assert_eq!(last_a.u, last_b.u);
        assert!((last_a.t - 2.0).abs() < 1e-9);
    }

    #[test]
    fn self_convergence_first_order() {
        // Richardson self-convergence on a smooth 1D profile: halving dx
        // roughly halves the L1 error of the coarse solution.
        let l = 10.0;
        let t_end = 1.0;
        let cfg = cfg_inviscid(0.9, 0.6, 0.5);
        let solve = |n: usize| -> Vec<f64> {
            let grid = SohGrid::new_1d(n, l).unwrap();
            let mut f = SohFields::uniform(grid.clone(), 1.0, [1.0, 0.0]).unwrap();
            for i in 0..n {
                let x = grid.center(0, i);
                f.rho[i] = 1.0 + 0.4 * (std::f64::consts::TAU * x / l).sin();
                let phi = 0.3 * (std::f64::consts::TAU * x / l).cos();
                f.u[i] = [phi.cos(), phi.sin()];
            }
            soh_run(&f, &cfg, t_end, 0.0).unwrap().pop().unwrap().rho
        };
        let coarse = solve(64);
        let mid = solve(128);
        let fine = solve(256);
        let err = |a: &[f64], b: &[f64]| -> f64 {
            // Compare a coarse solution to the restriction of one at 2x.
            a.iter()
                .enumerate()
                .map(|(i, &v)| (v - 0.5 * (b[2 * i] + b[2 * i + 1])).abs())
                .sum::<f64>()
                / a.len() as f64
        };
        let e1 = err(&coarse, &mid);
        let e2 = err(&mid, &fine);
        let rate = e1 / e2;
        assert!(rate > 1.5 && rate < 3.0, "self-convergence rate {rate}");
    }

    #[test]
    fn grid_rejects_too_few_cells() {
        assert!(SohGrid::new_1d(3, 1.0).is_err());
    }
}
