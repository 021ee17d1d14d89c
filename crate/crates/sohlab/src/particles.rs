//! Microscopic self-propelled particle system: discrete alignment
//! updates and the time-continuous sphere-valued SDE, on a periodic box
//! with cell-list neighbor search.
//!
//! All particles move at the common speed `c`; the state of a particle
//! is its position in the box and a unit direction vector. Updates are
//! synchronous: every neighbor average is computed from the pre-step
//! state, and each particle draws randomness from its own counter-based
//! stream, so trajectories are reproducible independently of evaluation
//! order.

use crate::rngstream::CounterRng;
use crate::soh::{SohFields, SohGrid};
use crate::vector::{
    add, dot, norm, normalized, periodic_delta, project_tangent, scale, wrap_position,
};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ParticleError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// Discrete Vicsek noise: rotate the neighbor average by an angle
    /// drawn uniformly from `[0, d_angle]` towards a uniform tangent
    /// direction (`{+1,-1}` in dimension 2).
    UniformCone { d_angle: f64 },
    /// Brownian noise of intensity `sqrt(2 D)` on the sphere.
    Brownian,
}

#[derive(Debug, Clone)]
pub struct ParticleParams<const M: usize> {
    pub n: usize,
    /// Speed (length/time).
    pub c: f64,
    /// Alignment frequency (1/time).
    pub nu: f64,
    /// Brownian noise intensity (1/time).
    pub noise_d: f64,
    /// Interaction radius.
    pub r: f64,
    pub dt: f64,
    pub box_len: [f64; M],
    pub noise_model: NoiseModel,
    pub seed: u64,
}

impl<const M: usize> ParticleParams<M> {
    pub fn validate(&self) -> Result<(), ParticleError> {
        if !(M == 2 || M == 3) {
            return Err(ParticleError::Config(format!("dimension m={M} not supported")));
        }
        if self.n == 0 {
            return Err(ParticleError::Config("particle count must be >= 1".into()));
        }
        for (name, v) in [("c", self.c), ("nu", self.nu), ("R", self.r), ("dt", self.dt)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ParticleError::Config(format!("{name}={v} must be positive")));
            }
        }
        if self.noise_d < 0.0 {
            return Err(ParticleError::Config(format!("D={} must be nonnegative", self.noise_d)));
        }
        let min_box = self.box_len.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min_box > 0.0) {
            return Err(ParticleError::Config("box edges must be positive".into()));
        }
        if self.r > min_box / 2.0 {
            return Err(ParticleError::Config(format!(
                "interaction radius R={} exceeds half the smallest box edge {}",
                self.r,
                min_box / 2.0
            )));
        }
        if let NoiseModel::UniformCone { d_angle } = self.noise_model {
            if !(0.0..=std::f64::consts::PI).contains(&d_angle) {
                return Err(ParticleError::Domain(format!(
                    "noise angle D={d_angle} outside [0, pi]"
                )));
            }
        }
        Ok(())
    }
}

/// Positions and unit velocities of the ensemble, plus the counters that
/// identify the per-particle random streams.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble<const M: usize> {
    pub x: Vec<[f64; M]>,
    pub v: Vec<[f64; M]>,
    pub t: f64,
    pub step_index: u64,
    pub seed: u64,
}

impl<const M: usize> ParticleEnsemble<M> {
    pub fn new(x: Vec<[f64; M]>, v: Vec<[f64; M]>, seed: u64) -> Result<Self, ParticleError> {
        if x.len() != v.len() || x.is_empty() {
            return Err(ParticleError::Config("positions/velocities length mismatch".into()));
        }
        for vk in &v {
            if (norm(vk) - 1.0).abs() > UNIT_TOL {
                return Err(ParticleError::Domain(format!(
                    "velocity norm {} differs from 1",
                    norm(vk)
                )));
            }
        }
        Ok(Self { x, v, t: 0.0, step_index: 0, seed })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Uniform random positions with all velocities set to `direction`.
    pub fn uniform_aligned(
        n: usize,
        box_len: &[f64; M],
        direction: [f64; M],
        seed: u64,
    ) -> Result<Self, ParticleError> {
        if (norm(&direction) - 1.0).abs() > UNIT_TOL {
            return Err(ParticleError::Domain("direction must be a unit vector".into()));
        }
        let mut rng = CounterRng::for_purpose(seed, 1);
        let x = (0..n)
            .map(|_| {
                let mut p = [0.0; M];
                for (pi, &b) in p.iter_mut().zip(box_len.iter()) {
                    *pi = rng.gen::<f64>() * b;
                }
                p
            })
            .collect();
        Self::new(x, vec![direction; n], seed)
    }
}

/// Cell list with cell size >= `r`, one layer of neighbor cells.
pub struct CellList<const M: usize> {
    cells_per_axis: [usize; M],
    inv_cell: [f64; M],
    box_len: [f64; M],
    /// CSR layout: `starts[c]..starts[c+1]` indexes into `items`.
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl<const M: usize> CellList<M> {
    pub fn build(positions: &[[f64; M]], box_len: &[f64; M], r: f64) -> Self {
        let mut cells_per_axis = [1usize; M];
        let mut inv_cell = [0.0; M];
        for i in 0..M {
            cells_per_axis[i] = ((box_len[i] / r).floor() as usize).max(1);
            inv_cell[i] = cells_per_axis[i] as f64 / box_len[i];
        }
        let n_cells: usize = cells_per_axis.iter().product();
        let cell_of = |p: &[f64; M]| -> usize {
            let mut idx = 0usize;
            for i in (0..M).rev() {
                let c = ((p[i] * inv_cell[i]) as usize).min(cells_per_axis[i] - 1);
                idx = idx * cells_per_axis[i] + c;
            }
            idx
        };
        let mut counts = vec![0u32; n_cells + 1];
        for p in positions {
            counts[cell_of(p) + 1] += 1;
        }
        for c in 0..n_cells {
            counts[c + 1] += counts[c];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut items = vec![0u32; positions.len()];
        for (k, p) in positions.iter().enumerate() {
            let c = cell_of(p);
            items[fill[c] as usize] = k as u32;
            fill[c] += 1;
        }
        Self { cells_per_axis, inv_cell, box_len: *box_len, starts, items }
    }

    /// Calls `visit` for every particle index in the 3^M block of cells
    /// around `p` (deduplicated when an axis has fewer than 3 cells).
    pub fn for_neighbors<F: FnMut(u32)>(&self, p: &[f64; M], mut visit: F) {
        let mut base = [0usize; M];
        for i in 0..M {
            base[i] = ((p[i] * self.inv_cell[i]) as usize).min(self.cells_per_axis[i] - 1);
        }
        // Per-axis candidate cells, deduplicated for tiny grids.
        let mut axis_cells: [[usize; 3]; M] = [[0; 3]; M];
        let mut axis_len = [0usize; M];
        for i in 0..M {
            let n = self.cells_per_axis[i];
            let push = |cells: &mut [usize; 3], len: &mut usize, c: usize| {
                if !cells[..*len].contains(&c) {
                    cells[*len] = c;
                    *len += 1;
                }
            };
            let mut len = 0;
            push(&mut axis_cells[i], &mut len, (base[i] + n - 1) % n);
            push(&mut axis_cells[i], &mut len, base[i]);
            push(&mut axis_cells[i], &mut len, (base[i] + 1) % n);
            axis_len[i] = len;
        }
        let mut counter = [0usize; M];
        loop {
            let mut idx = 0usize;
            for i in (0..M).rev() {
                idx = idx * self.cells_per_axis[i] + axis_cells[i][counter[i]];
            }
            for &k in &self.items[self.starts[idx] as usize..self.starts[idx + 1] as usize] {
                visit(k);
            }
            // Odometer increment over the per-axis candidate lists.
            let mut i = 0;
            loop {
                if i == M {
                    return;
                }
                counter[i] += 1;
                if counter[i] < axis_len[i] {
                    break;
                }
                counter[i] = 0;
                i += 1;
            }
        }
    }

    pub fn box_len(&self) -> &[f64; M] {
        &self.box_len
    }
}

/// Normalized sum of the velocities of all particles within periodic
/// distance `r` of particle `k` (including `k` itself). Returns `None`
/// when the sum has no direction (`|J| < 1e-12`).
pub fn neighbor_average<const M: usize>(
    ens: &ParticleEnsemble<M>,
    cells: &CellList<M>,
    k: usize,
    r: f64,
) -> Option<[f64; M]> {
    let p = &ens.x[k];
    let r2 = r * r;
    let mut j = [0.0; M];
    cells.for_neighbors(p, |idx| {
        let d = periodic_delta(p, &ens.x[idx as usize], &cells.box_len);
        if dot(&d, &d) <= r2 {
            j = add(&j, &ens.v[idx as usize]);
        }
    });
    normalized(&j, 1e-12)
}

/// Draws a unit vector orthogonal to the unit vector `v`: one of the two
/// tangent signs in dimension 2, a uniform point of the orthogonal circle
/// in dimension 3.
fn sample_orthogonal<const M: usize>(v: &[f64; M], rng: &mut CounterRng) -> [f64; M] {
    let mut w = [0.0; M];
    match M {
        2 => {
            let s: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let vs = &v[..];
            w[0] = -vs[1] * s;
            w[1] = vs[0] * s;
        }
        3 => {
            let vs = &v[..];
            // Basis of the plane orthogonal to v.
            let helper = if vs[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
            let e1 = {
                let mut e = [
                    helper[0] - vs[0] * (helper[0] * vs[0] + helper[1] * vs[1] + helper[2] * vs[2]),
                    helper[1] - vs[1] * (helper[0] * vs[0] + helper[1] * vs[1] + helper[2] * vs[2]),
                    helper[2] - vs[2] * (helper[0] * vs[0] + helper[1] * vs[1] + helper[2] * vs[2]),
                ];
                let n = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
                for x in &mut e {
                    *x /= n;
                }
                e
            };
            let e2 = [
                vs[1] * e1[2] - vs[2] * e1[1],
                vs[2] * e1[0] - vs[0] * e1[2],
                vs[0] * e1[1] - vs[1] * e1[0],
            ];
            let phi = rng.gen::<f64>() * std::f64::consts::TAU;
            let (sp, cp) = phi.sin_cos();
            for i in 0..M {
                w[i] = cp * e1[i] + sp * e2[i];
            }
        }
        _ => unreachable!("dimension checked in ParticleParams::validate"),
    }
    w
}

/// One synchronous step of the discrete Vicsek update: positions advance
/// with the pre-step velocity, the new velocity is the neighbor average
/// rotated by a uniform random angle in `[0, d_angle]`.
pub fn step_discrete<const M: usize>(
    ens: &mut ParticleEnsemble<M>,
    p: &ParticleParams<M>,
) -> Result<(), ParticleError> {
    p.validate()?;
    let d_angle = match p.noise_model {
        NoiseModel::UniformCone { d_angle } => d_angle,
        NoiseModel::Brownian => {
            return Err(ParticleError::Config(
                "step_discrete requires the uniform_cone noise model".into(),
            ))
        }
    };
    let cells = CellList::build(&ens.x, &p.box_len, p.r);
    let n = ens.len();
    let mut new_v = vec![[0.0; M]; n];
    for k in 0..n {
        let vbar = neighbor_average(ens, &cells, k, p.r).unwrap_or(ens.v[k]);
        let mut rng = CounterRng::for_particle(ens.seed, ens.step_index, k as u64);
        let theta = rng.gen::<f64>() * d_angle;
        let w = sample_orthogonal(&vbar, &mut rng);
        let v = add(&scale(&vbar, theta.cos()), &scale(&w, theta.sin()));
        new_v[k] = normalized(&v, 1e-300).expect("rotation of a unit vector stays unit");
    }
    for k in 0..n {
        for i in 0..M {
            ens.x[k][i] += p.c * ens.v[k][i] * p.dt;
        }
        wrap_position(&mut ens.x[k], &p.box_len);
        ens.v[k] = new_v[k];
    }
    ens.t += p.dt;
    ens.step_index += 1;
    Ok(())
}

/// One Euler step of the Stratonovich sphere SDE: tangent projection of
/// the alignment force and Brownian increment, then renormalization.
pub fn step_continuous<const M: usize>(
    ens: &mut ParticleEnsemble<M>,
    p: &ParticleParams<M>,
) -> Result<(), ParticleError> {
    p.validate()?;
    if p.noise_model != NoiseModel::Brownian {
        return Err(ParticleError::Config(
            "step_continuous requires the brownian noise model".into(),
        ));
    }
    if p.nu * p.dt > 0.5 {
        return Err(ParticleError::Config(format!(
            "nu*dt = {} exceeds 0.5; reduce the time step",
            p.nu * p.dt
        )));
    }
    let cells = CellList::build(&ens.x, &p.box_len, p.r);
    let n = ens.len();
    let noise_scale = (2.0 * p.noise_d * p.dt).sqrt();
    let mut new_v = vec![[0.0; M]; n];
    for k in 0..n {
        let vbar = neighbor_average(ens, &cells, k, p.r).unwrap_or(ens.v[k]);
        let mut rng = CounterRng::for_particle(ens.seed, ens.step_index, k as u64);
        let mut incr = scale(&vbar, p.nu * p.dt);
        for i in 0..M {
            let xi: f64 = rng.sample(StandardNormal);
            incr[i] += noise_scale * xi;
        }
        let tangent = project_tangent(&ens.v[k], &incr);
        let v = add(&ens.v[k], &tangent);
        new_v[k] = normalized(&v, 1e-12).unwrap_or(ens.v[k]);
    }
    for k in 0..n {
        for i in 0..M {
            ens.x[k][i] += p.c * ens.v[k][i] * p.dt;
        }
        wrap_position(&mut ens.x[k], &p.box_len);
        ens.v[k] = new_v[k];
    }
    ens.t += p.dt;
    ens.step_index += 1;
    Ok(())
}

/// Coarse-grained fields plus per-cell particle counts; cells without
/// particles have `rho = 0` and carry no orientation (zero vector).
pub struct EmpiricalFields<const M: usize> {
    pub fields: SohFields<M>,
    pub counts: Vec<usize>,
}

/// Bins the ensemble onto `grid` (matching the leading axes of the box).
/// Each particle carries `mass_per_particle`; the cell volume includes
/// the transverse box extent for grids of lower dimension than the box.
pub fn empirical_fields<const M: usize>(
    ens: &ParticleEnsemble<M>,
    box_len: &[f64; M],
    grid: &SohGrid,
    mass_per_particle: f64,
) -> Result<EmpiricalFields<M>, ParticleError> {
    if grid.dims > M {
        return Err(ParticleError::Config("grid has more axes than the particle box".into()));
    }
    for a in 0..grid.dims {
        if (grid.box_len[a] - box_len[a]).abs() > 1e-9 * box_len[a] {
            return Err(ParticleError::Config(format!(
                "grid box {} does not cover particle box {} on axis {a}",
                grid.box_len[a], box_len[a]
            )));
        }
    }
    let transverse: f64 = box_len[grid.dims..].iter().product();
    let n_cells = grid.n_cells();
    let cell_vol = grid.cell_volume() * transverse;
    let mut counts = vec![0usize; n_cells];
    let mut current = vec![[0.0; M]; n_cells];
    for (x, v) in ens.x.iter().zip(&ens.v) {
        let mut idx = 0usize;
        for a in (0..grid.dims).rev() {
            let c = ((x[a] / grid.dx[a]) as usize).min(grid.cells[a] - 1);
            idx = idx * grid.cells[a] + c;
        }
        counts[idx] += 1;
        current[idx] = add(&current[idx], v);
    }
    let rho: Vec<f64> =
        counts.iter().map(|&c| c as f64 * mass_per_particle / cell_vol).collect();
    let u: Vec<[f64; M]> =
        current.iter().map(|j| normalized(j, 1e-12).unwrap_or([0.0; M])).collect();
    Ok(EmpiricalFields { fields: SohFields { grid: grid.clone(), rho, u, t: ens.t }, counts })
}

/// Global alignment order parameter `|sum_k V_k| / n`.
pub fn global_order_parameter<const M: usize>(ens: &ParticleEnsemble<M>) -> f64 {
    let mut j = [0.0; M];
    for v in &ens.v {
        j = add(&j, v);
    }
    norm(&j) / ens.len() as f64
}
