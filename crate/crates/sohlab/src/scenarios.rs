//! Scenario builders and comparison metrics: uniform flocks, Riemann
//! (shock-tube) data for both the particle and continuum descriptions,
//! analytic milling solutions, von Mises-Fisher velocity sampling, and
//! L1 discrepancy metrics between two field snapshots.

use crate::particles::ParticleEnsemble;
use crate::rngstream::CounterRng;
use crate::soh::{SohFields, SohGrid};
use crate::vector::{angle_between, norm, normalized};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

// ---------------------------------------------------------------------
// Milling

/// Parameters of the stationary mill: a vortex `u = x_perp / |x|` with
/// the power-law density `rho = rho0 (r / r0)^(c2/d)`.
#[derive(Debug, Clone, Copy)]
pub struct MillingParams {
    pub rho0: f64,
    pub r0: f64,
    pub c2: f64,
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileShape {
    /// `c2/d > 1`: density vanishes super-linearly at the center.
    Convex,
    /// `c2/d = 1`: linear profile.
    Linear,
    /// `c2/d < 1`: density has a cusp-like (concave) profile.
    Concave,
}

impl MillingParams {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        for (name, v) in [("rho0", self.rho0), ("r0", self.r0), ("c2", self.c2), ("d", self.d)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ScenarioError::Domain(format!("{name}={v} must be positive")));
            }
        }
        Ok(())
    }

    /// Exponent of the power-law density profile.
    pub fn exponent(&self) -> f64 {
        self.c2 / self.d
    }

    pub fn profile_shape(&self) -> ProfileShape {
        let e = self.exponent();
        if (e - 1.0).abs() < 1e-12 {
            ProfileShape::Linear
        } else if e > 1.0 {
            ProfileShape::Convex
        } else {
            ProfileShape::Concave
        }
    }

    /// Density and orientation at `x` (coordinates centered on the mill
    /// axis). The origin is excluded: the orientation is undefined there.
    pub fn evaluate(&self, x: &[f64; 2]) -> Result<(f64, [f64; 2]), ScenarioError> {
        self.validate()?;
        let r = norm(x);
        if r < 1e-12 {
            return Err(ScenarioError::Domain(
                "milling solution is singular at the vortex center".into(),
            ));
        }
        let rho = self.rho0 * (r / self.r0).powf(self.exponent());
        let u = [-x[1] / r, x[0] / r];
        Ok((rho, u))
    }
}

/// Pointwise steady-state residuals of the SOH system on the analytic
/// milling fields, discretized with central differences of step `h`:
/// `(mass, momentum)` where mass is `|div(c1 rho u)|` and momentum is
/// `|c2 rho (u.grad)u + d P_{u-perp} grad rho|`. Both vanish to O(h^2).
pub fn milling_residual(
    p: &MillingParams,
    c1: f64,
    x: &[f64; 2],
    h: f64,
) -> Result<(f64, f64), ScenarioError> {
    if !(h > 0.0) {
        return Err(ScenarioError::Domain(format!("step h={h} must be positive")));
    }
    let (rho, u) = p.evaluate(x)?;
    let mut flux_div = 0.0;
    let mut grad_rho = [0.0; 2];
    let mut advect = [0.0; 2];
    for a in 0..2 {
        let mut xp = *x;
        let mut xm = *x;
        xp[a] += h;
        xm[a] -= h;
        let (rp, up) = p.evaluate(&xp)?;
        let (rm, um) = p.evaluate(&xm)?;
        flux_div += c1 * (rp * up[a] - rm * um[a]) / (2.0 * h);
        grad_rho[a] = (rp - rm) / (2.0 * h);
        for k in 0..2 {
            advect[k] += u[a] * (up[k] - um[k]) / (2.0 * h);
        }
    }
    let udotg = u[0] * grad_rho[0] + u[1] * grad_rho[1];
    let proj = [grad_rho[0] - u[0] * udotg, grad_rho[1] - u[1] * udotg];
    let mom = [
        p.c2 * rho * advect[0] + p.d * proj[0],
        p.c2 * rho * advect[1] + p.d * proj[1],
    ];
    Ok((flux_div.abs(), norm(&mom)))
}

/// Largest residual pair over a ring of sample points in the annulus
/// `r in [r_inner, r_outer]`.
pub fn milling_max_residual(
    p: &MillingParams,
    c1: f64,
    r_inner: f64,
    r_outer: f64,
    n_samples: usize,
    h: f64,
) -> Result<(f64, f64), ScenarioError> {
    if !(r_inner > 0.0 && r_outer > r_inner) {
        return Err(ScenarioError::Domain("annulus radii must satisfy 0 < r_in < r_out".into()));
    }
    if h >= r_inner {
        return Err(ScenarioError::Domain("difference step must be smaller than r_inner".into()));
    }
    let mut worst = (0.0f64, 0.0f64);
    let rings = 8;
    for ir in 0..rings {
        let r = r_inner + (r_outer - r_inner) * ir as f64 / (rings - 1) as f64;
        for k in 0..n_samples {
            let phi = std::f64::consts::TAU * k as f64 / n_samples as f64;
            let x = [r * phi.cos(), r * phi.sin()];
            let (m, q) = milling_residual(p, c1, &x, h)?;
            worst.0 = worst.0.max(m);
            worst.1 = worst.1.max(q);
        }
    }
    Ok(worst)
}

/// Milling fields sampled on a 2D grid centered on the box midpoint.
/// Cells closer than `h = dx` to the vortex center would be singular;
/// the grid resolution must keep all cell centers away from it.
pub fn milling_fields(
    p: &MillingParams,
    grid: &SohGrid,
) -> Result<SohFields<2>, ScenarioError> {
    if grid.dims != 2 {
        return Err(ScenarioError::GridMismatch("milling fields require a 2D grid".into()));
    }
    let cx = 0.5 * grid.box_len[0];
    let cy = 0.5 * grid.box_len[1];
    let n = grid.n_cells();
    let mut rho = vec![0.0; n];
    let mut u = vec![[0.0; 2]; n];
    for j in 0..grid.cells[1] {
        for i in 0..grid.cells[0] {
            let x = [grid.center(0, i) - cx, grid.center(1, j) - cy];
            let (r, dir) = p.evaluate(&x)?;
            let idx = grid.index(i, j);
            rho[idx] = r;
            u[idx] = dir;
        }
    }
    Ok(SohFields { grid: grid.clone(), rho, u, t: 0.0 })
}

// ---------------------------------------------------------------------
// Riemann data

/// Piecewise-constant initial data: left state for `x < interface`,
/// right state otherwise, uniform in the transverse direction.
#[derive(Debug, Clone, Copy)]
pub struct RiemannSpec {
    pub rho_left: f64,
    pub u_left: [f64; 2],
    pub rho_right: f64,
    pub u_right: [f64; 2],
    /// Interface position as a fraction of the box length in `[0, 1]`.
    pub interface: f64,
}

impl RiemannSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.rho_left > 0.0 && self.rho_right > 0.0) {
            return Err(ScenarioError::Domain("densities must be positive".into()));
        }
        for u in [&self.u_left, &self.u_right] {
            if (norm(u) - 1.0).abs() > 1e-12 {
                return Err(ScenarioError::Domain("states must carry unit orientations".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.interface) {
            return Err(ScenarioError::Domain(format!(
                "interface fraction {} outside [0, 1]",
                self.interface
            )));
        }
        Ok(())
    }

    /// Continuum initial condition on a 1D grid.
    pub fn fields(&self, grid: &SohGrid) -> Result<SohFields<2>, ScenarioError> {
        self.validate()?;
        if grid.dims != 1 {
            return Err(ScenarioError::GridMismatch("riemann data require a 1D grid".into()));
        }
        let xi = self.interface * grid.box_len[0];
        let n = grid.n_cells();
        let mut rho = vec![0.0; n];
        let mut u = vec![[0.0; 2]; n];
        for i in 0..n {
            if grid.center(0, i) < xi {
                rho[i] = self.rho_left;
                u[i] = self.u_left;
            } else {
                rho[i] = self.rho_right;
                u[i] = self.u_right;
            }
        }
        Ok(SohFields { grid: grid.clone(), rho, u, t: 0.0 })
    }

    /// Particle realization of the same data in a periodic box
    /// `box_len`: `n` particles split between the halves in proportion
    /// to the densities, positions uniform within each side, velocities
    /// von Mises-Fisher around the side's orientation with spread `d`.
    /// Returns the ensemble and the mass per particle that reproduces
    /// the continuum densities on coarse-graining.
    pub fn particles(
        &self,
        n: usize,
        box_len: [f64; 2],
        d: f64,
        seed: u64,
    ) -> Result<(ParticleEnsemble<2>, f64), ScenarioError> {
        self.validate()?;
        if n == 0 {
            return Err(ScenarioError::Domain("particle count must be >= 1".into()));
        }
        let xi = self.interface * box_len[0];
        let mass_left = self.rho_left * xi * box_len[1];
        let mass_right = self.rho_right * (box_len[0] - xi) * box_len[1];
        let total = mass_left + mass_right;
        let n_left = ((mass_left / total) * n as f64).round() as usize;
        let n_left = n_left.min(n);
        let mass_per_particle = total / n as f64;

        let mut rng = CounterRng::for_purpose(seed, 2);
        let sampler_l = VmfSampler::<2>::new(d, self.u_left)?;
        let sampler_r = VmfSampler::<2>::new(d, self.u_right)?;
        let mut x = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for k in 0..n {
            let left = k < n_left;
            let (lo, hi) = if left { (0.0, xi) } else { (xi, box_len[0]) };
            x.push([
                lo + rng.gen::<f64>() * (hi - lo),
                rng.gen::<f64>() * box_len[1],
            ]);
            let sampler = if left { &sampler_l } else { &sampler_r };
            v.push(sampler.sample(&mut rng));
        }
        let ens = ParticleEnsemble::new(x, v, seed)
            .map_err(|e| ScenarioError::Domain(e.to_string()))?;
        Ok((ens, mass_per_particle))
    }
}

// ---------------------------------------------------------------------
// von Mises-Fisher sampling

/// Sampler for the von Mises-Fisher density `exp((u.v)/d)` on the circle
/// (inverse-CDF lookup table) or the 2-sphere (exact inverse CDF of the
/// polar cosine).
pub struct VmfSampler<const M: usize> {
    d: f64,
    mean: [f64; M],
    /// For M = 2: angles at equispaced CDF levels (inverse-CDF table).
    table: Vec<f64>,
}

const VMF_TABLE: usize = 10_000;

impl<const M: usize> VmfSampler<M> {
    pub fn new(d: f64, mean: [f64; M]) -> Result<Self, ScenarioError> {
        if !(M == 2 || M == 3) {
            return Err(ScenarioError::Domain(format!("dimension m={M} not supported")));
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(ScenarioError::Domain(format!("d={d} must be positive")));
        }
        if (norm(&mean) - 1.0).abs() > 1e-12 {
            return Err(ScenarioError::Domain("mean must be a unit vector".into()));
        }
        let table = if M == 2 { Self::build_circle_table(d) } else { Vec::new() };
        Ok(Self { d, mean, table })
    }

    /// Inverse CDF of the angle theta in [-pi, pi] with density
    /// proportional to exp(cos(theta)/d), tabulated at equispaced
    /// probability levels. Exponentials are scaled by exp(-1/d).
    fn build_circle_table(d: f64) -> Vec<f64> {
        let n = 4 * VMF_TABLE;
        let h = std::f64::consts::TAU / n as f64;
        // Cumulative trapezoid of the unnormalized density.
        let dens = |t: f64| ((t.cos() - 1.0) / d).exp();
        let mut cdf = Vec::with_capacity(n + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for i in 0..n {
            let a = -std::f64::consts::PI + i as f64 * h;
            acc += 0.5 * (dens(a) + dens(a + h)) * h;
            cdf.push(acc);
        }
        let total = acc;
        // Invert onto equispaced levels by a single forward sweep.
        let mut table = Vec::with_capacity(VMF_TABLE + 1);
        let mut j = 0usize;
        for k in 0..=VMF_TABLE {
            let target = total * k as f64 / VMF_TABLE as f64;
            // `target` can exceed `total` by one ulp at k = VMF_TABLE, so
            // keep the bracket inside the table and clamp the fraction.
            while j + 2 < cdf.len() && cdf[j + 1] < target {
                j += 1;
            }
            let (c0, c1) = (cdf[j], cdf[j + 1]);
            let frac =
                if c1 > c0 { ((target - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.0 };
            table.push(-std::f64::consts::PI + (j as f64 + frac) * h);
        }
        table
    }

    /// Draws a sample angle theta (deviation from the mean direction)
    /// for M = 2.
    fn sample_angle(&self, rng: &mut CounterRng) -> f64 {
        let u: f64 = rng.gen();
        let pos = u * (VMF_TABLE as f64);
        let i = (pos as usize).min(VMF_TABLE - 1);
        let frac = pos - i as f64;
        self.table[i] + frac * (self.table[i + 1] - self.table[i])
    }

    pub fn sample(&self, rng: &mut CounterRng) -> [f64; M] {
        let mut out = [0.0; M];
        match M {
            2 => {
                let theta = self.sample_angle(rng);
                let (s, c) = theta.sin_cos();
                let m = &self.mean[..];
                out[0] = c * m[0] - s * m[1];
                out[1] = s * m[0] + c * m[1];
            }
            3 => {
                // Polar cosine t has density prop. to exp(t/d) on [-1,1];
                // exact inverse CDF in the scaled form
                // t = 1 + d ln(e^(-2/d) + U (1 - e^(-2/d))).
                let u: f64 = rng.gen();
                let e = (-2.0 / self.d).exp();
                let t = (1.0 + self.d * (e + u * (1.0 - e)).ln()).clamp(-1.0, 1.0);
                let sin_t = (1.0 - t * t).max(0.0).sqrt();
                let phi = rng.gen::<f64>() * std::f64::consts::TAU;
                let m = &self.mean[..];
                // Orthonormal basis of the plane orthogonal to the mean.
                let helper: [f64; 3] =
                    if m[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
                let hd = helper[0] * m[0] + helper[1] * m[1] + helper[2] * m[2];
                let mut e1 = [helper[0] - hd * m[0], helper[1] - hd * m[1], helper[2] - hd * m[2]];
                let n1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
                for x in &mut e1 {
                    *x /= n1;
                }
                let e2 = [
                    m[1] * e1[2] - m[2] * e1[1],
                    m[2] * e1[0] - m[0] * e1[2],
                    m[0] * e1[1] - m[1] * e1[0],
                ];
                let (sp, cp) = phi.sin_cos();
                for i in 0..3 {
                    out[i] = t * m[i] + sin_t * (cp * e1[i] + sp * e2[i]);
                }
            }
            _ => unreachable!("dimension checked in VmfSampler::new"),
        }
        normalized(&out, 1e-300).expect("vmf sample is unit by construction")
    }

    /// Analytic CDF of the angular deviation, for distribution tests.
    pub fn angle_cdf(&self, theta: f64) -> f64 {
        let d = self.d;
        let dens = |t: f64| ((t.cos() - 1.0) / d).exp();
        let n = 2_000;
        let total = crate::quad::integrate_trapezoid(dens, -std::f64::consts::PI, std::f64::consts::PI, n);
        let part = crate::quad::integrate_trapezoid(dens, -std::f64::consts::PI, theta, n);
        part / total
    }
}

// ---------------------------------------------------------------------
// Comparison metrics

/// L1 discrepancies between two snapshots on the same grid.
#[derive(Debug, Clone, Copy)]
pub struct ComparisonReport {
    pub t: f64,
    /// Relative L1 density error: `sum |rho_a - rho_b| vol / sum rho_a vol`.
    pub l1_rho: f64,
    /// Mean orientation discrepancy in radians over the compared cells.
    pub l1_u: f64,
    /// Number of cells entering the orientation average.
    pub cells_compared: usize,
}

/// Compares `a` (reference) against `b`. The orientation metric is
/// averaged over cells where `mask` is true (all cells when `None`);
/// cells with a zero orientation on either side are always skipped.
pub fn compare_fields<const M: usize>(
    a: &SohFields<M>,
    b: &SohFields<M>,
    mask: Option<&[bool]>,
) -> Result<ComparisonReport, ScenarioError> {
    if a.grid != b.grid {
        return Err(ScenarioError::GridMismatch(format!(
            "grids differ: {:?} vs {:?} cells",
            &a.grid.cells[..a.grid.dims],
            &b.grid.cells[..b.grid.dims]
        )));
    }
    let n = a.grid.n_cells();
    if let Some(m) = mask {
        if m.len() != n {
            return Err(ScenarioError::GridMismatch("mask length differs from cell count".into()));
        }
    }
    let vol = a.grid.cell_volume();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut angle_sum = 0.0;
    let mut cells = 0usize;
    for i in 0..n {
        num += (a.rho[i] - b.rho[i]).abs() * vol;
        den += a.rho[i] * vol;
        let included = mask.map_or(true, |m| m[i]);
        if included && norm(&a.u[i]) > 0.5 && norm(&b.u[i]) > 0.5 {
            angle_sum += angle_between(&a.u[i], &b.u[i]);
            cells += 1;
        }
    }
    if den <= 0.0 {
        return Err(ScenarioError::Domain("reference snapshot carries no mass".into()));
    }
    Ok(ComparisonReport {
        t: b.t,
        l1_rho: num / den,
        l1_u: if cells > 0 { angle_sum / cells as f64 } else { 0.0 },
        cells_compared: cells,
    })
}

/// Mask of cells whose particle count reaches `min_count`.
pub fn count_mask(counts: &[usize], min_count: usize) -> Vec<bool> {
    counts.iter().map(|&c| c >= min_count).collect()
}
