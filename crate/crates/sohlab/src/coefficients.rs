//! Von Mises-Fisher equilibrium quantities and the macroscopic closure
//! coefficients `c1`, `c2`, `c3`.
//!
//! `c1` is the order parameter (first moment of the VMF distribution),
//! `c2` comes from the generalized collision invariant, obtained by
//! solving the weighted elliptic two-point problem `L* g = sin(theta)`
//! on `(0, pi)`, and `c3 = eta0 * k * ((m - 1) d + c2)` where `k` is the
//! second moment of the interaction kernel.
//!
//! All exponentials are evaluated as `exp((cos(theta) - 1)/d)` so that
//! small-noise parameters (`d` down to 1e-3) do not overflow; every
//! quantity below is a ratio in which the scaling cancels.

use crate::quad::{gauss_legendre, integrate_gauss, integrate_trapezoid, trapezoid_samples};
use std::f64::consts::PI;
use std::sync::OnceLock;
use thiserror::Error;

pub const DEFAULT_GAUSS_NODES: usize = 512;

/// Default Gauss rule on `[0, pi]`, computed once (node generation is
/// the expensive part and every polar integral reuses this rule).
fn gauss_rule_0_pi() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(DEFAULT_GAUSS_NODES, 0.0, PI))
}

fn integrate_gauss_0_pi<F: Fn(f64) -> f64>(f: F) -> f64 {
    let (x, w) = gauss_rule_0_pi();
    x.iter().zip(w).map(|(&xi, &wi)| wi * f(xi)).sum()
}

#[derive(Debug, Error)]
pub enum CoeffError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("degenerate GCI solution: denominator {0:e} below threshold")]
    Degenerate(f64),
}

fn check_dimension(m: usize) -> Result<(), CoeffError> {
    if m == 2 || m == 3 {
        Ok(())
    } else {
        Err(CoeffError::Domain(format!("dimension m={m} not supported (m must be 2 or 3)")))
    }
}

fn check_noise(d: f64) -> Result<(), CoeffError> {
    if d > 0.0 && d.is_finite() {
        Ok(())
    } else {
        Err(CoeffError::Domain(format!("noise intensity d={d} must be positive and finite")))
    }
}

/// Surface measure of the unit sphere `S^{n-1}` in `R^n`
/// (`|S^0| = 2`, `|S^1| = 2 pi`, `|S^2| = 4 pi`).
pub fn sphere_surface(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("sphere_surface only needed for n <= 3"),
    }
}

/// Parameters of a von Mises-Fisher distribution on `S^{m-1}`.
#[derive(Debug, Clone)]
pub struct VmfParams {
    pub d: f64,
    pub m: usize,
    pub u: Vec<f64>,
}

impl VmfParams {
    pub fn new(d: f64, m: usize, u: Vec<f64>) -> Result<Self, CoeffError> {
        check_noise(d)?;
        check_dimension(m)?;
        if u.len() != m {
            return Err(CoeffError::Domain(format!(
                "direction has {} components, expected {m}",
                u.len()
            )));
        }
        let n: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-12 {
            return Err(CoeffError::Domain(format!("VMF direction norm {n} differs from 1")));
        }
        Ok(Self { d, m, u })
    }
}

/// Normalization of the scaled density `exp((u.v - 1)/d)` on `S^{m-1}`.
fn zd_scaled(d: f64, m: usize) -> f64 {
    let w = |t: f64| ((t.cos() - 1.0) / d).exp() * t.sin().powi(m as i32 - 2);
    sphere_surface(m - 1) * integrate_gauss_0_pi(w)
}

/// VMF probability density `Z_d^{-1} exp((u.v)/d)` at the unit vector `v`.
pub fn vmf_pdf(p: &VmfParams, v: &[f64]) -> Result<f64, CoeffError> {
    if v.len() != p.m {
        return Err(CoeffError::Domain(format!(
            "evaluation point has {} components, expected {}",
            v.len(),
            p.m
        )));
    }
    let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (n - 1.0).abs() > 1e-12 {
        return Err(CoeffError::Domain(format!("evaluation point norm {n} differs from 1")));
    }
    let c: f64 = p.u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok(((c - 1.0) / p.d).exp() / zd_scaled(p.d, p.m))
}

/// Order parameter `c1(d)`: magnitude of the VMF first moment.
///
/// Strictly decreasing in `d`, with `c1 -> 1` as `d -> 0` and
/// `c1 -> 0` as `d -> infinity`.
pub fn order_parameter_c1(d: f64, m: usize) -> Result<f64, CoeffError> {
    check_noise(d)?;
    check_dimension(m)?;
    Ok(c1_with_rule(d, m, DEFAULT_GAUSS_NODES))
}

fn c1_with_rule(d: f64, m: usize, nodes: usize) -> f64 {
    let w = |t: f64| ((t.cos() - 1.0) / d).exp() * t.sin().powi(m as i32 - 2);
    if nodes == DEFAULT_GAUSS_NODES {
        let num = integrate_gauss_0_pi(|t| w(t) * t.cos());
        let den = integrate_gauss_0_pi(&w);
        return num / den;
    }
    let num = integrate_gauss(|t| w(t) * t.cos(), 0.0, PI, nodes);
    let den = integrate_gauss(&w, 0.0, PI, nodes);
    num / den
}

/// Trapezoid cross-check of `c1` (independent quadrature route).
pub fn order_parameter_c1_trapezoid(d: f64, m: usize, intervals: usize) -> Result<f64, CoeffError> {
    check_noise(d)?;
    check_dimension(m)?;
    let w = |t: f64| ((t.cos() - 1.0) / d).exp() * t.sin().powi(m as i32 - 2);
    let num = integrate_trapezoid(|t| w(t) * t.cos(), 0.0, PI, intervals);
    let den = integrate_trapezoid(&w, 0.0, PI, intervals);
    Ok(num / den)
}

/// Discrete solution of the GCI two-point boundary value problem.
///
/// `theta_grid` holds the `n_theta` interior nodes of a uniform grid on
/// `(0, pi)`; the homogeneous Dirichlet values `g(0) = g(pi) = 0` sit
/// just outside the stored grid. `h = g / sin(theta)` is only evaluated
/// at interior nodes.
#[derive(Debug, Clone)]
pub struct GciSolution {
    pub d: f64,
    pub m: usize,
    pub theta_grid: Vec<f64>,
    pub g_values: Vec<f64>,
    pub h_values: Vec<f64>,
    /// Row-scaled max-norm residual of the solved linear system
    /// (machine-level regardless of grid resolution).
    pub residual: f64,
}

/// Coefficient rows of the second-order discretization of
/// `L* g = -(1/w) (w g')' + (m-2)/sin^2(theta) g` with
/// `w(theta) = sin^{m-2}(theta) exp(cos(theta)/d)` (evaluated in scaled
/// form; the row is divided by `w_i` so the scaling cancels).
fn gci_rows(d: f64, m: usize, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let h = PI / (n + 1) as f64;
    // Ratio w(t + dt) / w(t), evaluated without forming w itself so that
    // small d (steep exponential weight) cannot underflow.
    let ratio = |t: f64, dt: f64| {
        let s = if m > 2 { ((t + dt).sin() / t.sin()).powi(m as i32 - 2) } else { 1.0 };
        s * (((t + dt).cos() - t.cos()) / d).exp()
    };
    let theta: Vec<f64> = (1..=n).map(|i| i as f64 * h).collect();
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for (i, &t) in theta.iter().enumerate() {
        let rp = ratio(t, 0.5 * h);
        let rm = ratio(t, -0.5 * h);
        lower[i] = -rm / (h * h);
        upper[i] = -rp / (h * h);
        diag[i] = (rp + rm) / (h * h);
        if m > 2 {
            diag[i] += (m - 2) as f64 / (t.sin() * t.sin());
        }
        rhs[i] = t.sin();
    }
    (theta, lower, diag, upper, rhs)
}

/// Thomas algorithm for a tridiagonal system; fails on a vanishing pivot.
fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>, CoeffError> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot.abs() < 1e-300 {
        return Err(CoeffError::Solver("zero pivot in tridiagonal solve".into()));
    }
    c[0] = upper[0] / pivot;
    x[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i] * c[i - 1];
        if pivot.abs() < 1e-300 {
            return Err(CoeffError::Solver(format!(
                "near-singular system at row {i}: pivot {pivot:e}"
            )));
        }
        c[i] = upper[i] / pivot;
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// Solves the GCI elliptic problem `L* g = sin(theta)` with homogeneous
/// Dirichlet conditions by second-order central finite differences.
pub fn solve_gci(d: f64, m: usize, n_theta: usize) -> Result<GciSolution, CoeffError> {
    check_noise(d)?;
    check_dimension(m)?;
    if n_theta < 64 {
        return Err(CoeffError::Domain(format!("n_theta={n_theta} below minimum 64")));
    }
    let (theta, lower, diag, upper, rhs) = gci_rows(d, m, n_theta);
    let g = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    let mut residual = 0.0f64;
    for i in 0..n_theta {
        let left = if i > 0 { lower[i] * g[i - 1] } else { 0.0 };
        let right = if i + 1 < n_theta { upper[i] * g[i + 1] } else { 0.0 };
        // Rows scale like 1/h^2, so normalize by the row magnitude to get
        // a grid-independent (relative) residual.
        let scale = lower[i].abs() + diag[i].abs() + upper[i].abs();
        residual = residual.max((left + diag[i] * g[i] + right - rhs[i]).abs() / scale);
    }
    let h_values: Vec<f64> = theta.iter().zip(&g).map(|(&t, &gi)| gi / t.sin()).collect();
    Ok(GciSolution { d, m, theta_grid: theta, g_values: g, h_values, residual })
}

/// Truncation residual of the discrete operator applied to an exact
/// solution sampled on the interior grid; used to measure the order of
/// the discretization.
pub fn gci_truncation_residual<F: Fn(f64) -> f64>(
    d: f64,
    m: usize,
    n_theta: usize,
    exact: F,
) -> f64 {
    let (theta, lower, diag, upper, rhs) = gci_rows(d, m, n_theta);
    let g: Vec<f64> = theta.iter().map(|&t| exact(t)).collect();
    let n = theta.len();
    let mut res = 0.0f64;
    for i in 0..n {
        let left = if i > 0 { lower[i] * g[i - 1] } else { 0.0 };
        let right = if i + 1 < n { upper[i] * g[i + 1] } else { 0.0 };
        res = res.max((left + diag[i] * g[i] + right - rhs[i]).abs());
    }
    res
}

/// Coefficient `c2`: ratio of the two weighted moments of `h(cos theta)`
/// over `(0, pi)`, evaluated by the trapezoid rule on the GCI grid.
///
/// The integrands `cos(theta) h e^{cos/d} sin^m` and `h e^{cos/d} sin^m`
/// vanish (with vanishing derivative) at both endpoints, so the
/// trapezoid rule converges at fourth order here.
pub fn coefficient_c2(gci: &GciSolution) -> Result<f64, CoeffError> {
    let h = PI / (gci.theta_grid.len() + 1) as f64;
    let mut num = vec![0.0];
    let mut den = vec![0.0];
    for (&t, &g) in gci.theta_grid.iter().zip(&gci.g_values) {
        // h(cos t) sin^m t = g(t) sin^{m-1} t
        let f = g * t.sin().powi(gci.m as i32 - 1) * ((t.cos() - 1.0) / gci.d).exp();
        num.push(t.cos() * f);
        den.push(f);
    }
    num.push(0.0);
    den.push(0.0);
    let den_val = trapezoid_samples(&den, h);
    if den_val.abs() < 1e-14 {
        return Err(CoeffError::Degenerate(den_val.abs()));
    }
    Ok(trapezoid_samples(&num, h) / den_val)
}

/// Coefficient `c3 = eta0 * k * ((m - 1) d + c2)`.
pub fn coefficient_c3(eta0: f64, k: f64, d: f64, c2: f64, m: usize) -> Result<f64, CoeffError> {
    check_dimension(m)?;
    check_noise(d)?;
    for (name, v) in [("eta0", eta0), ("k", k), ("c2", c2)] {
        if !v.is_finite() {
            return Err(CoeffError::Domain(format!("{name}={v} is not finite")));
        }
    }
    if eta0 < 0.0 {
        return Err(CoeffError::Domain(format!("eta0={eta0} must be nonnegative")));
    }
    if k <= 0.0 {
        return Err(CoeffError::Domain(format!("kernel moment k={k} must be positive")));
    }
    Ok(eta0 * k * ((m - 1) as f64 * d + c2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// Indicator of the ball of radius `radius_scale`.
    Indicator,
    /// Gaussian `exp(-r^2 / (2 radius_scale^2))`.
    Gaussian,
}

/// Isotropic interaction kernel, normalized internally to unit integral.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub kind: KernelKind,
    pub radius_scale: f64,
    pub m: usize,
}

impl Kernel {
    pub fn new(kind: KernelKind, radius_scale: f64, m: usize) -> Result<Self, CoeffError> {
        check_dimension(m)?;
        if radius_scale <= 0.0 || !radius_scale.is_finite() {
            return Err(CoeffError::Domain(format!(
                "kernel radius_scale={radius_scale} must be positive and finite"
            )));
        }
        Ok(Self { kind, radius_scale, m })
    }

    fn profile(&self, r: f64) -> f64 {
        match self.kind {
            KernelKind::Indicator => {
                if r <= self.radius_scale {
                    1.0
                } else {
                    0.0
                }
            }
            KernelKind::Gaussian => (-r * r / (2.0 * self.radius_scale * self.radius_scale)).exp(),
        }
    }

    fn support(&self) -> f64 {
        match self.kind {
            KernelKind::Indicator => self.radius_scale,
            // The Gaussian tail beyond 12 sigma is below 1e-31.
            KernelKind::Gaussian => 12.0 * self.radius_scale,
        }
    }

    fn radial_moment(&self, power: i32) -> f64 {
        integrate_gauss(
            |r| self.profile(r) * r.powi(power),
            0.0,
            self.support(),
            DEFAULT_GAUSS_NODES,
        )
    }

    /// Integral of the normalized kernel over `R^m`, re-evaluated with an
    /// independent trapezoid rule (should be 1).
    pub fn normalized_integral(&self) -> f64 {
        let mass = self.radial_moment(self.m as i32 - 1);
        let check = integrate_trapezoid(
            |r| self.profile(r) * r.powi(self.m as i32 - 1),
            0.0,
            self.support(),
            1_000_000,
        );
        check / mass
    }
}

/// Second moment `k = (1/2m) int K(|xi|) |xi|^2 dxi` of the normalized kernel.
pub fn kernel_moment_k(kernel: &Kernel) -> Result<f64, CoeffError> {
    let m = kernel.m as i32;
    let mass = kernel.radial_moment(m - 1);
    if mass <= 0.0 || !mass.is_finite() {
        return Err(CoeffError::Domain("kernel is not normalizable".into()));
    }
    let second = kernel.radial_moment(m + 1);
    Ok(second / mass / (2.0 * kernel.m as f64))
}

/// The SOH closure constants for one `(d, m)` pair.
#[derive(Debug, Clone, Copy)]
pub struct CoefficientSet {
    pub d: f64,
    pub m: usize,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub eta0: f64,
    pub k: f64,
}

/// Computes the full coefficient set; also returns the GCI solver residual.
pub fn compute_coefficient_set(
    d: f64,
    m: usize,
    n_theta: usize,
    eta0: f64,
    kernel: &Kernel,
) -> Result<(CoefficientSet, f64), CoeffError> {
    let c1 = order_parameter_c1(d, m)?;
    let gci = solve_gci(d, m, n_theta)?;
    let c2 = coefficient_c2(&gci)?;
    let k = kernel_moment_k(kernel)?;
    let c3 = coefficient_c3(eta0, k, d, c2, m)?;
    Ok((CoefficientSet { d, m, c1, c2, c3, eta0, k }, gci.residual))
}

impl CoefficientSet {
    /// Inviscid set (`eta0 = 0`, so `c3 = 0`) with a unit-ball indicator kernel.
    pub fn inviscid(d: f64, m: usize, n_theta: usize) -> Result<Self, CoeffError> {
        let kernel = Kernel::new(KernelKind::Indicator, 1.0, m)?;
        let (set, _) = compute_coefficient_set(d, m, n_theta, 0.0, &kernel)?;
        Ok(set)
    }
}
