//! Acceptance gate: one test per criterion, each printing a single
//! pass/fail line (visible with `-- --nocapture`); the assertions
//! enforce the same conditions with pinned tolerances.

use sohlab::coefficients::{kernel_moment_k, solve_gci, CoefficientSet, Kernel, KernelKind};
use sohlab::config::parse_config;
use sohlab::particles::{
    empirical_fields, global_order_parameter, step_continuous, NoiseModel, ParticleEnsemble,
    ParticleParams,
};
use sohlab::rngstream::CounterRng;
use sohlab::scenarios::{
    compare_fields, count_mask, milling_max_residual, MillingParams, RiemannSpec,
};
use sohlab::soh::{
    characteristic_speeds, nonconservative_run, soh_run, soh_step, SohFields, SohGrid,
    SohSolverConfig,
};

use rand::Rng;
use std::f64::consts::PI;

fn report(criterion: u32, description: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} — {description} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {description} ({detail})");
}

const D_GRID: [f64; 8] = [0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0];

#[test]
fn criterion_01_coefficient_monotonicity_and_bounds() {
    let mut pass = true;
    let mut detail = String::new();
    for m in [2usize, 3] {
        let mut prev_c1 = f64::INFINITY;
        for &d in &D_GRID {
            let set = CoefficientSet::inviscid(d, m, 1024).unwrap();
            let ok = set.c1 >= 0.0
                && set.c1 <= 1.0
                && set.c1 < prev_c1
                && set.c2 > 0.0
                && set.c2 <= set.c1;
            if !ok {
                pass = false;
                detail = format!("violation at d={d} m={m}: c1={} c2={}", set.c1, set.c2);
            }
            prev_c1 = set.c1;
        }
    }
    if detail.is_empty() {
        detail = "c1 strictly decreasing, 0<=c1<=1, 0<c2<=c1 on 8x2 grid".into();
    }
    report(1, "coefficient monotonicity and bounds", pass, &detail);
}

/// Independent closed-form GCI solution for m = 2:
/// g(theta) = d*theta - (d*pi / I(pi)) * I(theta),
/// I(t) = integral_0^t exp((1 - cos phi)/d) dphi,
/// evaluated by composite trapezoid with 64 subintervals per grid cell.
fn closed_form_g(d: f64, nodes: &[f64]) -> Vec<f64> {
    let sub = 64usize;
    let mut out = Vec::with_capacity(nodes.len());
    let mut acc = 0.0;
    let mut prev_t = 0.0;
    let f = |t: f64| ((1.0 - t.cos()) / d).exp();
    let mut cumulative = Vec::with_capacity(nodes.len() + 1);
    for &t in nodes.iter().chain(std::iter::once(&PI)) {
        let h = (t - prev_t) / sub as f64;
        for i in 0..sub {
            let a = prev_t + i as f64 * h;
            acc += 0.5 * (f(a) + f(a + h)) * h;
        }
        cumulative.push(acc);
        prev_t = t;
    }
    let total = *cumulative.last().unwrap();
    for (i, &t) in nodes.iter().enumerate() {
        out.push(d * t - d * PI / total * cumulative[i]);
    }
    out
}

#[test]
fn criterion_02_gci_oracle_equivalence() {
    let mut pass = true;
    let mut detail = String::new();
    for &d in &[0.2, 1.0, 5.0] {
        let sol = solve_gci(d, 2, 2048).unwrap();
        let oracle = closed_form_g(d, &sol.theta_grid);
        let err: f64 = sol
            .g_values
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if err > 1e-6 {
            pass = false;
            detail = format!("max-norm {err:.2e} at d={d}");
        }
        // Convergence order against the closed form.
        let mut errs = Vec::new();
        for n in [256usize, 512] {
            let s = solve_gci(d, 2, n).unwrap();
            let o = closed_form_g(d, &s.theta_grid);
            errs.push(
                s.g_values
                    .iter()
                    .zip(&o)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
            );
        }
        let order = (errs[0] / errs[1]).log2();
        if order < 1.9 {
            pass = false;
            detail = format!("order {order:.3} at d={d}");
        }
    }
    if detail.is_empty() {
        detail = "max-norm <= 1e-6 at n=2048; order >= 1.9".into();
    }
    report(2, "GCI solver matches closed form (m=2)", pass, &detail);
}

#[test]
fn criterion_03_kernel_moments() {
    let k2 = kernel_moment_k(&Kernel::new(KernelKind::Indicator, 1.0, 2).unwrap()).unwrap();
    let k3 = kernel_moment_k(&Kernel::new(KernelKind::Indicator, 1.0, 3).unwrap()).unwrap();
    let e2 = (k2 - 0.125).abs();
    let e3 = (k3 - 0.1).abs();
    let pass = e2 < 1e-10 && e3 < 1e-10;
    report(
        3,
        "indicator-ball kernel moments 1/8 and 1/10",
        pass,
        &format!("errors {e2:.2e}, {e3:.2e}"),
    );
}

#[test]
fn criterion_04_characteristic_speed_identities() {
    let mut pass = true;
    let mut detail = String::new();
    let mut rng = CounterRng::for_purpose(99, 4);
    for _ in 0..1000 {
        let c1 = rng.gen::<f64>();
        let c2 = rng.gen::<f64>();
        let d = rng.gen::<f64>() * 3.0 + 0.01;
        let s = rng.gen::<f64>() * 2.0 - 1.0;
        let w = characteristic_speeds(c1, c2, d, s, true);
        if w.lambda_zero != c1 * s {
            pass = false;
            detail = format!("lambda0 != c1*s at c1={c1} s={s}");
        }
        // s = 0: lambda_pm = +-sqrt(d)
        let w0 = characteristic_speeds(c1, c2, d, 0.0, false);
        if (w0.lambda_plus - d.sqrt()).abs() > 1e-14
            || (w0.lambda_minus + d.sqrt()).abs() > 1e-14
        {
            pass = false;
            detail = format!("normal-incidence speeds wrong at d={d}");
        }
        // s = +-1: {lambda-, lambda+} = {c1, c2} up to ordering, sign s.
        for s1 in [1.0, -1.0] {
            let w1 = characteristic_speeds(c1, c2, d, s1, false);
            let mut got = [w1.lambda_minus, w1.lambda_plus];
            let mut want = [c1 * s1, c2 * s1];
            got.sort_by(|a, b| a.partial_cmp(b).unwrap());
            want.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if (got[0] - want[0]).abs() > 1e-14 || (got[1] - want[1]).abs() > 1e-14 {
                pass = false;
                detail = format!("grazing speeds wrong at c1={c1} c2={c2} s={s1}");
            }
        }
    }
    if detail.is_empty() {
        detail = "10^3 random samples exact to 1e-14".into();
    }
    report(4, "characteristic-speed identities", pass, &detail);
}

#[test]
fn criterion_05_soh_conservation_suite() {
    let grid = SohGrid::new_2d(64, 64, 8.0, 8.0).unwrap();
    let mut f = SohFields::uniform(grid.clone(), 1.0, [1.0, 0.0]).unwrap();
    let mut rng = CounterRng::for_purpose(5, 5);
    for i in 0..f.rho.len() {
        f.rho[i] = 1.0 + 0.4 * (rng.gen::<f64>() - 0.5);
        let phi = rng.gen::<f64>() * std::f64::consts::TAU;
        f.u[i] = [phi.cos(), phi.sin()];
    }
    let coeffs = CoefficientSet::inviscid(0.5, 2, 512).unwrap();
    let solver = SohSolverConfig::new(coeffs, 0.5).unwrap();
    let m0 = f.total_mass();
    let mut state = f;
    let mut max_drift = 0.0f64;
    for _ in 0..10_000 {
        let (next, _) = soh_step(&state, &solver).unwrap();
        state = next;
        max_drift = max_drift.max(state.max_unit_drift());
    }
    let mass_err = ((state.total_mass() - m0) / m0).abs();

    // Uniform states are exact fixed points.
    let uni = SohFields::uniform(grid, 2.0, [0.6, 0.8]).unwrap();
    let (next, _) = soh_step(&uni, &solver).unwrap();
    let fixed = next
        .rho
        .iter()
        .zip(&uni.rho)
        .all(|(a, b)| (a - b).abs() < 1e-13)
        && next
            .u
            .iter()
            .zip(&uni.u)
            .all(|(a, b)| (a[0] - b[0]).abs() < 1e-13 && (a[1] - b[1]).abs() < 1e-13);

    let pass = mass_err < 1e-10 && max_drift < 1e-12 && fixed;
    report(
        5,
        "SOH conservation/constraint suite (64x64, 10^4 steps)",
        pass,
        &format!("mass rel err {mass_err:.2e}, max |u| drift {max_drift:.2e}, uniform fixed point {fixed}"),
    );
}

#[test]
fn criterion_06_milling_residual_order() {
    let mut pass = true;
    let mut details = Vec::new();
    // Convex (c2/d > 1) and concave (c2/d < 1) profiles.
    for (c2, d) in [(0.8, 0.4), (0.3, 0.9)] {
        let p = MillingParams { rho0: 1.0, r0: 1.0, c2, d };
        let mut res = Vec::new();
        let mut h = 4e-2;
        for _ in 0..3 {
            let (mass, mom) = milling_max_residual(&p, 0.9, 0.5, 2.0, 48, h).unwrap();
            res.push(mass.max(mom));
            h *= 0.5;
        }
        for w in res.windows(2) {
            let order = (w[0] / w[1]).log2();
            if !(1.7..=2.3).contains(&order) {
                pass = false;
            }
            details.push(format!("{order:.2}"));
        }
    }
    report(
        6,
        "milling residual refinement order in [1.7, 2.3], convex and concave",
        pass,
        &format!("orders {}", details.join(", ")),
    );
}

#[test]
fn criterion_07_microscopic_equilibrium() {
    let d = 0.5;
    let nu = 1.0;
    let n = 10_000usize;
    let p = ParticleParams::<2> {
        n,
        c: 1.0,
        nu,
        noise_d: d * nu,
        r: 0.05,
        dt: 0.01,
        box_len: [1.0, 1.0],
        noise_model: NoiseModel::Brownian,
        seed: 2024,
    };
    let mut ens = ParticleEnsemble::uniform_aligned(n, &p.box_len, [1.0, 0.0], p.seed).unwrap();
    // Equilibrate T = 5, then average T = 10 in 5 blocks of T = 2.
    for _ in 0..500 {
        step_continuous(&mut ens, &p).unwrap();
    }
    let blocks = 5usize;
    let per_block = 200usize;
    let mut block_means = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        let mut acc = 0.0;
        for _ in 0..per_block {
            step_continuous(&mut ens, &p).unwrap();
            acc += global_order_parameter(&ens);
        }
        block_means.push(acc / per_block as f64);
    }
    let mean: f64 = block_means.iter().sum::<f64>() / blocks as f64;
    let var: f64 =
        block_means.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (blocks - 1) as f64;
    let se_time = (var / blocks as f64).sqrt();
    let c1 = sohlab::coefficients::order_parameter_c1(d, 2).unwrap();
    // Combined standard error: blocked time-series error plus the
    // finite-sample fluctuation of the order parameter of n VMF draws.
    let se_sample = ((1.0 - c1 * c1) / n as f64).sqrt();
    let se = (se_time * se_time + se_sample * se_sample).sqrt();
    let dev = (mean - c1).abs();
    let pass = dev <= 3.0 * se;
    report(
        7,
        "microscopic equilibrium order parameter matches c1(0.5)",
        pass,
        &format!("mean {mean:.4} vs c1 {c1:.4}, dev {dev:.4}, 3se {:.4}", 3.0 * se),
    );
}

struct RiemannSetup {
    spec: RiemannSpec,
    grid: SohGrid,
    solver: SohSolverConfig,
    box_len: [f64; 2],
    t_end: f64,
}

fn riemann_setup() -> RiemannSetup {
    let d = 0.3;
    // Flat density with a 1.25 rad orientation contrast: the 200-cell SOH
    // solution is well resolved there (unlike shock-dominated data, where
    // Rusanov diffusion at this resolution dominates any particle error),
    // while the contrast is still large enough that the non-conservative
    // scheme lands visibly wrong (criterion 9).
    let spec = RiemannSpec {
        rho_left: 1.0,
        u_left: [1.0, 0.0],
        rho_right: 1.0,
        u_right: [(1.25f64).cos(), (1.25f64).sin()],
        interface: 0.5,
    };
    let coeffs = CoefficientSet::inviscid(d, 2, 1024).unwrap();
    let grid = SohGrid::new_1d(200, 20.0).unwrap();
    let solver = SohSolverConfig::new(coeffs, 0.5).unwrap();
    // A wide transverse box keeps the particle ensemble from organizing
    // into clusters that the 1D macroscopic fields cannot represent.
    RiemannSetup { spec, grid, solver, box_len: [20.0, 5.0], t_end: 30.0 }
}

fn riemann_particle_l1(setup: &RiemannSetup, n: usize, seed: u64) -> (f64, f64, SohFields<2>) {
    let d = setup.solver.coeffs.d;
    let nu = 5.0;
    let (mut ens, mpp) = setup.spec.particles(n, setup.box_len, d, seed).unwrap();
    let p = ParticleParams::<2> {
        n,
        c: 1.0,
        nu,
        noise_d: d * nu,
        r: 0.05,
        dt: 0.02,
        box_len: setup.box_len,
        noise_model: NoiseModel::Brownian,
        seed,
    };
    let steps = (setup.t_end / p.dt).round() as usize;
    for _ in 0..steps {
        step_continuous(&mut ens, &p).unwrap();
    }
    let soh0 = setup.spec.fields(&setup.grid).unwrap();
    let soh = soh_run(&soh0, &setup.solver, setup.t_end, 0.0).unwrap().pop().unwrap();
    let emp = empirical_fields(&ens, &setup.box_len, &setup.grid, mpp).unwrap();
    let mask = count_mask(&emp.counts, 20);
    let rep = compare_fields(&soh, &emp.fields, Some(&mask)).unwrap();
    (rep.l1_rho, rep.l1_u, soh)
}

#[test]
fn criterion_08_and_09_riemann_particle_vs_soh() {
    let setup = riemann_setup();
    let (l1_rho, l1_u, soh) = riemann_particle_l1(&setup, 100_000, 11);
    let pass8a = l1_rho <= 0.15 && l1_u <= 0.2;
    // Consistency: halving the particle count at most doubles l1_rho.
    let (l1_rho_half, _, _) = riemann_particle_l1(&setup, 50_000, 12);
    let pass8b = l1_rho_half <= 2.0 * l1_rho;
    report(
        8,
        "Riemann particle-vs-SOH agreement at t=30",
        pass8a && pass8b,
        &format!("l1_rho {l1_rho:.4} (half-n {l1_rho_half:.4}), l1_u {l1_u:.4}"),
    );

    // Criterion 9: a naive non-conservative discretization lands farther
    // from the relaxation solution than the particle reference does.
    let soh0 = setup.spec.fields(&setup.grid).unwrap();
    let ncons = nonconservative_run(&soh0, &setup.solver, setup.t_end).unwrap();
    let d_nc = compare_fields(&soh, &ncons, None).unwrap();
    let pass9 = d_nc.l1_rho > l1_rho;
    report(
        9,
        "non-conservative scheme differs more than the particle reference",
        pass9,
        &format!("|relax - ncons| l1_rho {:.4} vs |relax - particles| {l1_rho:.4}", d_nc.l1_rho),
    );
}

#[test]
fn criterion_10_determinism() {
    let dir = std::env::temp_dir().join(format!("sohlab-acc10-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    let text = format!(
        "command = riemann-compare\nseed = 3\ndeterministic = true\noutput_dir = {}\nd = 0.3\nn = 5000\nr = 0.2\ndt = 0.05\nbox_x = 4.0\nt_end = 0.5\ncells = 16\nn_theta = 128\nnu = 2.0\n[riemann]\nrho_left = 2.0\nu_right_angle = 1.0\n",
        dir.display()
    );
    let cfg = parse_config(&text, &[]).unwrap();
    let files = sohlab::commands::run(&cfg).unwrap();
    let snapshot: Vec<(String, Vec<u8>)> = files
        .iter()
        .map(|f| (f.clone(), std::fs::read(dir.join(f)).unwrap()))
        .collect();
    let files2 = sohlab::commands::run(&cfg).unwrap();
    assert_eq!(files, files2);
    let pass = snapshot
        .iter()
        .all(|(f, bytes)| &std::fs::read(dir.join(f)).unwrap() == bytes);
    let _ = std::fs::remove_dir_all(&dir);
    report(
        10,
        "rerun with identical config and seed is byte-identical",
        pass,
        &format!("{} files compared", snapshot.len()),
    );
}
