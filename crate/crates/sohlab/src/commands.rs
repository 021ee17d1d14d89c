//! Command dispatch: runs a parsed configuration and emits CSV
//! artifacts. Every file is written atomically (temp-then-rename) and
//! recorded in `manifest.csv` together with the configuration hash, so
//! a run directory is self-describing and reruns with the same seed are
//! byte-identical.

use crate::coefficients::{compute_coefficient_set, CoefficientSet, Kernel, KernelKind};
use crate::config::{Command, RunConfig};
use crate::particles::{
    empirical_fields, step_continuous, step_discrete, NoiseModel, ParticleEnsemble,
    ParticleParams,
};
use crate::scenarios::{
    compare_fields, count_mask, milling_fields, milling_max_residual, MillingParams, RiemannSpec,
};
use crate::soh::{soh_run, SohFields, SohGrid, SohSolverConfig};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    /// Invalid or inconsistent configuration: exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// Runtime, numerical, or I/O failure: exit code 3.
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Runtime(_) => 3,
        }
    }
}

fn cfg_err(e: impl std::fmt::Display) -> RunError {
    RunError::Config(e.to_string())
}

fn run_err(e: impl std::fmt::Display) -> RunError {
    RunError::Runtime(e.to_string())
}

/// Writes `contents` to `dir/name` via a temporary file and rename, so
/// no partial file is ever visible.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(run_err)?;
    let tmp = dir.join(format!("{name}.tmp"));
    let fin = dir.join(name);
    std::fs::write(&tmp, contents).map_err(run_err)?;
    std::fs::rename(&tmp, &fin).map_err(run_err)?;
    Ok(())
}

fn fmt_f(v: f64) -> String {
    format!("{v:?}")
}

/// Runs the configured command, returning the list of files written
/// (manifest included, listed last).
pub fn run(config: &RunConfig) -> Result<Vec<String>, RunError> {
    let dir = PathBuf::from(&config.output_dir);
    let mut files: Vec<(String, String)> = match config.command {
        Command::Coeffs => run_coeffs(config)?,
        Command::Particles => run_particles(config)?,
        Command::Soh => run_soh(config)?,
        Command::RiemannCompare => run_riemann_compare(config)?,
        Command::MillCheck => run_mill_check(config)?,
    };
    let resolved = config.serialize();
    files.push(("config.txt".to_string(), resolved.clone()));

    let mut manifest = String::from("entry,value\n");
    let _ = writeln!(manifest, "version,{}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(manifest, "command,{}", config.command.name());
    let _ = writeln!(manifest, "seed,{}", config.seed);
    let _ = writeln!(manifest, "deterministic,{}", config.deterministic);
    let hash = Sha256::digest(resolved.as_bytes());
    let _ = writeln!(manifest, "config_sha256,{hash:x}");
    for (name, _) in &files {
        let _ = writeln!(manifest, "file,{name}");
    }

    let mut written = Vec::new();
    for (name, contents) in &files {
        write_atomic(&dir, name, contents)?;
        written.push(name.clone());
    }
    write_atomic(&dir, "manifest.csv", &manifest)?;
    written.push("manifest.csv".to_string());
    Ok(written)
}

fn kernel_from(config: &RunConfig, m: usize) -> Result<Kernel, RunError> {
    let kind = match config.text("kernel") {
        "indicator" => KernelKind::Indicator,
        "gaussian" => KernelKind::Gaussian,
        other => return Err(RunError::Config(format!("unknown kernel `{other}`"))),
    };
    Kernel::new(kind, config.real("kernel_radius"), m).map_err(cfg_err)
}

fn run_coeffs(config: &RunConfig) -> Result<Vec<(String, String)>, RunError> {
    let m = config.int("m") as usize;
    let n_theta = config.int("n_theta") as usize;
    let eta0 = config.real("eta0");
    let kernel = kernel_from(config, m)?;
    let mut csv = String::from("d,m,c1,c2,c3,eta0,k,n_theta,gci_residual\n");
    for &d in config.real_list("d") {
        let (set, residual) =
            compute_coefficient_set(d, m, n_theta, eta0, &kernel).map_err(run_err)?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            fmt_f(d),
            m,
            fmt_f(set.c1),
            fmt_f(set.c2),
            fmt_f(set.c3),
            fmt_f(eta0),
            fmt_f(set.k),
            n_theta,
            fmt_f(residual)
        );
    }
    Ok(vec![("coefficients.csv".to_string(), csv)])
}

fn trajectory_header(m: usize) -> String {
    let mut h = String::from("t,k");
    for i in 1..=m {
        let _ = write!(h, ",x{i}");
    }
    for i in 1..=m {
        let _ = write!(h, ",v{i}");
    }
    h.push('\n');
    h
}

fn append_trajectory<const M: usize>(csv: &mut String, ens: &ParticleEnsemble<M>) {
    for k in 0..ens.len() {
        let _ = write!(csv, "{},{k}", fmt_f(ens.t));
        for i in 0..M {
            let _ = write!(csv, ",{}", fmt_f(ens.x[k][i]));
        }
        for i in 0..M {
            let _ = write!(csv, ",{}", fmt_f(ens.v[k][i]));
        }
        csv.push('\n');
    }
}

fn particle_params<const M: usize>(
    config: &RunConfig,
    box_len: [f64; M],
) -> Result<(ParticleParams<M>, bool), RunError> {
    let discrete = config.text("model") == "discrete";
    let noise_model = if discrete {
        NoiseModel::UniformCone { d_angle: config.real("d_angle") }
    } else {
        NoiseModel::Brownian
    };
    let p = ParticleParams::<M> {
        n: config.int("n") as usize,
        c: config.real("c"),
        nu: config.real("nu"),
        noise_d: config.real("noise_d"),
        r: config.real("r"),
        dt: config.real("dt"),
        box_len,
        noise_model,
        seed: config.seed,
    };
    p.validate().map_err(cfg_err)?;
    Ok((p, discrete))
}

fn simulate_particles<const M: usize>(
    config: &RunConfig,
    box_len: [f64; M],
    direction: [f64; M],
) -> Result<String, RunError> {
    let (p, discrete) = particle_params::<M>(config, box_len)?;
    let t_end = config.real("t_end");
    let snapshot_every = config.real("snapshot_every");
    let mut ens = ParticleEnsemble::uniform_aligned(p.n, &box_len, direction, config.seed)
        .map_err(cfg_err)?;
    let mut csv = trajectory_header(M);
    append_trajectory(&mut csv, &ens);
    let steps = (t_end / p.dt).ceil() as u64;
    let mut next_snap = if snapshot_every > 0.0 { snapshot_every } else { f64::INFINITY };
    for _ in 0..steps {
        if discrete {
            step_discrete(&mut ens, &p).map_err(cfg_err)?;
        } else {
            step_continuous(&mut ens, &p).map_err(cfg_err)?;
        }
        if ens.t + 1e-12 >= next_snap && ens.t < t_end - 1e-12 {
            append_trajectory(&mut csv, &ens);
            while next_snap <= ens.t + 1e-12 {
                next_snap += snapshot_every;
            }
        }
    }
    if steps > 0 {
        append_trajectory(&mut csv, &ens);
    }
    Ok(csv)
}

fn run_particles(config: &RunConfig) -> Result<Vec<(String, String)>, RunError> {
    let m = config.int("m") as usize;
    let angle = config.real("init_angle");
    let csv = match m {
        2 => simulate_particles::<2>(
            config,
            [config.real("box_x"), config.real("box_y")],
            [angle.cos(), angle.sin()],
        )?,
        3 => simulate_particles::<3>(
            config,
            [config.real("box_x"), config.real("box_y"), config.real("box_z")],
            [angle.cos(), angle.sin(), 0.0],
        )?,
        _ => return Err(RunError::Config(format!("dimension m={m} not supported"))),
    };
    Ok(vec![("trajectory.csv".to_string(), csv)])
}

fn fields_header(dims: usize) -> String {
    match dims {
        1 => "t,i,x,rho,u1,u2\n".to_string(),
        _ => "t,i,j,x,y,rho,u1,u2\n".to_string(),
    }
}

fn append_fields(csv: &mut String, f: &SohFields<2>) {
    let g = &f.grid;
    if g.dims == 1 {
        for i in 0..g.cells[0] {
            let _ = writeln!(
                csv,
                "{},{i},{},{},{},{}",
                fmt_f(f.t),
                fmt_f(g.center(0, i)),
                fmt_f(f.rho[i]),
                fmt_f(f.u[i][0]),
                fmt_f(f.u[i][1])
            );
        }
    } else {
        for j in 0..g.cells[1] {
            for i in 0..g.cells[0] {
                let idx = g.index(i, j);
                let _ = writeln!(
                    csv,
                    "{},{i},{j},{},{},{},{},{}",
                    fmt_f(f.t),
                    fmt_f(g.center(0, i)),
                    fmt_f(g.center(1, j)),
                    fmt_f(f.rho[idx]),
                    fmt_f(f.u[idx][0]),
                    fmt_f(f.u[idx][1])
                );
            }
        }
    }
}

fn riemann_spec(config: &RunConfig) -> RiemannSpec {
    let al = config.real("riemann.u_left_angle");
    let ar = config.real("riemann.u_right_angle");
    RiemannSpec {
        rho_left: config.real("riemann.rho_left"),
        u_left: [al.cos(), al.sin()],
        rho_right: config.real("riemann.rho_right"),
        u_right: [ar.cos(), ar.sin()],
        interface: config.real("riemann.interface"),
    }
}

fn coefficient_set(config: &RunConfig, m: usize) -> Result<CoefficientSet, RunError> {
    let kernel = kernel_from(config, m)?;
    let (set, _) = compute_coefficient_set(
        config.real("d"),
        m,
        config.int("n_theta") as usize,
        config.real("eta0"),
        &kernel,
    )
    .map_err(run_err)?;
    Ok(set)
}

fn run_soh(config: &RunConfig) -> Result<Vec<(String, String)>, RunError> {
    let coeffs = coefficient_set(config, 2)?;
    let solver = SohSolverConfig::new(coeffs, config.real("cfl")).map_err(cfg_err)?;
    let cells_y = config.int("cells_y") as usize;
    let grid = if cells_y == 0 {
        SohGrid::new_1d(config.int("cells_x") as usize, config.real("box_x"))
    } else {
        SohGrid::new_2d(
            config.int("cells_x") as usize,
            cells_y,
            config.real("box_x"),
            config.real("box_y"),
        )
    }
    .map_err(cfg_err)?;
    let angle = config.real("init_angle");
    let init: SohFields<2> = match config.text("init") {
        "uniform" => SohFields::uniform(grid, config.real("rho0"), [angle.cos(), angle.sin()])
            .map_err(cfg_err)?,
        "riemann" => riemann_spec(config).fields(&grid).map_err(cfg_err)?,
        "mill" => {
            let p = MillingParams {
                rho0: config.real("rho0"),
                r0: config.real("mill.r0"),
                c2: solver.coeffs.c2,
                d: solver.coeffs.d,
            };
            milling_fields(&p, &grid).map_err(cfg_err)?
        }
        other => return Err(RunError::Config(format!("unknown init `{other}`"))),
    };
    let snaps = soh_run(&init, &solver, config.real("t_end"), config.real("snapshot_every"))
        .map_err(run_err)?;
    let mut csv = fields_header(init.grid.dims);
    for s in &snaps {
        append_fields(&mut csv, s);
    }
    Ok(vec![("fields.csv".to_string(), csv)])
}

fn run_riemann_compare(config: &RunConfig) -> Result<Vec<(String, String)>, RunError> {
    let d = config.real("d");
    let nu = config.real("nu");
    let spec = riemann_spec(config);
    let box_len = [config.real("box_x"), config.real("box_y")];
    let n = config.int("n") as usize;
    let (mut ens, mass_per_particle) =
        spec.particles(n, box_len, d, config.seed).map_err(cfg_err)?;
    let p = ParticleParams::<2> {
        n,
        c: config.real("c"),
        nu,
        noise_d: d * nu,
        r: config.real("r"),
        dt: config.real("dt"),
        box_len,
        noise_model: NoiseModel::Brownian,
        seed: config.seed,
    };
    p.validate().map_err(cfg_err)?;

    let coeffs = coefficient_set(config, 2)?;
    let solver = SohSolverConfig::new(coeffs, config.real("cfl")).map_err(cfg_err)?;
    let grid = SohGrid::new_1d(config.int("cells") as usize, box_len[0]).map_err(cfg_err)?;
    let mut soh = spec.fields(&grid).map_err(cfg_err)?;

    let t_end = config.real("t_end");
    let compare_every = config.real("compare_every");
    let min_count = config.int("min_count") as usize;

    let mut particle_csv = fields_header(1);
    let mut soh_csv = fields_header(1);
    let mut cmp_csv = String::from("t,l1_rho,l1_u,cells_compared\n");
    let emit = |ens: &ParticleEnsemble<2>, soh: &SohFields<2>,
                    particle_csv: &mut String,
                    soh_csv: &mut String,
                    cmp_csv: &mut String|
     -> Result<(), RunError> {
        let emp = empirical_fields(ens, &box_len, &grid, mass_per_particle).map_err(run_err)?;
        let mask = count_mask(&emp.counts, min_count);
        let report = compare_fields(&emp.fields, soh, Some(&mask)).map_err(run_err)?;
        append_fields(particle_csv, &emp.fields);
        append_fields(soh_csv, soh);
        let _ = writeln!(
            cmp_csv,
            "{},{},{},{}",
            fmt_f(report.t),
            fmt_f(report.l1_rho),
            fmt_f(report.l1_u),
            report.cells_compared
        );
        Ok(())
    };
    emit(&ens, &soh, &mut particle_csv, &mut soh_csv, &mut cmp_csv)?;

    let steps = (t_end / p.dt).ceil() as u64;
    let mut next_cmp = if compare_every > 0.0 { compare_every } else { f64::INFINITY };
    for _ in 0..steps {
        step_continuous(&mut ens, &p).map_err(run_err)?;
        if ens.t + 1e-12 >= next_cmp && ens.t < t_end - 1e-12 {
            soh = soh_run(&soh, &solver, ens.t, 0.0)
                .map_err(run_err)?
                .pop()
                .expect("run returns at least one snapshot");
            emit(&ens, &soh, &mut particle_csv, &mut soh_csv, &mut cmp_csv)?;
            while next_cmp <= ens.t + 1e-12 {
                next_cmp += compare_every;
            }
        }
    }
    soh = soh_run(&soh, &solver, ens.t, 0.0)
        .map_err(run_err)?
        .pop()
        .expect("run returns at least one snapshot");
    emit(&ens, &soh, &mut particle_csv, &mut soh_csv, &mut cmp_csv)?;

    Ok(vec![
        ("particle_fields.csv".to_string(), particle_csv),
        ("soh_fields.csv".to_string(), soh_csv),
        ("comparison.csv".to_string(), cmp_csv),
    ])
}

fn run_mill_check(config: &RunConfig) -> Result<Vec<(String, String)>, RunError> {
    let coeffs = CoefficientSet::inviscid(
        config.real("d"),
        2,
        config.int("n_theta") as usize,
    )
    .map_err(run_err)?;
    let p = MillingParams {
        rho0: config.real("rho0"),
        r0: config.real("r0"),
        c2: coeffs.c2,
        d: coeffs.d,
    };
    let r_inner = config.real("r_inner");
    let r_outer = config.real("r_outer");
    if r_outer <= r_inner {
        return Err(RunError::Config(format!(
            "r_outer={r_outer} must exceed r_inner={r_inner}"
        )));
    }
    let n_samples = config.int("n_samples") as usize;
    let mut h = config.real("h");
    let mut csv = String::from("h,mass_residual,momentum_residual\n");
    for _ in 0..config.int("refinements") {
        let (mass, mom) =
            milling_max_residual(&p, coeffs.c1, r_inner, r_outer, n_samples, h).map_err(cfg_err)?;
        let _ = writeln!(csv, "{},{},{}", fmt_f(h), fmt_f(mass), fmt_f(mom));
        h *= 0.5;
    }
    Ok(vec![("mill.csv".to_string(), csv)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn tmp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("sohlab-test-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        dir
    }

    fn run_text(text: &str, dir: &Path) -> Vec<String> {
        let cfg = parse_config(
            text,
            &[("output_dir".to_string(), dir.to_string_lossy().to_string())],
        )
        .unwrap();
        run(&cfg).unwrap()
    }

    #[test]
    fn coeffs_sweep_writes_one_row_per_d() {
        let dir = tmp_dir("coeffs");
        let files = run_text("command = coeffs\nd = 0.5,1.0,2.0\nn_theta = 128\n", &dir);
        assert!(files.contains(&"coefficients.csv".to_string()));
        let body = std::fs::read_to_string(dir.join("coefficients.csv")).unwrap();
        let lines: Vec<&str> = body.lines().collect();
        assert_eq!(lines[0], "d,m,c1,c2,c3,eta0,k,n_theta,gci_residual");
        assert_eq!(lines.len(), 4);
        // Manifest references every produced file.
        let manifest = std::fs::read_to_string(dir.join("manifest.csv")).unwrap();
        assert!(manifest.contains("file,coefficients.csv"));
        assert!(manifest.contains("config_sha256,"));
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn particles_trajectory_format() {
        let dir = tmp_dir("particles");
        run_text(
            "command = particles\nn = 10\nr = 0.2\ndt = 0.05\nt_end = 0.2\nbox_x = 2.0\nbox_y = 2.0\nnoise_d = 0.1\n",
            &dir,
        );
        let body = std::fs::read_to_string(dir.join("trajectory.csv")).unwrap();
        let lines: Vec<&str> = body.lines().collect();
        assert_eq!(lines[0], "t,k,x1,x2,v1,v2");
        // initial + final snapshot, 10 particles each
        assert_eq!(lines.len(), 1 + 20);
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn riemann_compare_emits_all_artifacts() {
        let dir = tmp_dir("rc");
        let files = run_text(
            "command = riemann-compare\nd = 0.3\nn = 2000\nr = 0.2\ndt = 0.05\nbox_x = 4.0\nt_end = 0.3\ncells = 16\nn_theta = 128\nnu = 2.0\n[riemann]\nrho_left = 2.0\nrho_right = 1.0\n",
            &dir,
        );
        for f in ["particle_fields.csv", "soh_fields.csv", "comparison.csv", "manifest.csv"] {
            assert!(files.contains(&f.to_string()), "missing {f}");
        }
        let cmp = std::fs::read_to_string(dir.join("comparison.csv")).unwrap();
        let lines: Vec<&str> = cmp.lines().collect();
        assert_eq!(lines[0], "t,l1_rho,l1_u,cells_compared");
        assert!(lines.len() >= 3); // t = 0 and t = t_end
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let text = "command = soh\nd = 0.5\ncells_x = 32\nbox_x = 4.0\nt_end = 0.5\ninit = riemann\nseed = 9\ndeterministic = true\n[riemann]\nrho_left = 2.0\n";
        let d1 = tmp_dir("det1");
        let d2 = tmp_dir("det2");
        run_text(text, &d1);
        run_text(text, &d2);
        let a = std::fs::read_to_string(d1.join("fields.csv")).unwrap();
        let b = std::fs::read_to_string(d2.join("fields.csv")).unwrap();
        assert_eq!(a, b);
        let _ = std::fs::remove_dir_all(&d1);
        let _ = std::fs::remove_dir_all(&d2);
    }

    #[test]
    fn mill_check_residuals_decrease() {
        let dir = tmp_dir("mill");
        run_text("command = mill-check\nd = 0.5\nn_theta = 256\nrefinements = 3\n", &dir);
        let body = std::fs::read_to_string(dir.join("mill.csv")).unwrap();
        let rows: Vec<Vec<f64>> = body
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 3);
        assert!(rows[1][1] < rows[0][1] && rows[2][1] < rows[1][1]);
        assert!(rows[1][2] < rows[0][2] && rows[2][2] < rows[1][2]);
        let _ = std::fs::remove_dir_all(&dir);
    }
}
