use std::fs;
use std::path::{Path, PathBuf};

use oseen_core::assembly::{Discretization, Method};
use oseen_core::benchmarks::{discretizations, make_example, run_study_levels, RunReport};
use oseen_core::mesh::{generate_unit_square_mesh, read_mesh, Triangulation};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{RunConfig, Sweep};
use crate::report::{self, file_stem};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("base mesh: {0}")]
    Mesh(String),
    #[error("{coords}: {source}")]
    Solve {
        coords: String,
        #[source]
        source: oseen_core::Error,
    },
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One point of the parameter grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Combination {
    pub method: Method,
    pub sigma: f64,
    pub mu: f64,
    pub delta0: f64,
}

/// Parameter grid in method, sigma, mu, delta0 order.
pub fn combinations(config: &RunConfig) -> Vec<Combination> {
    let mut out = Vec::new();
    for &method in &config.methods {
        for &sigma in &config.sigmas {
            for &mu in &config.mus {
                for delta0 in config.delta0s_for(method) {
                    out.push(Combination {
                        method,
                        sigma,
                        mu,
                        delta0,
                    });
                }
            }
        }
    }
    out
}

pub fn base_mesh(config: &RunConfig) -> Result<Triangulation, StudyError> {
    match &config.mesh_file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| StudyError::Mesh(format!("{}: {e}", path.display())))?;
            read_mesh(&text).map_err(|e| StudyError::Mesh(format!("{}: {e}", path.display())))
        }
        None => generate_unit_square_mesh(config.n, config.jitter).map_err(|e| StudyError::Mesh(e.to_string())),
    }
}

/// Levels actually solved: the whole range for a study, the finest level for
/// a sweep.
pub fn solved_levels(config: &RunConfig) -> Vec<usize> {
    match config.sweep {
        Some(_) => vec![config.last_level],
        None => config.levels(),
    }
}

fn run_one(config: &RunConfig, discs: &[(usize, Discretization)], c: Combination) -> Result<RunReport, StudyError> {
    let coords = format!(
        "example {} {} sigma={} mu={:e} delta0={:e}",
        config.example, c.method, c.sigma, c.mu, c.delta0
    );
    let wrap = |source| StudyError::Solve {
        coords: coords.clone(),
        source,
    };
    let case = make_example(config.example, c.sigma, c.mu).map_err(|e| wrap(e.into()))?;
    let mut report =
        run_study_levels(&case, c.method, c.delta0, discs, config.degrees, config.tolerance).map_err(wrap)?;
    if !config.timing {
        for record in &mut report.levels {
            record.wall_ms = 0.0;
        }
    }
    log::info!("{coords}: done");
    Ok(report)
}

/// Solves every combination on the configured levels. Runs execute in
/// parallel; the result order matches [`combinations`].
pub fn run_study(config: &RunConfig) -> Result<Vec<RunReport>, StudyError> {
    let base = base_mesh(config)?;
    let discs = discretizations(&base, &solved_levels(config)).map_err(|source| StudyError::Solve {
        coords: "mesh hierarchy".into(),
        source,
    })?;
    combinations(config)
        .into_par_iter()
        .map(|c| run_one(config, &discs, c))
        .collect()
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, StudyError> {
    fs::write(&path, text).map_err(|source| StudyError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn create_dir(dir: &Path) -> Result<(), StudyError> {
    fs::create_dir_all(dir).map_err(|source| StudyError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Writes one CSV per run, `summary.csv` and `report.md`. Returns the paths
/// in write order.
pub fn write_study(config: &RunConfig, reports: &[RunReport]) -> Result<Vec<PathBuf>, StudyError> {
    create_dir(&config.out)?;
    let mut written = Vec::new();
    for r in reports {
        let path = config.out.join(format!("{}.csv", file_stem(r)));
        written.push(write(path, &report::level_csv(r))?);
    }
    written.push(write(config.out.join("summary.csv"), &report::summary_csv(reports))?);
    written.push(write(config.out.join("report.md"), &report::emit_report(reports))?);
    Ok(written)
}

/// Writes a CSV and a `.dat` file per sweep curve.
pub fn write_sweep(config: &RunConfig, sweep: Sweep, reports: &[RunReport]) -> Result<Vec<PathBuf>, StudyError> {
    create_dir(&config.out)?;
    let mut written = Vec::new();
    for curve in report::sweep_curves(sweep, reports) {
        let stem = curve.stem(sweep);
        written.push(write(config.out.join(format!("{stem}.csv")), &curve.csv(sweep))?);
        written.push(write(config.out.join(format!("{stem}.dat")), &curve.dat(sweep))?);
    }
    Ok(written)
}

/// Floor below which an error counts as zero when checking exactness.
pub const EXACT_TOLERANCE: f64 = 1e-8;

/// Self-checks for `--check`: divergence-freeness, solver residual, and
/// reproduction of the polynomial example by the pressure-robust methods.
pub fn check_reports(config: &RunConfig, reports: &[RunReport]) -> Vec<String> {
    let mut failures = Vec::new();
    for r in reports {
        let name = file_stem(r);
        for l in &r.levels {
            let div_bound = 1e-10 * (1.0 + l.grad_norm);
            if !(l.div_norm <= div_bound) {
                failures.push(format!(
                    "{name} level {}: div {:e} > {:e}",
                    l.level, l.div_norm, div_bound
                ));
            }
            if !(l.residual <= config.tolerance) {
                failures.push(format!("{name} level {}: residual {:e}", l.level, l.residual));
            }
            if r.example == 1 && r.method != Method::SvSupg && !(l.l2_u <= EXACT_TOLERANCE) {
                failures.push(format!("{name} level {}: L2(u) {:e} not exact", l.level, l.l2_u));
            }
        }
    }
    failures
}
