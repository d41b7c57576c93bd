//! Convergence studies, parameter sweeps and report generation for the
//! Oseen solver in `oseen-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod report;
pub mod study;

pub use config::{parse_config, ConfigError, RunConfig, Sweep};
pub use report::emit_report;
pub use study::{run_study, StudyError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

/// Runs a study or sweep, writes its files and returns the process exit code.
pub fn execute(config: &RunConfig, check: bool) -> i32 {
    let reports = match run_study(config) {
        Ok(r) => r,
        Err(e @ StudyError::Mesh(_)) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_SOLVER;
        }
    };
    let written = match config.sweep {
        Some(sweep) => study::write_sweep(config, sweep, &reports),
        None => study::write_study(config, &reports),
    };
    match written {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_SOLVER;
        }
    }
    if config.sweep.is_none() {
        print!("{}", report::summary_csv(&reports));
    }
    if check {
        let failures = study::check_reports(config, &reports);
        if !failures.is_empty() {
            for f in &failures {
                eprintln!("check failed: {f}");
            }
            return EXIT_CHECK;
        }
        println!("all checks passed");
    }
    EXIT_OK
}
