use std::fmt::Write;

use oseen_core::assembly::Method;
use oseen_core::benchmarks::{eoc, Eoc, LevelRecord, RunReport};

use crate::config::Sweep;

/// Errors at or below this are treated as exact: their EOC cells read "exact".
pub const NOISE_FLOOR: f64 = 1e-10;

pub const CSV_HEADER: &str =
    "level,h_max,ndof_u,ndof_p,l2u,eoc_l2u,h1u,eoc_h1u,l2p,eoc_l2p,div_norm,s_seminorm,picl2,wall_ms";

pub const SUMMARY_HEADER: &str =
    "example,method,sigma,mu,delta0,levels,l2u,h1u,l2p,eoc_l2u,eoc_h1u,eoc_l2p,eoc_picl2,max_div_norm,max_residual";

/// Rates of one error column, with sub-noise errors counted as exact.
pub fn column_eoc(report: &RunReport, pick: impl Fn(&LevelRecord) -> f64) -> Option<Eoc> {
    let errors: Vec<f64> = report
        .levels
        .iter()
        .map(|r| {
            let e = pick(r);
            if e <= NOISE_FLOOR {
                0.0
            } else {
                e
            }
        })
        .collect();
    let h: Vec<f64> = report.levels.iter().map(|r| r.h_max).collect();
    eoc(&errors, &h).ok()
}

fn rate_cell(rate: Option<f64>) -> String {
    match rate {
        Some(r) => format!("{r:.2}"),
        None => "exact".into(),
    }
}

fn average_cell(e: &Option<Eoc>) -> String {
    match e {
        Some(e) => rate_cell(e.average),
        None => "-".into(),
    }
}

/// Per-level rate cell; the first level has none.
fn level_rate(e: &Option<Eoc>, index: usize) -> String {
    match (e, index) {
        (_, 0) | (None, _) => String::new(),
        (Some(e), i) => rate_cell(e.rates[i - 1]),
    }
}

pub fn file_stem(r: &RunReport) -> String {
    format!(
        "ex{}_{}_sigma{}_mu{:e}_delta{:e}",
        r.example,
        r.method.key(),
        r.sigma,
        r.mu,
        r.delta0
    )
}

pub fn level_csv(r: &RunReport) -> String {
    let eocs = [
        column_eoc(r, |l| l.l2_u),
        column_eoc(r, |l| l.h1_u),
        column_eoc(r, |l| l.l2_p),
    ];
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (i, l) in r.levels.iter().enumerate() {
        writeln!(
            out,
            "{},{:.6e},{},{},{:.6e},{},{:.6e},{},{:.6e},{},{:.6e},{:.6e},{:.6e},{:.1}",
            l.level,
            l.h_max,
            l.ndof_u,
            l.ndof_p,
            l.l2_u,
            level_rate(&eocs[0], i),
            l.h1_u,
            level_rate(&eocs[1], i),
            l.l2_p,
            level_rate(&eocs[2], i),
            l.div_norm,
            l.s_seminorm,
            l.picl2,
            l.wall_ms
        )
        .unwrap();
    }
    out
}

pub fn summary_csv(reports: &[RunReport]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in reports {
        let Some(f) = r.finest() else { continue };
        let max = |pick: fn(&LevelRecord) -> f64| r.levels.iter().map(pick).fold(0.0, f64::max);
        writeln!(
            out,
            "{},{},{},{:e},{:e},{}..{},{:.6e},{:.6e},{:.6e},{},{},{},{},{:.3e},{:.3e}",
            r.example,
            r.method.key(),
            r.sigma,
            r.mu,
            r.delta0,
            r.levels[0].level,
            f.level,
            f.l2_u,
            f.h1_u,
            f.l2_p,
            average_cell(&column_eoc(r, |l| l.l2_u)),
            average_cell(&column_eoc(r, |l| l.h1_u)),
            average_cell(&column_eoc(r, |l| l.l2_p)),
            average_cell(&column_eoc(r, |l| l.picl2)),
            max(|l| l.div_norm),
            max(|l| l.residual),
        )
        .unwrap();
    }
    out
}

/// Column-group label; the stabilization parameter is added when the same
/// method appears more than once in a table.
fn group_label(r: &RunReport, group: &[&RunReport]) -> String {
    let repeats = group.iter().filter(|o| o.method == r.method).count() > 1;
    if repeats {
        format!("{} (δ0={:e})", r.method.label(), r.delta0)
    } else {
        r.method.label().to_string()
    }
}

fn table_row(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

fn emit_group(out: &mut String, group: &[&RunReport]) {
    let first = group[0];
    writeln!(
        out,
        "## Example {}, σ = {}, μ = {:e}\n",
        first.example, first.sigma, first.mu
    )
    .unwrap();

    let labels: Vec<String> = group.iter().map(|r| group_label(r, group)).collect();
    let mut header = vec!["level".to_string()];
    for label in &labels {
        header.extend(["L2(u)", "H1(u)", "L2(p)"].map(|c| format!("{label} {c}")));
    }
    out.push_str(&table_row(&header));
    out.push_str(&table_row(&vec!["---".to_string(); header.len()]));

    let mut levels: Vec<usize> = group.iter().flat_map(|r| r.levels.iter().map(|l| l.level)).collect();
    levels.sort_unstable();
    levels.dedup();
    for &level in &levels {
        let mut row = vec![level.to_string()];
        for r in group {
            match r.levels.iter().find(|l| l.level == level) {
                Some(l) => row.extend([l.l2_u, l.h1_u, l.l2_p].map(|e| format!("{e:.3e}"))),
                None => row.extend(std::iter::repeat_n(String::new(), 3)),
            }
        }
        out.push_str(&table_row(&row));
    }
    let mut footer = vec!["EOC".to_string()];
    for r in group {
        footer.push(average_cell(&column_eoc(r, |l| l.l2_u)));
        footer.push(average_cell(&column_eoc(r, |l| l.h1_u)));
        footer.push(average_cell(&column_eoc(r, |l| l.l2_p)));
    }
    out.push_str(&table_row(&footer));

    let params: Vec<String> = group
        .iter()
        .zip(&labels)
        .filter(|(r, _)| r.method != Method::Sv)
        .map(|(r, label)| format!("{label}: δ0 = {}", r.delta0))
        .collect();
    if !params.is_empty() {
        writeln!(out, "\n{}", params.join(", ")).unwrap();
    }

    out.push_str("\nDiagnostics\n\n");
    out.push_str(&table_row(
        &[
            "method",
            "level",
            "‖div u_h‖",
            "S-seminorm",
            "‖π_h p − p_h‖",
            "residual",
        ]
        .map(String::from),
    ));
    out.push_str(&table_row(&vec!["---".to_string(); 6]));
    for (r, label) in group.iter().zip(&labels) {
        for l in &r.levels {
            out.push_str(&table_row(&[
                label.clone(),
                l.level.to_string(),
                format!("{:.2e}", l.div_norm),
                format!("{:.3e}", l.s_seminorm),
                format!("{:.3e}", l.picl2),
                format!("{:.1e}", l.residual),
            ]));
        }
    }
    let probe: Vec<String> = group
        .iter()
        .zip(&labels)
        .map(|(r, label)| format!("{label} {}", average_cell(&column_eoc(r, |l| l.picl2))))
        .collect();
    writeln!(out, "\nProbe EOC: {}\n", probe.join(", ")).unwrap();
}

/// Markdown tables, one per (example, σ, μ), with a column group per run.
pub fn emit_report(reports: &[RunReport]) -> String {
    let mut out = String::from("# Convergence report\n\n");
    let mut groups: Vec<Vec<&RunReport>> = Vec::new();
    for r in reports {
        let same = |g: &Vec<&RunReport>| g[0].example == r.example && g[0].sigma == r.sigma && g[0].mu == r.mu;
        match groups.iter_mut().find(|g| same(g)) {
            Some(g) => g.push(r),
            None => groups.push(vec![r]),
        }
    }
    for g in &groups {
        emit_group(&mut out, g);
    }
    out
}

/// One curve of a sweep: fixed method and parameters, varying `mu` or `delta0`.
#[derive(Debug, Clone)]
pub struct SweepCurve<'a> {
    pub points: Vec<&'a RunReport>,
}

impl SweepCurve<'_> {
    fn head(&self) -> &RunReport {
        self.points[0]
    }

    pub fn stem(&self, sweep: Sweep) -> String {
        let r = self.head();
        let level = r.levels.first().map_or(0, |l| l.level);
        let fixed = match sweep {
            Sweep::Mu => format!("delta{:e}", r.delta0),
            Sweep::Delta0 => format!("mu{:e}", r.mu),
        };
        format!(
            "sweep_{}_ex{}_{}_sigma{}_{fixed}_level{level}",
            sweep.key(),
            r.example,
            r.method.key(),
            r.sigma
        )
    }

    fn rows(&self, sweep: Sweep) -> impl Iterator<Item = (f64, &LevelRecord)> {
        self.points.iter().filter_map(move |r| {
            let x = match sweep {
                Sweep::Mu => r.mu,
                Sweep::Delta0 => r.delta0,
            };
            r.levels.first().map(|l| (x, l))
        })
    }

    pub fn csv(&self, sweep: Sweep) -> String {
        let mut out = format!("{},l2u,h1u,l2p,div_norm,s_seminorm,picl2,wall_ms\n", sweep.key());
        for (x, l) in self.rows(sweep) {
            writeln!(
                out,
                "{x:e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.1}",
                l.l2_u, l.h1_u, l.l2_p, l.div_norm, l.s_seminorm, l.picl2, l.wall_ms
            )
            .unwrap();
        }
        out
    }

    /// Whitespace-separated columns for gnuplot.
    pub fn dat(&self, sweep: Sweep) -> String {
        let r = self.head();
        let mut out = format!(
            "# example {} {} sigma {}\n# {} l2u h1u l2p\n",
            r.example,
            r.method.label(),
            r.sigma,
            sweep.key()
        );
        for (x, l) in self.rows(sweep) {
            writeln!(out, "{x:.6e} {:.6e} {:.6e} {:.6e}", l.l2_u, l.h1_u, l.l2_p).unwrap();
        }
        out
    }
}

/// Groups single-level runs into curves along the swept parameter, sorted
/// by that parameter.
pub fn sweep_curves(sweep: Sweep, reports: &[RunReport]) -> Vec<SweepCurve<'_>> {
    let mut curves: Vec<SweepCurve> = Vec::new();
    for r in reports {
        let same = |o: &RunReport| {
            o.example == r.example
                && o.method == r.method
                && o.sigma == r.sigma
                && match sweep {
                    Sweep::Mu => o.delta0 == r.delta0,
                    Sweep::Delta0 => o.mu == r.mu,
                }
        };
        match curves.iter_mut().find(|c| same(c.head())) {
            Some(c) => c.points.push(r),
            None => curves.push(SweepCurve { points: vec![r] }),
        }
    }
    for c in &mut curves {
        c.points.sort_by(|a, b| {
            let key = |r: &RunReport| match sweep {
                Sweep::Mu => r.mu,
                Sweep::Delta0 => r.delta0,
            };
            key(a).total_cmp(&key(b))
        });
    }
    curves
}
