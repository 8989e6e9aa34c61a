//! Convergence studies: run a case over mesh levels, compute rates and
//! regime labels, and write CSV/Markdown tables.

pub mod acceptance;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;

use crate::analysis::{energy_error, eoc, ErrorRecord, RegimeReport};
use crate::assembly::{default_quad_degree, newton_solve, Discretization, NewtonOptions};
use crate::cases::{CaseKind, CaseSpec};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::par::Execution;

pub const CSV_HEADER: [&str; 12] = [
    "case",
    "p",
    "k",
    "n",
    "h",
    "ndof",
    "error",
    "eoc",
    "newton_iters",
    "eta_tilde",
    "regime",
    "wall_ms",
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub case: CaseKind,
    pub ps: Vec<f64>,
    pub ks: Vec<usize>,
    pub ns: Vec<usize>,
    /// Constant degeneracy parameter, first case only.
    pub delta: Option<f64>,
    pub quad_degree: Option<usize>,
    pub newton: NewtonOptions,
    pub out_dir: Option<PathBuf>,
    /// When false the `wall_ms` column is written as 0 so that repeated runs
    /// give identical files.
    pub record_timing: bool,
    pub execution: Execution,
}

impl RunConfig {
    pub fn new(case: CaseKind, ps: Vec<f64>, ks: Vec<usize>, ns: Vec<usize>) -> Self {
        Self {
            case,
            ps,
            ks,
            ns,
            delta: None,
            quad_degree: None,
            newton: NewtonOptions::default(),
            out_dir: None,
            record_timing: true,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ps.is_empty() || self.ks.is_empty() || self.ns.is_empty() {
            return Err(Error::InvalidInput("p, k and n lists must be non-empty".into()));
        }
        if let Some(p) = self.ps.iter().find(|&&p| !(p > 1.0 && p <= 2.0)) {
            return Err(Error::InvalidInput(format!("p = {p} is outside (1, 2]")));
        }
        if let Some(k) = self.ks.iter().find(|&&k| k > 3) {
            return Err(Error::InvalidInput(format!("k = {k} is outside 0..=3")));
        }
        if self.ns.contains(&0) || self.ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("n must be positive and strictly increasing".into()));
        }
        if self.delta.is_some() && self.case != CaseKind::NondegFlux {
            return Err(Error::InvalidInput(format!("--delta only applies to nondeg-flux, not {}", self.case)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub case: CaseSpec,
    pub levels: Vec<ErrorRecord>,
    /// One entry per consecutive pair of levels.
    pub eocs: Vec<Option<f64>>,
    /// Regime diagnostics per level.
    pub regimes: Vec<RegimeReport>,
}

impl StudyResult {
    pub fn errors(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.error).collect()
    }

    pub fn rates(&self) -> Vec<f64> {
        self.eocs.iter().map(|e| e.unwrap_or(f64::NAN)).collect()
    }

    pub fn last_rate(&self) -> Option<f64> {
        self.eocs.last().copied().flatten()
    }

    pub fn newton_iterations(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.newton_iterations).collect()
    }

    fn push(&mut self, record: ErrorRecord, regime: RegimeReport) {
        self.levels.push(record);
        self.regimes.push(regime);
        let errors = self.errors();
        let hs: Vec<f64> = self.levels.iter().map(|l| l.h).collect();
        self.eocs = eoc(&errors, &hs);
    }
}

/// Solves one level and measures the error.
pub fn run_level(
    case: &CaseSpec,
    n: usize,
    quad_degree: Option<usize>,
    newton: &NewtonOptions,
    execution: Execution,
) -> Result<(ErrorRecord, RegimeReport)> {
    let start = Instant::now();
    let k = case.k;
    let mesh = Mesh::structured_triangular(n)?;
    let regime = case.regime(&mesh, execution);
    let disc = Discretization::with_options(mesh, k, quad_degree.unwrap_or(default_quad_degree(k)), execution)?;
    let (uh, report) = newton_solve(&disc, &case.problem(), newton)?;
    let spec = *case;
    let (error, per_element) = energy_error(&disc, &uh, &move |x| spec.u(x), case.p)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    info!(
        "{} p={} k={} n={}: error {:.4e}, {} Newton iterations, {:.0} ms",
        case.name(),
        case.p,
        k,
        n,
        error,
        report.iterations,
        wall_ms
    );
    let record = ErrorRecord {
        n,
        h: disc.mesh().h(),
        num_elements: disc.mesh().num_elements(),
        ndof: disc.ndof(),
        error,
        per_element,
        newton_iterations: report.iterations,
        wall_ms,
    };
    Ok((record, regime))
}

/// Runs one `(p, k)` study over the configured levels.
pub fn run_single(config: &RunConfig, p: f64, k: usize) -> (StudyResult, Option<Error>) {
    let case = match CaseSpec::new(config.case, p, k, config.delta) {
        Ok(c) => c,
        Err(e) => {
            let dummy = CaseSpec {
                kind: config.case,
                p,
                k,
                delta: 0.0,
                zeta: 0.0,
                seminorm_constant: None,
            };
            return (empty_study(dummy), Some(e));
        }
    };
    let mut study = empty_study(case);
    for &n in &config.ns {
        match run_level(&case, n, config.quad_degree, &config.newton, config.execution) {
            Ok((mut record, regime)) => {
                if !config.record_timing {
                    record.wall_ms = 0.0;
                }
                study.push(record, regime);
            }
            Err(e) => return (study, Some(e)),
        }
    }
    (study, None)
}

fn empty_study(case: CaseSpec) -> StudyResult {
    StudyResult {
        case,
        levels: Vec::new(),
        eocs: Vec::new(),
        regimes: Vec::new(),
    }
}

/// Runs every `(p, k)` combination. CSV and Markdown files named after the
/// case are written to the output directory, if any, including the levels
/// completed before a failure.
pub fn run_study(config: &RunConfig) -> Result<Vec<StudyResult>> {
    config.validate()?;
    let mut results = Vec::new();
    let mut failure = None;
    'outer: for &p in &config.ps {
        for &k in &config.ks {
            let (study, err) = run_single(config, p, k);
            results.push(study);
            if let Some(e) = err {
                failure = Some(e);
                break 'outer;
            }
        }
    }
    if let Some(dir) = &config.out_dir {
        write_outputs(dir, config.case.name(), &results)?;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(results),
    }
}

pub fn write_outputs(dir: &Path, stem: &str, results: &[StudyResult]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{stem}.csv")), to_csv(results)?)?;
    fs::write(dir.join(format!("{stem}.md")), emit_table(results))?;
    Ok(())
}

/// Six significant digits in scientific notation.
pub fn sci(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.5e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Shortest decimal form with at most six significant digits.
pub fn short(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let digits = (5 - x.abs().log10().floor() as i32).max(0) as usize;
    let s = format!("{x:.digits$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn to_csv(results: &[StudyResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for study in results {
        for (i, (rec, regime)) in study.levels.iter().zip(&study.regimes).enumerate() {
            let eoc = if i == 0 {
                String::new()
            } else {
                study.eocs[i - 1].map(sci).unwrap_or_else(|| "nan".into())
            };
            w.write_record([
                study.case.name().to_string(),
                short(study.case.p),
                study.case.k.to_string(),
                rec.n.to_string(),
                sci(rec.h),
                rec.ndof.to_string(),
                sci(rec.error),
                eoc,
                rec.newton_iterations.to_string(),
                sci(regime.eta_tilde),
                regime.regime.to_string(),
                format!("{:.0}", rec.wall_ms),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Theoretical rate bracket `(k+1)(p-1) ~ k+1`.
pub fn rate_bracket(k: usize, p: f64) -> String {
    let hi = k as f64 + 1.0;
    format!("{} ~ {}", short(hi * (p - 1.0)), short(hi))
}

/// Markdown tables, one per case, with mesh levels as rows and `(k, p)` as
/// columns. Cells hold the error and, from the second level on, the rate.
pub fn emit_table(results: &[StudyResult]) -> String {
    let mut cases: Vec<CaseKind> = Vec::new();
    for r in results {
        if !cases.contains(&r.case.kind) {
            cases.push(r.case.kind);
        }
    }
    if cases.is_empty() {
        return "| h |\n|---|\n".into();
    }
    let mut out = String::new();
    for case in cases {
        let cols: Vec<&StudyResult> = results.iter().filter(|r| r.case.kind == case).collect();
        let mut ns: Vec<usize> = cols.iter().flat_map(|r| r.levels.iter().map(|l| l.n)).collect();
        ns.sort_unstable();
        ns.dedup();
        out.push_str(&format!("### {case}\n\n| h |"));
        for c in &cols {
            out.push_str(&format!(" k={}, p={} |", c.case.k, short(c.case.p)));
        }
        out.push_str("\n|---|");
        for _ in &cols {
            out.push_str("---|");
        }
        out.push_str("\n| rate |");
        for c in &cols {
            out.push_str(&format!(" {} |", rate_bracket(c.case.k, c.case.p)));
        }
        out.push('\n');
        for n in ns {
            let h = cols
                .iter()
                .find_map(|c| c.levels.iter().find(|l| l.n == n).map(|l| l.h))
                .unwrap_or(f64::NAN);
            out.push_str(&format!("| {} |", short(h)));
            for c in &cols {
                match c.levels.iter().position(|l| l.n == n) {
                    Some(i) => {
                        let rate = if i == 0 {
                            String::new()
                        } else {
                            c.eocs[i - 1].map(|r| format!(" ({r:.2})")).unwrap_or_default()
                        };
                        out.push_str(&format!(" {:.2e}{} |", c.levels[i].error, rate));
                    }
                    None => out.push_str(" |"),
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bracket_cells() {
        assert_eq!(rate_bracket(1, 1.25), "0.5 ~ 2");
        assert_eq!(rate_bracket(3, 1.75), "3 ~ 4");
        assert_eq!(rate_bracket(2, 1.5), "1.5 ~ 3");
    }

    #[test]
    fn number_formats() {
        assert_eq!(sci(0.001234567), "1.23457e-3");
        assert_eq!(sci(f64::INFINITY), "inf");
        assert_eq!(short(1.5), "1.5");
        assert_eq!(short(0.1), "0.1");
        assert_eq!(short(2.0), "2");
        assert_eq!(short(0.0005), "0.0005");
    }

    #[test]
    fn empty_table_has_headers_only() {
        assert_eq!(emit_table(&[]), "| h |\n|---|\n");
    }

    #[test]
    fn config_validation() {
        let ok = RunConfig::new(CaseKind::NondegFlux, vec![1.5], vec![1], vec![4, 8]);
        assert!(ok.validate().is_ok());
        let mut bad = ok.clone();
        bad.ns = vec![8, 4];
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.ps = vec![2.5];
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.ks = vec![4];
        assert!(bad.validate().is_err());
        let mut bad = ok;
        bad.case = CaseKind::Degenerate;
        bad.delta = Some(0.1);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_level_study_has_no_rates() {
        let mut cfg = RunConfig::new(CaseKind::NondegFlux, vec![1.75], vec![1], vec![4]);
        cfg.record_timing = false;
        let res = run_study(&cfg).unwrap();
        assert_eq!(res.len(), 1);
        assert_eq!(res[0].levels.len(), 1);
        assert!(res[0].eocs.is_empty());
        let csv = to_csv(&res).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert_eq!(lines.len(), 2);
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields.len(), 12);
        assert_eq!(fields[7], "");
        assert!(fields[6].parse::<f64>().unwrap() > 0.0);
    }

    #[test]
    fn table_layout() {
        let mut cfg = RunConfig::new(CaseKind::NondegFlux, vec![1.25, 1.75], vec![1], vec![2, 4]);
        cfg.record_timing = false;
        let res = run_study(&cfg).unwrap();
        let md = emit_table(&res);
        assert!(md.contains("| h | k=1, p=1.25 | k=1, p=1.75 |"));
        assert!(md.contains("| rate | 0.5 ~ 2 | 1.5 ~ 2 |"));
        assert_eq!(md.lines().filter(|l| l.starts_with("| 0.")).count(), 2);
    }
}
