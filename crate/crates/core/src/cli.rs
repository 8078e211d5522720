//! Run configuration, report files and the text reports built from them.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::adaptivity::{adaptive_solve_with, AdaptiveRunConfig, LevelReport};
use crate::error::{ConfigError, ReportError, RunError};
use crate::mesh::SquareSplit;
use crate::problem::ProblemSpec;

pub const LEVEL_COLUMNS: [&str; 13] = [
    "level",
    "elements",
    "max_h",
    "exit_code",
    "iterations",
    "first_residual",
    "final_residual",
    "final_ratio",
    "gamma",
    "sigma_final",
    "eta_total",
    "zeta_total",
    "h1_error",
];

pub const ITERATION_COLUMNS: [&str; 9] = [
    "partition", "n", "residual", "ratio", "alpha", "beta", "sigma", "gamma", "exit_flag",
];

/// Everything read from a run-configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: String,
    pub epsilon: Option<f64>,
    pub adaptive: AdaptiveRunConfig,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    pub levels_dump: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: "linear_poisson".into(),
            epsilon: None,
            adaptive: AdaptiveRunConfig::default(),
            output_dir: None,
            seed: 0,
            levels_dump: Vec::new(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Invalid {
        field: key.into(),
        reason: format!("cannot parse '{value}'"),
    })
}

/// `gamma0` used when a config file does not set one: no damping for the
/// linear problem, and for the layer problems the smallest tried value that
/// reduces the residual on the default 144-element start.
pub fn default_gamma0(problem: &str) -> f64 {
    match problem {
        "linear_poisson" => 1.0,
        _ => 30.0,
    }
}

/// Parses `k1,k2,...`.
pub fn parse_level_list(field: &str, value: &str) -> Result<Vec<usize>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(field, s))
        .collect()
}

impl RunConfig {
    /// Parses flat `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = RunConfig::default();
        let mut gamma0_given = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let a = &mut c.adaptive;
            match key {
                "problem" => c.problem = value.to_string(),
                "epsilon" => c.epsilon = Some(parse_num(key, value)?),
                "initial_n" | "n" => a.initial_n = parse_num(key, value)?,
                "split" => {
                    a.split = match value {
                        "crisscross" => SquareSplit::Crisscross,
                        "diagonal" => SquareSplit::Diagonal,
                        other => {
                            return Err(ConfigError::Invalid {
                                field: key.into(),
                                reason: format!("expected 'crisscross' or 'diagonal', got '{other}'"),
                            })
                        }
                    }
                }
                "gamma0" | "gamma" => {
                    a.gamma0 = parse_num(key, value)?;
                    gamma0_given = true;
                }
                "theta" => a.marking.theta = parse_num(key, value)?,
                "coarse_split_scale" => a.marking.coarse_split_scale = parse_num(key, value)?,
                "sigma0" => a.solver.sigma0 = parse_num(key, value)?,
                "k0" | "K0" => a.solver.k0 = parse_num(key, value)?,
                "tol" => a.solver.tol = parse_num(key, value)?,
                "rate_slack" | "M" => a.solver.rate_slack = parse_num(key, value)?,
                "max_iterations" => a.solver.max_iterations = parse_num(key, value)?,
                "xbar_choice" => a.solver.xbar_choice = value.parse()?,
                "variant" => a.solver.variant = value.parse()?,
                "max_levels" => a.max_levels = parse_num(key, value)?,
                "max_elements" => a.max_elements = Some(parse_num(key, value)?),
                "rate_tolerance" => a.rate_tolerance = parse_num(key, value)?,
                "stop_after_converged" => a.stop_after_converged = Some(parse_num(key, value)?),
                "output_dir" => c.output_dir = Some(PathBuf::from(value)),
                "seed" => c.seed = parse_num(key, value)?,
                "levels_dump" => c.levels_dump = parse_level_list(key, value)?,
                other => return Err(ConfigError::UnknownKey(other.to_string())),
            }
        }
        if !gamma0_given {
            c.adaptive.gamma0 = default_gamma0(&c.problem);
        }
        c.adaptive.validate()?;
        c.problem_spec()?;
        Ok(c)
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec, ConfigError> {
        ProblemSpec::by_name(&self.problem, self.epsilon)
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn levels_csv(reports: &[LevelReport]) -> String {
    let mut s = LEVEL_COLUMNS.join(",");
    s.push('\n');
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.level,
            r.elements,
            num(r.max_h),
            r.exit_code,
            r.iterations,
            num(r.first_residual),
            num(r.final_residual),
            opt(r.final_ratio),
            r.gamma,
            num(r.sigma_final),
            num(r.eta_total),
            num(r.zeta_total),
            opt(r.h1_error),
        );
    }
    s
}

pub fn iterations_csv(reports: &[LevelReport]) -> String {
    let mut s = ITERATION_COLUMNS.join(",");
    s.push('\n');
    for r in reports {
        let last = r.records.len().saturating_sub(1);
        for (k, rec) in r.records.iter().enumerate() {
            let flag = if k == last { r.exit_code.as_str() } else { "continue" };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.level,
                rec.n,
                num(rec.residual),
                opt(rec.ratio),
                num(rec.alpha),
                num(rec.beta),
                num(rec.sigma),
                r.gamma,
                flag
            );
        }
    }
    s
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    fs::write(path, contents).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn dump<F>(path: &Path, write: F) -> Result<(), RunError>
where
    F: FnOnce(BufWriter<File>) -> std::io::Result<()>,
{
    let io = |source| RunError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io)?;
    write(BufWriter::new(file)).map_err(io)
}

/// Runs the adaptive loop and writes `levels.csv`, `iterations.csv` and the
/// requested `mesh_L<k>.txt` / `sol_L<k>.txt` dumps into `out_dir`.
pub fn run(config: &RunConfig, out_dir: &Path) -> Result<Vec<LevelReport>, RunError> {
    let problem = config.problem_spec()?;
    config.adaptive.validate()?;
    fs::create_dir_all(out_dir).map_err(|source| RunError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut dump_error = None;
    let reports = adaptive_solve_with(&config.adaptive, &problem, |d| {
        let k = d.report.level;
        if dump_error.is_some() || !config.levels_dump.contains(&k) {
            return;
        }
        let result = dump(&out_dir.join(format!("mesh_L{k}.txt")), |w| d.mesh.write_dump(w))
            .and_then(|_| dump(&out_dir.join(format!("sol_L{k}.txt")), |w| d.solution.write_dump(w)));
        if let Err(e) = result {
            dump_error = Some(e);
        }
    })?;
    if let Some(e) = dump_error {
        return Err(e);
    }
    write_file(&out_dir.join("levels.csv"), &levels_csv(&reports))?;
    write_file(&out_dir.join("iterations.csv"), &iterations_csv(&reports))?;
    Ok(reports)
}

/// One parsed row of `levels.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRow {
    pub level: usize,
    pub elements: usize,
    pub exit_code: String,
    pub final_residual: f64,
    pub final_ratio: Option<f64>,
    pub gamma: f64,
    pub sigma_final: f64,
    pub eta_total: f64,
    pub h1_error: Option<f64>,
}

pub fn parse_levels_csv(text: &str) -> Result<Vec<LevelRow>, ReportError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Ok(Vec::new());
    };
    let header: Vec<&str> = header.split(',').map(str::trim).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| ReportError::MissingColumn(name.into()))
    };
    let idx = [
        col("level")?,
        col("elements")?,
        col("exit_code")?,
        col("final_residual")?,
        col("final_ratio")?,
        col("gamma")?,
        col("sigma_final")?,
        col("eta_total")?,
    ];
    let h1 = header.iter().position(|h| *h == "h1_error");

    lines
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let malformed = |reason: String| ReportError::Malformed { line: i + 1, reason };
            if fields.len() != header.len() {
                return Err(malformed(format!("expected {} fields, found {}", header.len(), fields.len())));
            }
            let f = |k: usize| -> Result<f64, ReportError> {
                fields[k]
                    .parse()
                    .map_err(|_| malformed(format!("column '{}': cannot parse '{}'", header[k], fields[k])))
            };
            let optional = |k: usize| if fields[k].is_empty() { Ok(None) } else { f(k).map(Some) };
            let count = |k: usize| -> Result<usize, ReportError> {
                fields[k]
                    .parse()
                    .map_err(|_| malformed(format!("column '{}': cannot parse '{}'", header[k], fields[k])))
            };
            Ok(LevelRow {
                level: count(idx[0])?,
                elements: count(idx[1])?,
                exit_code: fields[idx[2]].to_string(),
                final_residual: f(idx[3])?,
                final_ratio: optional(idx[4])?,
                gamma: f(idx[5])?,
                sigma_final: f(idx[6])?,
                eta_total: f(idx[7])?,
                h1_error: h1.map(optional).transpose()?.flatten(),
            })
        })
        .collect()
}

/// Fixed-width table of level, final residual, final ratio, sigma and gamma.
pub fn table_report(levels_csv: &str) -> Result<String, ReportError> {
    let rows = parse_levels_csv(levels_csv)?;
    let mut s = format!("{:>5}  {:>10}  {:>11}  {:>7}  {:>5}\n", "Level", "|g(u_k)|", "final ratio", "sigma_k", "gamma_k");
    for r in rows {
        let ratio = r.final_ratio.map_or("-".to_string(), |q| format!("{q:.2}"));
        let _ = writeln!(
            s,
            "{:>5}  {:>10.1e}  {:>11}  {:>7.3}  {:>5}",
            r.level, r.final_residual, ratio, r.sigma_final, r.gamma
        );
    }
    Ok(s)
}

/// `elements,h1_error,eta_total` rows for a log-log error plot.
pub fn error_curve(levels_csv: &str) -> Result<String, ReportError> {
    let rows = parse_levels_csv(levels_csv)?;
    let mut s = String::from("elements,h1_error,eta_total\n");
    for r in rows {
        let e = r.h1_error.ok_or_else(|| ReportError::MissingColumn("h1_error".into()))?;
        let _ = writeln!(s, "{},{},{}", r.elements, num(e), num(r.eta_total));
    }
    Ok(s)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let c = RunConfig::parse(
            "# example\nproblem = example_1\nepsilon = 6e-4\n\nn = 6 # cells\ngamma0 = 10\nvariant = newmark\nlevels_dump = 0, 3\n",
        )
        .unwrap();
        assert_eq!(c.problem, "example_1");
        assert_eq!(c.epsilon, Some(6e-4));
        assert_eq!(c.adaptive.initial_n, 6);
        assert_eq!(c.levels_dump, vec![0, 3]);
        assert_eq!(c.adaptive.solver.variant, crate::solver::Variant::Newmark);
    }

    #[test]
    fn gamma0_defaults_by_problem() {
        assert_eq!(RunConfig::parse("problem = linear_poisson\n").unwrap().adaptive.gamma0, 1.0);
        assert_eq!(RunConfig::parse("problem = example_3\nepsilon = 1e-3\n").unwrap().adaptive.gamma0, 30.0);
        let set = RunConfig::parse("gamma = 7\nproblem = example_1\nepsilon = 1e-3\n").unwrap();
        assert_eq!(set.adaptive.gamma0, 7.0);
    }

    #[test]
    fn config_errors_name_the_field() {
        let e = RunConfig::parse("problem = example_1\n").unwrap_err();
        assert!(e.to_string().contains("epsilon"));
        let e = RunConfig::parse("problem = example_1\nepsilon = abc\n").unwrap_err();
        assert!(matches!(e, ConfigError::Invalid { ref field, .. } if field == "epsilon"));
        assert!(matches!(RunConfig::parse("bogus = 1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(RunConfig::parse("just words"), Err(ConfigError::Syntax { line: 1, .. })));
        let e = RunConfig::parse("theta = 0").unwrap_err();
        assert!(e.to_string().contains("theta"));
        assert!(matches!(RunConfig::parse("problem = burgers"), Err(ConfigError::UnknownProblem(_))));
    }

    #[test]
    fn empty_and_single_row_tables() {
        let header = LEVEL_COLUMNS.join(",") + "\n";
        let t = table_report(&header).unwrap();
        assert_eq!(t.lines().count(), 1);
        let one = header.clone() + "0,144,0.1,converged,3,1.5e3,1e-8,0.01,1,1,2,1,0.5\n";
        let t = table_report(&one).unwrap();
        assert_eq!(t.lines().count(), 2);
        assert!(t.lines().nth(1).unwrap().contains("1.0e-8"));
        assert!(table_report("").unwrap().lines().count() == 1);
    }

    #[test]
    fn malformed_csv_is_reported() {
        let header = LEVEL_COLUMNS.join(",") + "\n";
        let bad = header.clone() + "0,144,0.1,converged\n";
        assert!(matches!(table_report(&bad), Err(ReportError::Malformed { line: 2, .. })));
        let bad = header + "0,x,0.1,converged,3,1.5e3,1e-8,0.01,1,1,2,1,0.5\n";
        assert!(matches!(table_report(&bad), Err(ReportError::Malformed { .. })));
        assert!(matches!(table_report("level,gamma\n"), Err(ReportError::MissingColumn(_))));
    }

    #[test]
    fn curve_rows_and_missing_error() {
        let header = LEVEL_COLUMNS.join(",") + "\n";
        let two = header.clone()
            + "0,144,0.1,converged,3,1,1,0.5,1,1,2,1,0.5\n1,300,0.1,converged,3,1,1,0.5,1,1,1.5,1,0.3\n";
        let c = error_curve(&two).unwrap();
        assert_eq!(c.lines().count(), 3);
        assert!(c.lines().nth(2).unwrap().starts_with("300,"));
        let blank = header + "0,144,0.1,converged,3,1,1,0.5,1,1,2,1,\n";
        assert!(matches!(error_curve(&blank), Err(ReportError::MissingColumn(c)) if c == "h1_error"));
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = (1..6).map(|k| (10f64.powi(k), 3.0 * 10f64.powf(-0.5 * k as f64))).collect();
        assert!((loglog_slope(&pts) + 0.5).abs() < 1e-12);
    }
}
