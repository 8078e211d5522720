//! Residual indicators, split Dörfler marking, the `gamma` update and the
//! solve-estimate-mark-refine loop.

use std::f64::consts::PI;

use crate::error::{AssemblyError, ConfigError};
use crate::fem::{assemble_laplacian, edge_jump, h1_error, DiscreteField, ElementGeometry};
use crate::mesh::{interpolate, MarkedSet, Mesh, SquareSplit};
use crate::problem::ProblemSpec;
use crate::quadrature::QuadratureRule;
use crate::solver::{
    regularizer, solve_on_partition, ExitCode, FailureKind, IterationRecord, SolveOutcome, SolverConfig,
};

/// Per-element indicators `eta_T` and `zeta_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField {
    pub eta: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl IndicatorField {
    pub fn eta_total(&self) -> f64 {
        self.eta.iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    pub fn zeta_total(&self) -> f64 {
        self.zeta.iter().map(|z| z * z).sum::<f64>().sqrt()
    }
}

/// `zeta_T = (h_T sum_e |[[kappa(u) grad u . n]]|^2_{L2(e)})^(1/2)`.
pub fn jump_indicators(mesh: &Mesh, u: &DiscreteField, problem: &ProblemSpec) -> Vec<f64> {
    (0..mesh.num_elements())
        .map(|t| {
            let jumps: f64 = edge_jump(mesh, u, problem, t).iter().sum();
            (mesh.diameter(t) * jumps).sqrt()
        })
        .collect()
}

/// `eta_T^2 = h_T^2 |r|^2_{L2(T)} + zeta_T^2` with the elementwise strong
/// residual `r = -kappa'(u)|grad u|^2 + b(u) . grad u - f`.
pub fn compute_indicators(mesh: &Mesh, u: &DiscreteField, problem: &ProblemSpec) -> IndicatorField {
    let rule = QuadratureRule::triangle_order4();
    let zeta = jump_indicators(mesh, u, problem);
    let eta = (0..mesh.num_elements())
        .map(|t| {
            let geo = ElementGeometry::new(mesh, t);
            let e = mesh.element(t);
            let uloc = [u.values()[e[0]], u.values()[e[1]], u.values()[e[2]]];
            let g = geo.gradient(uloc);
            let g2 = g[0] * g[0] + g[1] * g[1];
            let volume: f64 = rule
                .iter()
                .map(|(bary, w)| {
                    let uq = bary[0] * uloc[0] + bary[1] * uloc[1] + bary[2] * uloc[2];
                    let b = problem.convection(uq);
                    let r = -problem.kappa_prime(uq) * g2 + b[0] * g[0] + b[1] * g[1] - problem.load(geo.point(bary));
                    w * geo.area * r * r
                })
                .sum();
            let h = mesh.diameter(t);
            (h * h * volume + zeta[t] * zeta[t]).sqrt()
        })
        .collect();
    IndicatorField { eta, zeta }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkingConfig {
    pub theta: f64,
    /// Residual scale inside `Phi`.
    pub coarse_split_scale: f64,
}

impl Default for MarkingConfig {
    fn default() -> Self {
        Self {
            theta: 0.6,
            coarse_split_scale: 100.0,
        }
    }
}

/// `(theta_C, theta_F)` with
/// `theta_C = theta (1/2 + atan(r / scale - pi/2) / pi)` clamped to `[0, theta]`.
pub fn phi_split(theta: f64, final_residual: f64, scale: f64) -> (f64, f64) {
    let raw = theta * (0.5 + (final_residual / scale - PI / 2.0).atan() / PI);
    let theta_c = raw.clamp(0.0, theta);
    (theta_c, theta - theta_c)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Marking {
    pub marked: MarkedSet,
    /// Set when every indicator vanishes although a positive fraction was requested.
    pub nothing_to_mark: bool,
}

/// Shortest prefix of `order` whose squared indicators reach `fraction` of `total`.
fn greedy_prefix(order: &[usize], eta: &[f64], fraction: f64, total: f64) -> Vec<usize> {
    if fraction <= 0.0 {
        return Vec::new();
    }
    let target = fraction * total;
    let mut acc = 0.0;
    let mut out = Vec::new();
    for &t in order {
        if acc >= target {
            break;
        }
        acc += eta[t] * eta[t];
        out.push(t);
    }
    out
}

/// `M_F` by largest `eta`, `M_C` by coarsest generation then largest `eta`.
pub fn mark(mesh: &Mesh, indicators: &IndicatorField, theta_f: f64, theta_c: f64) -> Marking {
    let eta = &indicators.eta;
    let mut by_eta: Vec<usize> = (0..eta.len()).collect();
    by_eta.sort_by(|&a, &b| eta[b].total_cmp(&eta[a]).then(a.cmp(&b)));
    // summed in descending order so a full fraction reaches the total exactly
    let total: f64 = by_eta.iter().map(|&t| eta[t] * eta[t]).sum();
    if total == 0.0 {
        return Marking {
            marked: MarkedSet::new(),
            nothing_to_mark: theta_f + theta_c > 0.0,
        };
    }

    let mut marked: MarkedSet = greedy_prefix(&by_eta, eta, theta_f, total).into_iter().collect();
    if theta_c > 0.0 {
        let mut by_generation = by_eta.clone();
        by_generation.sort_by_key(|&t| mesh.generation(t));
        marked.extend(&greedy_prefix(&by_generation, eta, theta_c, total).into_iter().collect());
        marked.insert(by_eta[0]);
    }
    Marking {
        marked,
        nothing_to_mark: false,
    }
}

/// Whether `ratio` matches the predicted rate `1 - 1/gamma` within `tolerance`.
pub fn at_predicted_rate(gamma: f64, ratio: f64, tolerance: f64) -> bool {
    (ratio - (1.0 - 1.0 / gamma)).abs() <= tolerance
}

/// Stability parameter for the next partition.
pub fn update_gamma(gamma: f64, outcome: &SolveOutcome, rate_tolerance: f64) -> f64 {
    let ratio = outcome.final_ratio;
    let on_rate = ratio.is_some_and(|q| at_predicted_rate(gamma, q, rate_tolerance));
    let next = match outcome.exit_code {
        ExitCode::Converged if gamma > 1.0 => {
            if on_rate {
                gamma - 2.0
            } else {
                gamma - 1.0
            }
        }
        ExitCode::Converged => gamma,
        ExitCode::StalledAccept => match ratio {
            _ if on_rate => gamma - 2.0,
            Some(q) if q < 1.0 - 1.0 / gamma => gamma - 1.0,
            _ => gamma,
        },
        ExitCode::Failed => {
            let slow_but_steady = ratio.is_some_and(|q| q < outcome.accepted_rate);
            if outcome.failure == Some(FailureKind::MaxIterations) && slow_but_steady {
                gamma + 2.0
            } else {
                gamma + 1.0
            }
        }
    };
    next.max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveRunConfig {
    /// Cells per side of the initial unit-square mesh.
    pub initial_n: usize,
    pub split: SquareSplit,
    pub gamma0: f64,
    pub marking: MarkingConfig,
    /// `gamma` is overwritten level by level starting from `gamma0`.
    pub solver: SolverConfig,
    pub max_levels: usize,
    /// Stop once a level reaches this many elements.
    pub max_elements: Option<usize>,
    pub rate_tolerance: f64,
    /// Stop after this many levels have converged with `gamma = 1`.
    pub stop_after_converged: Option<usize>,
}

impl Default for AdaptiveRunConfig {
    fn default() -> Self {
        Self {
            initial_n: 6,
            split: SquareSplit::Crisscross,
            gamma0: 10.0,
            marking: MarkingConfig::default(),
            solver: SolverConfig::default(),
            max_levels: 40,
            max_elements: None,
            rate_tolerance: 0.05,
            stop_after_converged: None,
        }
    }
}

impl AdaptiveRunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field: &str, reason: String| ConfigError::Invalid {
            field: field.into(),
            reason,
        };
        if self.initial_n == 0 {
            return Err(invalid("initial_n", "must be positive".into()));
        }
        if !(self.marking.theta > 0.0 && self.marking.theta <= 1.0) {
            return Err(invalid("theta", format!("must lie in (0, 1], got {}", self.marking.theta)));
        }
        if !(self.marking.coarse_split_scale > 0.0) {
            return Err(invalid("coarse_split_scale", "must be positive".into()));
        }
        if !(self.rate_tolerance >= 0.0) {
            return Err(invalid("rate_tolerance", "must be nonnegative".into()));
        }
        if self.max_levels == 0 {
            return Err(invalid("max_levels", "must be positive".into()));
        }
        SolverConfig {
            gamma: self.gamma0,
            ..self.solver.clone()
        }
        .validate()
        .map_err(|e| match e {
            ConfigError::Invalid { field, reason } if field == "gamma" => invalid("gamma0", reason),
            other => other,
        })
    }
}

/// Summary of one adaptive level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    pub level: usize,
    pub elements: usize,
    pub max_h: f64,
    pub exit_code: ExitCode,
    pub failure: Option<FailureKind>,
    pub iterations: usize,
    pub first_residual: f64,
    pub final_residual: f64,
    pub final_ratio: Option<f64>,
    pub gamma: f64,
    pub sigma_final: f64,
    pub eta_total: f64,
    pub zeta_total: f64,
    pub h1_error: Option<f64>,
    pub at_predicted_rate: bool,
    pub residual_history: Vec<f64>,
    pub records: Vec<IterationRecord>,
}

/// Everything the loop produced on one level, handed to an observer.
pub struct LevelData<'a> {
    pub report: &'a LevelReport,
    pub mesh: &'a Mesh,
    pub solution: &'a DiscreteField,
    pub indicators: &'a IndicatorField,
}

pub fn adaptive_solve(config: &AdaptiveRunConfig, problem: &ProblemSpec) -> Result<Vec<LevelReport>, AssemblyError> {
    adaptive_solve_with(config, problem, |_| {})
}

/// Runs the adaptive loop, calling `observer` after each level is solved.
pub fn adaptive_solve_with(
    config: &AdaptiveRunConfig,
    problem: &ProblemSpec,
    mut observer: impl FnMut(&LevelData<'_>),
) -> Result<Vec<LevelReport>, AssemblyError> {
    let mut mesh = Mesh::unit_square(config.initial_n, config.split);
    let mut x = DiscreteField::zeros(mesh.num_vertices());
    let mut gamma = config.gamma0;
    let mut previous_final = None;
    let mut converged_at_one = 0;
    let mut reports = Vec::new();

    for level in 0..config.max_levels {
        let laplacian = assemble_laplacian(&mesh);
        let r = regularizer(&mesh, &x, problem, &laplacian);
        let solver = SolverConfig {
            gamma,
            ..config.solver.clone()
        };
        let outcome = solve_on_partition(&mesh, problem, &x, &solver, &r, previous_final);
        let indicators = compute_indicators(&mesh, &outcome.iterate, problem);
        let h1 = problem.exact.is_some().then(|| h1_error(&mesh, &outcome.iterate, problem)).transpose()?;
        let report = LevelReport {
            level,
            elements: mesh.num_elements(),
            max_h: mesh.max_diameter(),
            exit_code: outcome.exit_code,
            failure: outcome.failure,
            iterations: outcome.iterations(),
            first_residual: outcome.first_residual(),
            final_residual: outcome.final_residual(),
            final_ratio: outcome.final_ratio,
            gamma,
            sigma_final: outcome.sigma_final,
            eta_total: indicators.eta_total(),
            zeta_total: indicators.zeta_total(),
            h1_error: h1,
            at_predicted_rate: gamma > 1.0
                && outcome.exit_code != ExitCode::Failed
                && outcome
                    .final_ratio
                    .is_some_and(|q| at_predicted_rate(gamma, q, config.rate_tolerance)),
            residual_history: outcome.residual_history.clone(),
            records: outcome.records.clone(),
        };
        observer(&LevelData {
            report: &report,
            mesh: &mesh,
            solution: &outcome.iterate,
            indicators: &indicators,
        });
        if outcome.exit_code == ExitCode::Converged && gamma == 1.0 {
            converged_at_one += 1;
        }
        reports.push(report);

        let stop = level + 1 == config.max_levels
            || config.max_elements.is_some_and(|m| mesh.num_elements() >= m)
            || config.stop_after_converged.is_some_and(|k| converged_at_one >= k);
        if stop {
            break;
        }

        let theta = config.marking.theta;
        let marked = match outcome.exit_code {
            ExitCode::Converged => mark(&mesh, &indicators, theta, 0.0),
            ExitCode::StalledAccept => {
                let (tc, tf) = phi_split(theta, outcome.final_residual(), config.marking.coarse_split_scale);
                mark(&mesh, &indicators, tf, tc)
            }
            ExitCode::Failed => Marking {
                marked: mesh.coarsest_elements(),
                nothing_to_mark: false,
            },
        };
        let marked = if marked.nothing_to_mark || marked.marked.is_empty() {
            mesh.coarsest_elements()
        } else {
            marked.marked
        };
        let (fine, parentage) = mesh.refine(&marked)?;
        x = interpolate(&mesh, &fine, &parentage, &outcome.iterate).map_err(AssemblyError::Mesh)?;
        mesh = fine;
        previous_final = (outcome.exit_code != ExitCode::Failed).then(|| outcome.final_residual());
        gamma = update_gamma(gamma, &outcome, config.rate_tolerance);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn outcome(code: ExitCode, ratio: Option<f64>, gamma: f64) -> SolveOutcome {
        SolveOutcome {
            exit_code: code,
            failure: (code == ExitCode::Failed).then_some(FailureKind::Singular),
            iterate: DiscreteField::zeros(1),
            residual_history: vec![1.0],
            final_ratio: ratio,
            sigma_final: 0.9,
            gamma_used: gamma,
            accepted_rate: 1.0 - 1.0 / (2.0 * gamma),
            records: Vec::new(),
        }
    }

    #[test]
    fn phi_split_cases() {
        let (c, f) = phi_split(0.6, 1e12, 100.0);
        assert!((c - 0.6).abs() < 1e-9 && f.abs() < 1e-9);
        let (c, f) = phi_split(0.6, 0.0, 100.0);
        let oracle = 0.6 * (0.5 + (-PI / 2.0).atan() / PI);
        assert!((c - oracle).abs() < 1e-15);
        assert!((c - 0.108).abs() < 1e-3);
        assert_eq!(c + f, 0.6);
    }

    #[test]
    fn gamma_updates() {
        assert_eq!(update_gamma(3.0, &outcome(ExitCode::StalledAccept, Some(0.67), 3.0), 0.05), 1.0);
        assert_eq!(update_gamma(10.0, &outcome(ExitCode::Failed, None, 10.0), 0.05), 11.0);
        // 0.92 sits 0.0031 below 12/13, outside a tolerance of 0.002
        assert_eq!(update_gamma(13.0, &outcome(ExitCode::StalledAccept, Some(0.92), 13.0), 0.002), 12.0);
        // faster than predicted by more than the tolerance keeps gamma
        assert_eq!(update_gamma(10.0, &outcome(ExitCode::StalledAccept, Some(0.98), 10.0), 0.05), 10.0);
        assert_eq!(update_gamma(1.0, &outcome(ExitCode::Converged, Some(0.01), 1.0), 0.05), 1.0);
        assert_eq!(update_gamma(5.0, &outcome(ExitCode::Converged, Some(0.8), 5.0), 0.05), 3.0);
        assert_eq!(update_gamma(5.0, &outcome(ExitCode::Converged, Some(0.1), 5.0), 0.05), 4.0);
        assert_eq!(update_gamma(2.0, &outcome(ExitCode::StalledAccept, Some(0.5), 2.0), 0.05), 1.0);

        let mut slow = outcome(ExitCode::Failed, Some(0.93), 10.0);
        slow.failure = Some(FailureKind::MaxIterations);
        assert_eq!(update_gamma(10.0, &slow, 0.05), 12.0);
        slow.final_ratio = Some(1.3);
        assert_eq!(update_gamma(10.0, &slow, 0.05), 11.0);
    }

    #[test]
    fn dorfler_hand_case() {
        let mesh = Mesh::unit_square(1, SquareSplit::Crisscross);
        let ind = IndicatorField {
            eta: vec![3.0, 2.0, 1.0, 1.0],
            zeta: vec![0.0; 4],
        };
        let m = mark(&mesh, &ind, 0.6, 0.0);
        assert_eq!(m.marked.iter().collect::<Vec<_>>(), vec![0]);
        assert!(mark(&mesh, &ind, 0.0, 0.0).marked.is_empty());
        assert_eq!(mark(&mesh, &ind, 1.0, 0.0).marked.len(), 4);
        let ind0 = IndicatorField {
            eta: vec![0.0, 2.0, 0.0, 1.0],
            zeta: vec![0.0; 4],
        };
        assert_eq!(mark(&mesh, &ind0, 1.0, 0.0).marked.iter().collect::<Vec<_>>(), vec![1, 3]);
    }

    #[test]
    fn all_zero_indicators_flag_nothing_to_mark() {
        let mesh = Mesh::unit_square(2, SquareSplit::Crisscross);
        let ind = IndicatorField {
            eta: vec![0.0; mesh.num_elements()],
            zeta: vec![0.0; mesh.num_elements()],
        };
        let m = mark(&mesh, &ind, 0.5, 0.1);
        assert!(m.marked.is_empty() && m.nothing_to_mark);
    }

    #[test]
    fn coarse_marking_prefers_old_elements() {
        let mesh = Mesh::unit_square(2, SquareSplit::Crisscross);
        let (mesh, _) = mesh.refine(&[0].into_iter().collect()).unwrap();
        let n = mesh.num_elements();
        let eta: Vec<f64> = (0..n).map(|t| if mesh.generation(t) > 0 { 10.0 } else { 1.0 + t as f64 * 0.01 }).collect();
        let ind = IndicatorField {
            eta: eta.clone(),
            zeta: vec![0.0; n],
        };
        let m = mark(&mesh, &ind, 0.0, 1e-6);
        let coarse_best = (0..n)
            .filter(|&t| mesh.generation(t) == 0)
            .max_by(|&a, &b| eta[a].total_cmp(&eta[b]))
            .unwrap();
        let global_best = (0..n).max_by(|&a, &b| eta[a].total_cmp(&eta[b]).then(b.cmp(&a))).unwrap();
        assert!(m.marked.contains(coarse_best));
        assert!(m.marked.contains(global_best));
        assert_eq!(m.marked.len(), 2);
    }

    #[test]
    fn indicators_vanish_for_zero_data() {
        let mesh = Mesh::unit_square(3, SquareSplit::Crisscross);
        let p = ProblemSpec::manufactured(
            "flat",
            Arc::new(|_| 1.0),
            Arc::new(|_| 0.0),
            Arc::new(|_| [0.0; 2]),
            Arc::new(|_| [0.0; 2]),
            1.0,
            Arc::new(crate::problem::Sinusoid { frequency: 0.0 }),
        )
        .unwrap();
        let ind = compute_indicators(&mesh, &DiscreteField::zeros(mesh.num_vertices()), &p);
        assert!(ind.eta.iter().all(|&e| e == 0.0));
        assert_eq!(ind.eta_total(), 0.0);
    }

    #[test]
    fn poisson_indicator_on_two_triangles() {
        // two triangles, u = 1 at the single corner (1,0) of the lower one.
        // Lower T = (0,0),(1,0),(1,1): grad u = (1,-1); upper: grad u = 0.
        // kappa = 1, b = 0: r = -f on both, so
        //   eta_T^2 = h^2 |f|^2_{L2(T)} + h * 2 sqrt(2), h = sqrt(2)
        let mesh = Mesh::unit_square(1, SquareSplit::Diagonal);
        let mut u = DiscreteField::zeros(4);
        u.values_mut()[1] = 1.0;
        let p = ProblemSpec::linear_poisson();
        let ind = compute_indicators(&mesh, &u, &p);
        let h = 2f64.sqrt();
        let rule = QuadratureRule::triangle_order4();
        for t in 0..2 {
            let geo = ElementGeometry::new(&mesh, t);
            let f2: f64 = rule.iter().map(|(b, w)| w * 0.5 * p.load(geo.point(b)).powi(2)).sum();
            let jump = h * h * 2.0;
            assert!((ind.zeta[t] - jump.sqrt()).abs() < 1e-14);
            assert!((ind.eta[t] * ind.eta[t] - (h * h * f2 + jump)).abs() < 1e-12);
        }
        let t2: f64 = ind.eta.iter().map(|e| e * e).sum();
        assert!((ind.eta_total() - t2.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn linear_problem_converges_every_level() {
        let cfg = AdaptiveRunConfig {
            initial_n: 2,
            max_levels: 6,
            solver: SolverConfig {
                tol: 1e-9,
                ..SolverConfig::default()
            },
            gamma0: 1.0,
            ..AdaptiveRunConfig::default()
        };
        let reports = adaptive_solve(&cfg, &ProblemSpec::linear_poisson()).unwrap();
        assert_eq!(reports.len(), 6);
        for r in &reports {
            assert_eq!(r.exit_code, ExitCode::Converged);
        }
        for w in reports[1..].windows(2) {
            assert!(w[1].h1_error.unwrap() < w[0].h1_error.unwrap());
        }
    }

    #[test]
    fn failure_refines_the_coarsest_generation() {
        // kappa is undefined away from u = 0, so the first step always fails
        let p = ProblemSpec::manufactured(
            "fragile",
            Arc::new(|s: f64| if s == 0.0 { 1.0 } else { f64::NAN }),
            Arc::new(|_| 0.0),
            Arc::new(|_| [0.0; 2]),
            Arc::new(|_| [0.0; 2]),
            1.0,
            Arc::new(crate::problem::Sinusoid { frequency: 1.0 }),
        )
        .unwrap();
        let cfg = AdaptiveRunConfig {
            initial_n: 2,
            max_levels: 3,
            ..AdaptiveRunConfig::default()
        };
        let mut zero_solutions = Vec::new();
        let reports = adaptive_solve_with(&cfg, &p, |d| {
            zero_solutions.push(d.solution.values().iter().all(|&v| v == 0.0));
        })
        .unwrap();
        assert!(reports.iter().all(|r| r.exit_code == ExitCode::Failed));
        assert!(zero_solutions.iter().all(|&z| z));
        assert_eq!(reports.iter().map(|r| r.gamma).collect::<Vec<_>>(), vec![10.0, 11.0, 12.0]);
        // every generation-0 element of the 16-element start is bisected
        let start = Mesh::unit_square(2, SquareSplit::Crisscross);
        let (expected, _) = start.refine(&start.coarsest_elements()).unwrap();
        assert_eq!(reports[1].elements, expected.num_elements());
        assert_eq!(reports[1].elements, 32);
    }

    #[test]
    fn run_config_validation_names_fields() {
        let bad = AdaptiveRunConfig {
            gamma0: 0.5,
            ..AdaptiveRunConfig::default()
        };
        assert!(matches!(bad.validate(), Err(ConfigError::Invalid { field, .. }) if field == "gamma0"));
        let bad = AdaptiveRunConfig {
            marking: MarkingConfig {
                theta: 1.5,
                ..MarkingConfig::default()
            },
            ..AdaptiveRunConfig::default()
        };
        assert!(matches!(bad.validate(), Err(ConfigError::Invalid { field, .. }) if field == "theta"));
    }
}
