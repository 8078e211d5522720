//! Pseudo-transient continuation on a fixed mesh.
//!
//! Each step solves a linear system built from the regularizer `R`, the
//! current Jacobian `J_n` and, for the split variant, a Jacobian `J_bar`
//! frozen at a reference state for the whole partition.

use std::fmt;
use std::str::FromStr;

use crate::adaptivity::jump_indicators;
use crate::error::{ConfigError, LinalgError};
use crate::fem::{assemble_jacobian, assemble_system, DiscreteField, FreeDofs};
use crate::mesh::Mesh;
use crate::problem::ProblemSpec;
use crate::sparse::{norm2, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    BackwardEuler,
    Newmark,
    #[default]
    SigmaSplitNewmark,
    NormalEquationsBe,
    NormalEquationsNewmark,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::BackwardEuler,
        Variant::Newmark,
        Variant::SigmaSplitNewmark,
        Variant::NormalEquationsBe,
        Variant::NormalEquationsNewmark,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::BackwardEuler => "backward_euler",
            Variant::Newmark => "newmark",
            Variant::SigmaSplitNewmark => "sigma_split_newmark",
            Variant::NormalEquationsBe => "normal_equations_be",
            Variant::NormalEquationsNewmark => "normal_equations_newmark",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| ConfigError::Invalid {
                field: "variant".into(),
                reason: format!("unknown solver variant '{s}'"),
            })
    }
}

/// State at which the frozen Jacobian of the split variant is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XbarChoice {
    #[default]
    Zero,
    /// The initial iterate of the partition.
    PreviousSolution,
}

impl XbarChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            XbarChoice::Zero => "zero",
            XbarChoice::PreviousSolution => "previous_solution",
        }
    }
}

impl FromStr for XbarChoice {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero" => Ok(XbarChoice::Zero),
            "previous_solution" => Ok(XbarChoice::PreviousSolution),
            other => Err(ConfigError::Invalid {
                field: "xbar_choice".into(),
                reason: format!("expected 'zero' or 'previous_solution', got '{other}'"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub variant: Variant,
    pub gamma: f64,
    pub sigma0: f64,
    pub k0: f64,
    pub tol: f64,
    /// `M` in the accepted rate `1 - 1/(M gamma)`.
    pub rate_slack: f64,
    pub max_iterations: usize,
    pub xbar_choice: XbarChoice,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            variant: Variant::SigmaSplitNewmark,
            gamma: 10.0,
            sigma0: 0.9,
            k0: 2000.0,
            tol: 1e-7,
            rate_slack: 2.0,
            max_iterations: 50,
            xbar_choice: XbarChoice::Zero,
        }
    }
}

fn invalid(field: &str, reason: String) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason,
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma", format!("must be >= 1, got {}", self.gamma)));
        }
        if !(self.sigma0 > 0.0 && self.sigma0 < 1.0) {
            return Err(invalid("sigma0", format!("must lie in (0, 1), got {}", self.sigma0)));
        }
        if !(self.k0 > 0.0) {
            return Err(invalid("k0", format!("must be positive, got {}", self.k0)));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol", format!("must be positive, got {}", self.tol)));
        }
        if !(self.rate_slack > 1.0) {
            return Err(invalid("rate_slack", format!("must exceed 1, got {}", self.rate_slack)));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations", "must be positive".into()));
        }
        Ok(())
    }

    /// `q_acc = 1 - 1/(M gamma)`.
    pub fn accepted_rate(&self) -> f64 {
        1.0 - 1.0 / (self.rate_slack * self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    /// Index of the latest iterate.
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub residual_history: Vec<f64>,
    pub previous_partition_final_residual: Option<f64>,
}

impl SolverState {
    /// `alpha_0 = |g(x^0)|`, `beta_0 = 1`.
    pub fn new(initial_residual: f64, config: &SolverConfig, previous: Option<f64>) -> Self {
        Self {
            n: 0,
            alpha: initial_residual,
            beta: 1.0,
            sigma: update_sigma(initial_residual, config),
            residual_history: vec![initial_residual],
            previous_partition_final_residual: previous,
        }
    }

    pub fn last_residual(&self) -> f64 {
        *self.residual_history.last().expect("history is never empty")
    }

    fn last_ratio(&self) -> Option<f64> {
        ratio_at(&self.residual_history, self.residual_history.len() - 1)
    }
}

fn ratio_at(history: &[f64], k: usize) -> Option<f64> {
    (k >= 1).then(|| history[k] / history[k - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExitCode {
    Converged,
    StalledAccept,
    Failed,
}

impl ExitCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ExitCode::Converged => "converged",
            ExitCode::StalledAccept => "stalled_accept",
            ExitCode::Failed => "failed",
        }
    }
}

impl fmt::Display for ExitCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExitCode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "converged" => Ok(ExitCode::Converged),
            "stalled_accept" => Ok(ExitCode::StalledAccept),
            "failed" => Ok(ExitCode::Failed),
            other => Err(format!("unknown exit code '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    MaxIterations,
    Singular,
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitDecision {
    Continue,
    Exit(ExitCode),
}

/// One row of the per-iteration log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub n: usize,
    pub residual: f64,
    pub ratio: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub exit_code: ExitCode,
    pub failure: Option<FailureKind>,
    pub iterate: DiscreteField,
    pub residual_history: Vec<f64>,
    pub final_ratio: Option<f64>,
    pub sigma_final: f64,
    pub gamma_used: f64,
    pub accepted_rate: f64,
    pub records: Vec<IterationRecord>,
}

impl SolveOutcome {
    pub fn iterations(&self) -> usize {
        self.residual_history.len() - 1
    }

    pub fn first_residual(&self) -> f64 {
        self.residual_history[0]
    }

    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().expect("history is never empty")
    }
}

/// `sigma = max(sigma0, 1 - r / K0)`, capped at 1.
pub fn update_sigma(residual_norm: f64, config: &SolverConfig) -> f64 {
    config.sigma0.max(1.0 - residual_norm / config.k0).min(1.0)
}

/// New `(alpha, beta)` after the residual `new_residual` has been computed.
pub fn update_alpha(state: &SolverState, new_residual: f64) -> (f64, f64) {
    let previous = state.last_residual();
    let raw = new_residual / previous;
    let beta = if new_residual < previous {
        raw.max(state.beta / 2.0).min(1.0)
    } else if new_residual > previous {
        raw.min(2.0 * state.beta)
    } else {
        raw
    };
    (beta * new_residual, beta)
}

/// Evaluates the exit criteria on a history whose last entry is the newest
/// residual.
pub fn check_exit(state: &SolverState, config: &SolverConfig, initial_residual: f64) -> ExitDecision {
    let h = &state.residual_history;
    let k = h.len() - 1;
    let r_new = h[k];
    if r_new <= config.tol {
        return ExitDecision::Exit(ExitCode::Converged);
    }
    if k >= 2 {
        let r_n = h[k - 1];
        let ratio = r_new / r_n;
        let reference = state
            .previous_partition_final_residual
            .map_or(initial_residual, |p| p.min(initial_residual));
        let stalled = r_new < r_n
            && r_n < reference
            && ratio < config.accepted_rate()
            && ratio > r_n / h[k - 2];
        if stalled {
            return ExitDecision::Exit(ExitCode::StalledAccept);
        }
    }
    if k > config.max_iterations {
        return ExitDecision::Exit(ExitCode::Failed);
    }
    ExitDecision::Continue
}

/// Median with the mean of the two middle values for even counts.
fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Selection threshold `psi` from the jump indicators.
pub fn selection_threshold(zeta: &[f64]) -> f64 {
    let psi_tilde = median(zeta).sqrt();
    if psi_tilde > 1.0 {
        psi_tilde.sqrt()
    } else {
        psi_tilde
    }
}

/// Free-dof activation: dof `j` is active iff some element containing its
/// vertex has `zeta_T > psi`.
pub fn active_dofs(mesh: &Mesh, zeta: &[f64]) -> Vec<bool> {
    let psi = selection_threshold(zeta);
    let dofs = FreeDofs::new(mesh);
    let mut active = vec![false; dofs.len()];
    for (t, e) in mesh.elements().iter().enumerate() {
        if zeta[t] > psi {
            for &v in e {
                if let Some(d) = dofs.dof(v) {
                    active[d] = true;
                }
            }
        }
    }
    active
}

/// `D L D` for the activation pattern computed from `zeta`.
pub fn regularizer_from_indicators(mesh: &Mesh, zeta: &[f64], laplacian: &SparseMatrix) -> SparseMatrix {
    let active = active_dofs(mesh, zeta);
    let mut triplets = Vec::new();
    for i in 0..laplacian.nrows() {
        if !active[i] {
            continue;
        }
        let (cols, vals) = laplacian.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if active[j] {
                triplets.push((i, j, v));
            }
        }
    }
    SparseMatrix::from_triplets(laplacian.nrows(), laplacian.ncols(), &triplets)
}

/// Localized Laplacian built from the flux jumps of `u0`.
pub fn regularizer(mesh: &Mesh, u0: &DiscreteField, problem: &ProblemSpec, laplacian: &SparseMatrix) -> SparseMatrix {
    let zeta = jump_indicators(mesh, u0, problem);
    regularizer_from_indicators(mesh, &zeta, laplacian)
}

/// Solves for the update `w` of one step.
///
/// `j_bar` is only read by [`Variant::SigmaSplitNewmark`].
#[allow(clippy::too_many_arguments)]
pub fn step_system(
    variant: Variant,
    alpha: f64,
    r: &SparseMatrix,
    j_n: &SparseMatrix,
    j_bar: &SparseMatrix,
    gamma: f64,
    sigma: f64,
    residual: &[f64],
) -> Result<Vec<f64>, LinalgError> {
    let neg = |v: Vec<f64>| v.into_iter().map(|x| -x).collect::<Vec<_>>();
    match variant {
        Variant::BackwardEuler => r.add_scaled(j_n, alpha, 1.0)?.direct_solve(&neg(residual.to_vec())),
        Variant::Newmark => r.add_scaled(j_n, alpha, gamma)?.direct_solve(&neg(residual.to_vec())),
        Variant::SigmaSplitNewmark => {
            let blended = j_bar.add_scaled(j_n, 1.0 - sigma, sigma)?;
            r.add_scaled(&blended, alpha, gamma)?.direct_solve(&neg(residual.to_vec()))
        }
        Variant::NormalEquationsBe | Variant::NormalEquationsNewmark => {
            let scale = if variant == Variant::NormalEquationsBe { 1.0 } else { gamma };
            let rtr = r.transpose_product()?;
            let jtj = j_n.transpose_product()?;
            let rhs = neg(j_n.transpose_apply(residual)?);
            rtr.add_scaled(&jtj, alpha, scale)?.direct_solve(&rhs)
        }
    }
}

/// Runs the continuation iteration on one mesh from `x0`.
///
/// A singular step or a non-finite residual ends the solve as
/// [`ExitCode::Failed`]; a failed outcome carries the zero field.
pub fn solve_on_partition(
    mesh: &Mesh,
    problem: &ProblemSpec,
    x0: &DiscreteField,
    config: &SolverConfig,
    r: &SparseMatrix,
    previous_final_residual: Option<f64>,
) -> SolveOutcome {
    let dofs = FreeDofs::new(mesh);
    let gamma = config.gamma;
    let fail = |history: Vec<f64>, records, kind, sigma| SolveOutcome {
        exit_code: ExitCode::Failed,
        failure: Some(kind),
        iterate: DiscreteField::zeros(mesh.num_vertices()),
        final_ratio: ratio_at(&history, history.len() - 1),
        residual_history: history,
        sigma_final: sigma,
        gamma_used: gamma,
        accepted_rate: config.accepted_rate(),
        records,
    };

    let mut x = x0.clone();
    let (mut g, mut j_n) = match assemble_system(mesh, &x, problem) {
        Ok(sys) => sys,
        Err(_) => return fail(vec![f64::NAN], Vec::new(), FailureKind::NonFinite, config.sigma0),
    };
    let r0 = norm2(&g);
    let mut state = SolverState::new(r0, config, previous_final_residual);
    let mut records = vec![IterationRecord {
        n: 0,
        residual: r0,
        ratio: None,
        alpha: state.alpha,
        beta: state.beta,
        sigma: state.sigma,
    }];
    if !r0.is_finite() {
        return fail(state.residual_history, records, FailureKind::NonFinite, state.sigma);
    }

    let done = |state: SolverState, records, code, x: DiscreteField| SolveOutcome {
        exit_code: code,
        failure: None,
        iterate: x,
        final_ratio: state.last_ratio(),
        residual_history: state.residual_history,
        sigma_final: state.sigma,
        gamma_used: gamma,
        accepted_rate: config.accepted_rate(),
        records,
    };
    if r0 <= config.tol {
        return done(state, records, ExitCode::Converged, x);
    }

    let j_bar = if config.variant == Variant::SigmaSplitNewmark {
        let xbar = match config.xbar_choice {
            XbarChoice::Zero => DiscreteField::zeros(mesh.num_vertices()),
            XbarChoice::PreviousSolution => x0.clone(),
        };
        match assemble_jacobian(mesh, &xbar, problem) {
            Ok(j) => j,
            Err(_) => return fail(state.residual_history, records, FailureKind::NonFinite, state.sigma),
        }
    } else {
        SparseMatrix::zeros(dofs.len(), dofs.len())
    };

    loop {
        let w = match step_system(config.variant, state.alpha, r, &j_n, &j_bar, gamma, state.sigma, &g) {
            Ok(w) => w,
            Err(_) => return fail(state.residual_history, records, FailureKind::Singular, state.sigma),
        };
        dofs.add_to(&mut x, &w);
        match assemble_system(mesh, &x, problem) {
            Ok((g_new, j_new)) => {
                g = g_new;
                j_n = j_new;
            }
            Err(_) => return fail(state.residual_history, records, FailureKind::NonFinite, state.sigma),
        }
        let r_new = norm2(&g);
        if !r_new.is_finite() {
            return fail(state.residual_history, records, FailureKind::NonFinite, state.sigma);
        }
        let (alpha, beta) = update_alpha(&state, r_new);
        state.residual_history.push(r_new);
        state.n += 1;
        state.alpha = alpha;
        state.beta = beta;
        state.sigma = update_sigma(r_new, config);
        records.push(IterationRecord {
            n: state.n,
            residual: r_new,
            ratio: state.last_ratio(),
            alpha,
            beta,
            sigma: state.sigma,
        });
        match check_exit(&state, config, r0) {
            ExitDecision::Continue => {}
            ExitDecision::Exit(ExitCode::Failed) => {
                return fail(state.residual_history, records, FailureKind::MaxIterations, state.sigma)
            }
            ExitDecision::Exit(code) => return done(state, records, code, x),
        }
    }
}
