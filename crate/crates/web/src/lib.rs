//! Browser bindings: an adaptive run with its final mesh, a single-partition
//! solve with its residual history, and the marking/sigma parameter curves.

use ptcfem::adaptivity::{adaptive_solve_with, phi_split, AdaptiveRunConfig, MarkingConfig};
use ptcfem::cli::{default_gamma0, levels_csv};
use ptcfem::fem::{assemble_laplacian, DiscreteField};
use ptcfem::mesh::{Mesh, SquareSplit};
use ptcfem::problem::ProblemSpec;
use ptcfem::solver::{regularizer, solve_on_partition, update_sigma, SolverConfig, Variant};
use wasm_bindgen::prelude::*;

fn problem(name: &str, epsilon: f64) -> Result<ProblemSpec, JsError> {
    let eps = (name != "linear_poisson").then_some(epsilon);
    ProblemSpec::by_name(name, eps).map_err(|e| JsError::new(&e.to_string()))
}

/// Final level of an adaptive run plus the per-level report.
#[wasm_bindgen]
pub struct RunResult {
    levels_csv: String,
    coords: Vec<f64>,
    triangles: Vec<u32>,
    solution: Vec<f64>,
}

#[wasm_bindgen]
impl RunResult {
    /// `levels.csv` contents.
    #[wasm_bindgen(getter, js_name = levelsCsv)]
    pub fn levels_csv(&self) -> String {
        self.levels_csv.clone()
    }

    /// Interleaved `x, y` per vertex.
    #[wasm_bindgen(getter)]
    pub fn coords(&self) -> Vec<f64> {
        self.coords.clone()
    }

    /// Three vertex indices per element.
    #[wasm_bindgen(getter)]
    pub fn triangles(&self) -> Vec<u32> {
        self.triangles.clone()
    }

    /// Nodal values of the final iterate.
    #[wasm_bindgen(getter)]
    pub fn solution(&self) -> Vec<f64> {
        self.solution.clone()
    }
}

/// Runs the adaptive loop until `max_levels` or `max_elements` is reached.
/// A non-positive `gamma0` selects the per-problem default.
#[wasm_bindgen(js_name = adaptiveRun)]
pub fn adaptive_run(
    name: &str,
    epsilon: f64,
    gamma0: f64,
    max_levels: usize,
    max_elements: usize,
) -> Result<RunResult, JsError> {
    let problem = problem(name, epsilon)?;
    let config = AdaptiveRunConfig {
        gamma0: if gamma0 > 0.0 { gamma0 } else { default_gamma0(name) },
        max_levels,
        max_elements: Some(max_elements),
        ..Default::default()
    };
    config.validate().map_err(|e| JsError::new(&e.to_string()))?;
    let mut last: Option<(Mesh, DiscreteField)> = None;
    let reports = adaptive_solve_with(&config, &problem, |d| {
        last = Some((d.mesh.clone(), d.solution.clone()));
    })
    .map_err(|e| JsError::new(&e.to_string()))?;
    let (mesh, solution) = last.ok_or_else(|| JsError::new("no level was solved"))?;
    Ok(RunResult {
        levels_csv: levels_csv(&reports),
        coords: mesh.vertices().iter().flat_map(|p| [p[0], p[1]]).collect(),
        triangles: mesh.elements().iter().flat_map(|e| e.map(|v| v as u32)).collect(),
        solution: solution.into_values(),
    })
}

/// Residual history of one solve from the zero field on the `n`-by-`n`
/// crisscross mesh, with the regularizer built from that field.
#[wasm_bindgen(js_name = partitionHistory)]
pub fn partition_history(
    name: &str,
    epsilon: f64,
    n: usize,
    variant: &str,
    gamma: f64,
    max_iterations: usize,
) -> Result<Vec<f64>, JsError> {
    let problem = problem(name, epsilon)?;
    let variant: Variant = variant.parse().map_err(|e: ptcfem::error::ConfigError| JsError::new(&e.to_string()))?;
    let config = SolverConfig {
        variant,
        gamma,
        max_iterations,
        ..Default::default()
    };
    config.validate().map_err(|e| JsError::new(&e.to_string()))?;
    if n == 0 || n > 64 {
        return Err(JsError::new("n must be between 1 and 64"));
    }
    let mesh = Mesh::unit_square(n, SquareSplit::Crisscross);
    let x0 = DiscreteField::zeros(mesh.num_vertices());
    let r = regularizer(&mesh, &x0, &problem, &assemble_laplacian(&mesh));
    Ok(solve_on_partition(&mesh, &problem, &x0, &config, &r, None).residual_history)
}

/// `samples` rows of `r, theta_C, theta_F, sigma` for residuals spaced
/// logarithmically in `[1e-2, r_max]`, flattened.
#[wasm_bindgen(js_name = parameterCurves)]
pub fn parameter_curves(theta: f64, r_max: f64, samples: usize) -> Vec<f64> {
    let scale = MarkingConfig::default().coarse_split_scale;
    let solver = SolverConfig::default();
    let (lo, hi) = (1e-2f64.ln(), r_max.max(1e-1).ln());
    (0..samples.max(2))
        .flat_map(|k| {
            let r = (lo + (hi - lo) * k as f64 / (samples.max(2) - 1) as f64).exp();
            let (tc, tf) = phi_split(theta, r, scale);
            [r, tc, tf, update_sigma(r, &solver)]
        })
        .collect()
}
