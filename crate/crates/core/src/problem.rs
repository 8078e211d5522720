//! Quasilinear convection-diffusion problems
//! `-div(kappa(u) grad u) + b(u) . grad u = f` on the unit square with
//! homogeneous Dirichlet data.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::ConfigError;
use crate::mesh::Point;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(f64) -> [f64; 2] + Send + Sync>;
pub type LoadFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// A smooth exact solution with the derivatives needed to manufacture a load.
pub trait ExactSolution: Send + Sync {
    fn value(&self, p: Point) -> f64;
    fn gradient(&self, p: Point) -> [f64; 2];
    fn laplacian(&self, p: Point) -> f64;
}

/// `sin(w pi x) sin(w pi y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub frequency: f64,
}

impl ExactSolution for Sinusoid {
    fn value(&self, p: Point) -> f64 {
        let w = self.frequency * PI;
        (w * p[0]).sin() * (w * p[1]).sin()
    }

    fn gradient(&self, p: Point) -> [f64; 2] {
        let w = self.frequency * PI;
        let (sx, cx) = (w * p[0]).sin_cos();
        let (sy, cy) = (w * p[1]).sin_cos();
        [w * cx * sy, w * sx * cy]
    }

    fn laplacian(&self, p: Point) -> f64 {
        let w = self.frequency * PI;
        -2.0 * w * w * self.value(p)
    }
}

/// Diffusion coefficient `k + sum_i 1 / (eps + (s - c_i)^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpDiffusion {
    pub floor: f64,
    pub epsilon: f64,
    pub centers: Vec<f64>,
}

impl BumpDiffusion {
    pub fn value(&self, s: f64) -> f64 {
        self.floor
            + self
                .centers
                .iter()
                .map(|c| 1.0 / (self.epsilon + (s - c) * (s - c)))
                .sum::<f64>()
    }

    pub fn derivative(&self, s: f64) -> f64 {
        self.centers
            .iter()
            .map(|c| {
                let d = self.epsilon + (s - c) * (s - c);
                -2.0 * (s - c) / (d * d)
            })
            .sum()
    }
}

/// Coefficients and data of one problem instance.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub kappa: ScalarFn,
    pub kappa_prime: ScalarFn,
    pub convection: VectorFn,
    pub convection_prime: VectorFn,
    pub load: LoadFn,
    pub exact: Option<Arc<dyn ExactSolution>>,
    /// Lower bound of `kappa`.
    pub kappa_floor: f64,
    pub epsilon: Option<f64>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("epsilon", &self.epsilon)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

impl ProblemSpec {
    /// Manufactures the load from the strong form,
    /// `f = -kappa'(u)|grad u|^2 - kappa(u) lap u + b(u) . grad u`.
    #[allow(clippy::too_many_arguments)]
    pub fn manufactured(
        name: impl Into<String>,
        kappa: ScalarFn,
        kappa_prime: ScalarFn,
        convection: VectorFn,
        convection_prime: VectorFn,
        kappa_floor: f64,
        exact: Arc<dyn ExactSolution>,
    ) -> Result<Self, ConfigError> {
        if !(kappa_floor > 0.0) {
            return Err(ConfigError::Invalid {
                field: "kappa".into(),
                reason: format!("lower bound {kappa_floor} must be positive"),
            });
        }
        let load = {
            let (kappa, kappa_prime, convection, exact) =
                (kappa.clone(), kappa_prime.clone(), convection.clone(), exact.clone());
            Arc::new(move |p: Point| {
                let u = exact.value(p);
                let g = exact.gradient(p);
                let b = convection(u);
                -kappa_prime(u) * (g[0] * g[0] + g[1] * g[1]) - kappa(u) * exact.laplacian(p)
                    + b[0] * g[0]
                    + b[1] * g[1]
            })
        };
        Ok(Self {
            name: name.into(),
            kappa,
            kappa_prime,
            convection,
            convection_prime,
            load,
            exact: Some(exact),
            kappa_floor,
            epsilon: None,
        })
    }

    fn bump_problem(
        name: &str,
        epsilon: f64,
        centers: Vec<f64>,
        with_convection: bool,
        frequency: f64,
    ) -> Result<Self, ConfigError> {
        if !(epsilon > 0.0) {
            return Err(ConfigError::Invalid {
                field: "epsilon".into(),
                reason: format!("must be positive, got {epsilon}"),
            });
        }
        let center = centers[0];
        let bump = BumpDiffusion {
            floor: 1.0,
            epsilon,
            centers,
        };
        let (kappa, kappa_prime): (ScalarFn, ScalarFn) = {
            let (b1, b2) = (bump.clone(), bump);
            (Arc::new(move |s| b1.value(s)), Arc::new(move |s| b2.derivative(s)))
        };
        let (convection, convection_prime): (VectorFn, VectorFn) = if with_convection {
            (
                Arc::new(move |s| [s - center, (s - center) * (s - center)]),
                Arc::new(move |s| [1.0, 2.0 * (s - center)]),
            )
        } else {
            (Arc::new(|_| [0.0, 0.0]), Arc::new(|_| [0.0, 0.0]))
        };
        let mut spec = Self::manufactured(
            name,
            kappa,
            kappa_prime,
            convection,
            convection_prime,
            1.0,
            Arc::new(Sinusoid { frequency }),
        )?;
        spec.epsilon = Some(epsilon);
        Ok(spec)
    }

    /// Nonlinear convection-diffusion with one internal layer at `u = 0.5`.
    pub fn example_1(epsilon: f64) -> Result<Self, ConfigError> {
        Self::bump_problem("example_1", epsilon, vec![0.5], true, 1.0)
    }

    /// Same operator as [`ProblemSpec::example_1`] with exact solution
    /// `sin 2 pi x sin 2 pi y`.
    pub fn example_2(epsilon: f64) -> Result<Self, ConfigError> {
        Self::bump_problem("example_2", epsilon, vec![0.5], true, 2.0)
    }

    /// Nonlinear diffusion with layers at `u = 0.5` and `u = 0.8`, no convection.
    pub fn example_3(epsilon: f64) -> Result<Self, ConfigError> {
        Self::bump_problem("example_3", epsilon, vec![0.5, 0.8], false, 1.0)
    }

    /// `-lap u = 2 pi^2 sin pi x sin pi y`.
    pub fn linear_poisson() -> Self {
        Self::manufactured(
            "linear_poisson",
            Arc::new(|_| 1.0),
            Arc::new(|_| 0.0),
            Arc::new(|_| [0.0, 0.0]),
            Arc::new(|_| [0.0, 0.0]),
            1.0,
            Arc::new(Sinusoid { frequency: 1.0 }),
        )
        .expect("constant coefficient is positive")
    }

    /// Looks up a named problem; the bump problems require `epsilon`.
    pub fn by_name(name: &str, epsilon: Option<f64>) -> Result<Self, ConfigError> {
        let eps = || epsilon.ok_or_else(|| ConfigError::Missing("epsilon".into()));
        match name {
            "linear_poisson" => Ok(Self::linear_poisson()),
            "example_1" => Self::example_1(eps()?),
            "example_2" => Self::example_2(eps()?),
            "example_3" => Self::example_3(eps()?),
            other => Err(ConfigError::UnknownProblem(other.to_string())),
        }
    }

    pub fn kappa(&self, s: f64) -> f64 {
        (self.kappa)(s)
    }

    pub fn kappa_prime(&self, s: f64) -> f64 {
        (self.kappa_prime)(s)
    }

    pub fn convection(&self, s: f64) -> [f64; 2] {
        (self.convection)(s)
    }

    pub fn convection_prime(&self, s: f64) -> [f64; 2] {
        (self.convection_prime)(s)
    }

    pub fn load(&self, p: Point) -> f64 {
        (self.load)(p)
    }
}
