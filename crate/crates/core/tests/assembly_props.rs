use std::f64::consts::PI;

use proptest::prelude::*;
use ptcfem::fem::{assemble_jacobian, assemble_laplacian, assemble_residual, DiscreteField, FreeDofs};
use ptcfem::mesh::{MarkedSet, Mesh, SquareSplit};
use ptcfem::problem::ProblemSpec;

fn problems() -> Vec<ProblemSpec> {
    vec![
        ProblemSpec::example_1(6e-4).unwrap(),
        ProblemSpec::example_2(6e-4).unwrap(),
        ProblemSpec::example_3(6e-4).unwrap(),
        ProblemSpec::linear_poisson(),
    ]
}

fn graded_mesh() -> Mesh {
    let m = Mesh::unit_square(3, SquareSplit::Crisscross);
    let marked: MarkedSet = (0..m.num_elements()).filter(|t| t % 4 == 1).collect();
    m.refine(&marked).unwrap().0
}

fn field_from(mesh: &Mesh, free_values: &[f64]) -> DiscreteField {
    let dofs = FreeDofs::new(mesh);
    dofs.extend(&free_values[..dofs.len()])
}

/// Fourth-order central difference.
fn d4(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn jacobian_matches_central_differences(vals in prop::collection::vec(-0.2f64..1.2, 64), which in 0usize..4) {
        let problem = &problems()[which];
        let mesh = graded_mesh();
        let u = field_from(&mesh, &vals);
        let dofs = FreeDofs::new(&mesh);
        let jac = assemble_jacobian(&mesh, &u, problem).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for j in 0..dofs.len() {
            let mut plus = u.clone();
            let mut minus = u.clone();
            plus.values_mut()[dofs.vertex(j)] += h;
            minus.values_mut()[dofs.vertex(j)] -= h;
            let rp = assemble_residual(&mesh, &plus, problem).unwrap();
            let rm = assemble_residual(&mesh, &minus, problem).unwrap();
            for i in 0..dofs.len() {
                worst = worst.max(((rp[i] - rm[i]) / (2.0 * h) - jac.get(i, j)).abs());
            }
        }
        prop_assert!(worst <= 1e-5 * jac.max_abs(), "fd mismatch {worst} vs scale {}", jac.max_abs());
    }

    #[test]
    fn coefficient_derivatives_are_consistent(s in -1.5f64..1.5, which in 0usize..4) {
        let p = &problems()[which];
        let h = 1e-5;
        let kd = d4(|x| p.kappa(x), s, h);
        prop_assert!((kd - p.kappa_prime(s)).abs() <= 1e-6 * p.kappa_prime(s).abs().max(1.0));
        for c in 0..2 {
            let bd = d4(|x| p.convection(x)[c], s, h);
            prop_assert!((bd - p.convection_prime(s)[c]).abs() <= 1e-6 * p.convection_prime(s)[c].abs().max(1.0));
        }
    }

    #[test]
    fn manufactured_load_matches_divergence_oracle(x in 0.02f64..0.98, y in 0.02f64..0.98, which in 0usize..3) {
        let p = &problems()[which];
        let w = if which == 1 { 2.0 * PI } else { PI };
        let u = |x: f64, y: f64| (w * x).sin() * (w * y).sin();
        let h = 1e-5;
        let grad = |x: f64, y: f64| [d4(|t| u(t, y), x, h), d4(|t| u(x, t), y, h)];
        let flux = |x: f64, y: f64, c: usize| p.kappa(u(x, y)) * grad(x, y)[c];
        let div = d4(|t| flux(t, y, 0), x, 1e-4) + d4(|t| flux(x, t, 1), y, 1e-4);
        let b = p.convection(u(x, y));
        let g = grad(x, y);
        let oracle = -div + b[0] * g[0] + b[1] * g[1];
        let f = p.load([x, y]);
        prop_assert!((oracle - f).abs() <= 1e-6 * f.abs().max(1.0), "oracle {oracle} vs {f}");
    }

    #[test]
    fn laplacian_is_symmetric_positive(vals in prop::collection::vec(-1.0f64..1.0, 64)) {
        let mesh = graded_mesh();
        let lap = assemble_laplacian(&mesh);
        let n = lap.nrows();
        let v = &vals[..n];
        let lv = lap.matvec(v).unwrap();
        let energy: f64 = v.iter().zip(&lv).map(|(a, b)| a * b).sum();
        prop_assert!(energy > 0.0);
        for i in 0..n {
            for j in 0..n {
                prop_assert!((lap.get(i, j) - lap.get(j, i)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn exact_interpolant_has_small_residual_for_smooth_problem() {
    // The residual of the interpolant of the exact solution shrinks as O(h^2) per entry.
    let p = ProblemSpec::linear_poisson();
    let res = |n: usize| {
        let mesh = Mesh::unit_square(n, SquareSplit::Crisscross);
        let u = DiscreteField::interpolant(&mesh, |q| (PI * q[0]).sin() * (PI * q[1]).sin());
        assemble_residual(&mesh, &u, &p).unwrap().iter().fold(0.0f64, |m, r| m.max(r.abs()))
    };
    let coarse = res(8);
    let fine = res(16);
    assert!(fine < coarse / 3.0, "{coarse} -> {fine}");
}
