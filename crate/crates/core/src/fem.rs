//! Piecewise-linear Lagrange assembly on a [`Mesh`].
//!
//! Unknowns live on the free (non-boundary) vertices; Dirichlet rows and
//! columns are eliminated. Coefficients `kappa(u)` and `b(u)` are evaluated
//! at quadrature points from the interpolated value of `u`.

use std::io::{self, Write};

use crate::error::AssemblyError;
use crate::mesh::{Mesh, Point, LOCAL_EDGES};
use crate::problem::{ExactSolution, ProblemSpec};
use crate::quadrature::{EdgeRule, QuadratureRule};
use crate::sparse::SparseMatrix;

/// Nodal coefficients of a continuous piecewise-linear function, indexed by
/// mesh vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    values: Vec<f64>,
}

impl DiscreteField {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    /// Nodal interpolant of `f`, zeroed on boundary vertices.
    pub fn interpolant(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..mesh.num_vertices())
            .map(|v| if mesh.is_boundary(v) { 0.0 } else { f(mesh.vertex(v)) })
            .collect();
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at `p`, or `None` outside the mesh.
    pub fn evaluate(&self, mesh: &Mesh, p: Point) -> Option<f64> {
        let (t, bary) = mesh.locate(p)?;
        let e = mesh.element(t);
        Some((0..3).map(|i| bary[i] * self.values[e[i]]).sum())
    }

    /// One value per line, 17 significant digits.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        for v in &self.values {
            writeln!(out, "{v:.16e}")?;
        }
        Ok(())
    }

    fn check(&self, mesh: &Mesh) -> Result<(), AssemblyError> {
        if self.values.len() != mesh.num_vertices() {
            return Err(crate::error::MeshError::FieldLength {
                expected: mesh.num_vertices(),
                got: self.values.len(),
            }
            .into());
        }
        Ok(())
    }
}

/// Numbering of the free vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreeDofs {
    vertex_to_dof: Vec<Option<usize>>,
    dof_to_vertex: Vec<usize>,
}

impl FreeDofs {
    pub fn new(mesh: &Mesh) -> Self {
        let mut dof_to_vertex = Vec::new();
        let vertex_to_dof = (0..mesh.num_vertices())
            .map(|v| {
                (!mesh.is_boundary(v)).then(|| {
                    dof_to_vertex.push(v);
                    dof_to_vertex.len() - 1
                })
            })
            .collect();
        Self {
            vertex_to_dof,
            dof_to_vertex,
        }
    }

    pub fn len(&self) -> usize {
        self.dof_to_vertex.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dof_to_vertex.is_empty()
    }

    pub fn dof(&self, vertex: usize) -> Option<usize> {
        self.vertex_to_dof[vertex]
    }

    pub fn vertex(&self, dof: usize) -> usize {
        self.dof_to_vertex[dof]
    }

    /// Free-vertex coefficients of `field`.
    pub fn restrict(&self, field: &DiscreteField) -> Vec<f64> {
        self.dof_to_vertex.iter().map(|&v| field.values[v]).collect()
    }

    /// Adds `w` to the free vertices of `field`.
    pub fn add_to(&self, field: &mut DiscreteField, w: &[f64]) {
        for (&v, &dw) in self.dof_to_vertex.iter().zip(w) {
            field.values[v] += dw;
        }
    }

    /// Field with the given free values and zero boundary values.
    pub fn extend(&self, free: &[f64]) -> DiscreteField {
        let mut f = DiscreteField::zeros(self.vertex_to_dof.len());
        self.add_to(&mut f, free);
        f
    }
}

/// Area, vertex coordinates and constant barycentric gradients of a triangle.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ElementGeometry {
    pub area: f64,
    pub coords: [Point; 3],
    pub grads: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(mesh: &Mesh, t: usize) -> Self {
        let coords = mesh.coords(t);
        let [p0, p1, p2] = coords;
        let area = mesh.area(t);
        let s = 0.5 / area;
        let grads = [
            [(p1[1] - p2[1]) * s, (p2[0] - p1[0]) * s],
            [(p2[1] - p0[1]) * s, (p0[0] - p2[0]) * s],
            [(p0[1] - p1[1]) * s, (p1[0] - p0[0]) * s],
        ];
        Self {
            area,
            coords,
            grads,
        }
    }

    pub fn point(&self, bary: &[f64; 3]) -> Point {
        let c = &self.coords;
        [
            bary[0] * c[0][0] + bary[1] * c[1][0] + bary[2] * c[2][0],
            bary[0] * c[0][1] + bary[1] * c[1][1] + bary[2] * c[2][1],
        ]
    }

    /// Constant gradient of the field with nodal values `u`.
    pub fn gradient(&self, u: [f64; 3]) -> [f64; 2] {
        let g = &self.grads;
        [
            u[0] * g[0][0] + u[1] * g[1][0] + u[2] * g[2][0],
            u[0] * g[0][1] + u[1] * g[1][1] + u[2] * g[2][1],
        ]
    }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn local_values(mesh: &Mesh, u: &DiscreteField, t: usize) -> [f64; 3] {
    let e = mesh.element(t);
    [u.values[e[0]], u.values[e[1]], u.values[e[2]]]
}

fn non_finite(element: usize, quantity: &'static str) -> AssemblyError {
    AssemblyError::NonFinite { element, quantity }
}

/// Residual `g(u)` and, optionally, Jacobian `g'(u)` over the free vertices.
fn assemble(
    mesh: &Mesh,
    u: &DiscreteField,
    problem: &ProblemSpec,
    with_jacobian: bool,
) -> Result<(Vec<f64>, Option<SparseMatrix>), AssemblyError> {
    u.check(mesh)?;
    let dofs = FreeDofs::new(mesh);
    let rule = QuadratureRule::triangle_order4();
    let mut residual = vec![0.0; dofs.len()];
    let mut triplets = Vec::with_capacity(if with_jacobian { 9 * mesh.num_elements() } else { 0 });

    for t in 0..mesh.num_elements() {
        let geo = ElementGeometry::new(mesh, t);
        let uloc = local_values(mesh, u, t);
        let grad_u = geo.gradient(uloc);
        let mut r_loc = [0.0; 3];
        let mut j_loc = [[0.0; 3]; 3];
        for (bary, w) in rule.iter() {
            let wq = w * geo.area;
            let uq = bary[0] * uloc[0] + bary[1] * uloc[1] + bary[2] * uloc[2];
            let kappa = problem.kappa(uq);
            let b = problem.convection(uq);
            let f = problem.load(geo.point(bary));
            if !(kappa.is_finite() && b[0].is_finite() && b[1].is_finite()) {
                return Err(non_finite(t, "coefficient"));
            }
            if !f.is_finite() {
                return Err(non_finite(t, "load"));
            }
            let b_grad_u = dot(b, grad_u);
            for i in 0..3 {
                let gi = geo.grads[i];
                r_loc[i] += wq * (kappa * dot(grad_u, gi) + (b_grad_u - f) * bary[i]);
            }
            if with_jacobian {
                let dkappa = problem.kappa_prime(uq);
                let db = problem.convection_prime(uq);
                if !(dkappa.is_finite() && db[0].is_finite() && db[1].is_finite()) {
                    return Err(non_finite(t, "coefficient derivative"));
                }
                let db_grad_u = dot(db, grad_u);
                for i in 0..3 {
                    let gi = geo.grads[i];
                    let grad_u_gi = dot(grad_u, gi);
                    for j in 0..3 {
                        let gj = geo.grads[j];
                        j_loc[i][j] += wq
                            * (kappa * dot(gj, gi)
                                + dkappa * bary[j] * grad_u_gi
                                + dot(b, gj) * bary[i]
                                + db_grad_u * bary[j] * bary[i]);
                    }
                }
            }
        }
        let e = mesh.element(t);
        for i in 0..3 {
            let Some(di) = dofs.dof(e[i]) else { continue };
            residual[di] += r_loc[i];
            if with_jacobian {
                for j in 0..3 {
                    if let Some(dj) = dofs.dof(e[j]) {
                        triplets.push((di, dj, j_loc[i][j]));
                    }
                }
            }
        }
    }
    if let Some(i) = residual.iter().position(|r| !r.is_finite()) {
        return Err(non_finite(i, "residual"));
    }
    let jac = with_jacobian.then(|| SparseMatrix::from_triplets(dofs.len(), dofs.len(), &triplets));
    Ok((residual, jac))
}

/// `(kappa(u) grad u, grad phi_i) + (b(u) . grad u, phi_i) - (f, phi_i)` for
/// every free vertex `i`.
pub fn assemble_residual(
    mesh: &Mesh,
    u: &DiscreteField,
    problem: &ProblemSpec,
) -> Result<Vec<f64>, AssemblyError> {
    assemble(mesh, u, problem, false).map(|(r, _)| r)
}

/// Jacobian of [`assemble_residual`] with respect to the free coefficients.
pub fn assemble_jacobian(
    mesh: &Mesh,
    u: &DiscreteField,
    problem: &ProblemSpec,
) -> Result<SparseMatrix, AssemblyError> {
    assemble(mesh, u, problem, true).map(|(_, j)| j.expect("requested"))
}

/// Residual and Jacobian in one pass.
pub fn assemble_system(
    mesh: &Mesh,
    u: &DiscreteField,
    problem: &ProblemSpec,
) -> Result<(Vec<f64>, SparseMatrix), AssemblyError> {
    assemble(mesh, u, problem, true).map(|(r, j)| (r, j.expect("requested")))
}

/// Stiffness matrix `(grad phi_j, grad phi_i)` over the free vertices.
pub fn assemble_laplacian(mesh: &Mesh) -> SparseMatrix {
    let dofs = FreeDofs::new(mesh);
    let mut triplets = Vec::with_capacity(9 * mesh.num_elements());
    for t in 0..mesh.num_elements() {
        let geo = ElementGeometry::new(mesh, t);
        let e = mesh.element(t);
        for i in 0..3 {
            let Some(di) = dofs.dof(e[i]) else { continue };
            for j in 0..3 {
                if let Some(dj) = dofs.dof(e[j]) {
                    triplets.push((di, dj, geo.area * dot(geo.grads[i], geo.grads[j])));
                }
            }
        }
    }
    SparseMatrix::from_triplets(dofs.len(), dofs.len(), &triplets)
}

/// `(|u - u*|_0^2 + |grad u - grad u*|_0^2)^(1/2)`.
pub fn h1_error_against(mesh: &Mesh, u: &DiscreteField, exact: &dyn ExactSolution) -> f64 {
    let rule = QuadratureRule::triangle_order4();
    let mut sum = 0.0;
    for t in 0..mesh.num_elements() {
        let geo = ElementGeometry::new(mesh, t);
        let uloc = local_values(mesh, u, t);
        let g = geo.gradient(uloc);
        for (bary, w) in rule.iter() {
            let p = geo.point(bary);
            let uq = bary[0] * uloc[0] + bary[1] * uloc[1] + bary[2] * uloc[2];
            let ge = exact.gradient(p);
            let d = uq - exact.value(p);
            sum += w * geo.area * (d * d + (g[0] - ge[0]).powi(2) + (g[1] - ge[1]).powi(2));
        }
    }
    sum.sqrt()
}

pub fn h1_error(mesh: &Mesh, u: &DiscreteField, problem: &ProblemSpec) -> Result<f64, AssemblyError> {
    u.check(mesh)?;
    let exact = problem
        .exact
        .as_deref()
        .ok_or_else(|| AssemblyError::NoExactSolution(problem.name.clone()))?;
    Ok(h1_error_against(mesh, u, exact))
}

/// Squared `L2` norm over each local edge of `t` of the normal-flux jump
/// `[[kappa(u) grad u . n]]`. Boundary edges contribute zero.
pub fn edge_jump(mesh: &Mesh, u: &DiscreteField, problem: &ProblemSpec, t: usize) -> [f64; 3] {
    let rule = EdgeRule::gauss3();
    let geo = ElementGeometry::new(mesh, t);
    let grad_t = geo.gradient(local_values(mesh, u, t));
    let e = mesh.element(t);
    let mut out = [0.0; 3];
    for (i, [p, q]) in LOCAL_EDGES.iter().enumerate() {
        let Some(s) = mesh.neighbor(t, i) else { continue };
        let grad_s = ElementGeometry::new(mesh, s).gradient(local_values(mesh, u, s));
        let (a, b) = (mesh.vertex(e[*p]), mesh.vertex(e[*q]));
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        // outward unit normal of a counter-clockwise triangle
        let normal = [(b[1] - a[1]) / len, (a[0] - b[0]) / len];
        let jump = dot([grad_t[0] - grad_s[0], grad_t[1] - grad_s[1]], normal);
        let (ua, ub) = (u.values[e[*p]], u.values[e[*q]]);
        // u is continuous, so kappa(u) agrees on both sides of the edge
        let integral: f64 = rule
            .iter()
            .map(|(tau, w)| {
                let flux = problem.kappa((1.0 - tau) * ua + tau * ub) * jump;
                w * flux * flux
            })
            .sum();
        out[i] = len * integral;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::SquareSplit;
    use std::sync::Arc;

    #[test]
    fn zero_state_zero_load_gives_zero_residual() {
        let mesh = Mesh::unit_square(3, SquareSplit::Crisscross);
        let p = ProblemSpec::manufactured(
            "zero",
            Arc::new(|s| 2.0 + s * s),
            Arc::new(|s| 2.0 * s),
            Arc::new(|s| [s, 1.0]),
            Arc::new(|_| [1.0, 0.0]),
            2.0,
            Arc::new(Zero),
        )
        .unwrap();
        let r = assemble_residual(&mesh, &DiscreteField::zeros(mesh.num_vertices()), &p).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
    }

    struct Zero;
    impl ExactSolution for Zero {
        fn value(&self, _: Point) -> f64 {
            0.0
        }
        fn gradient(&self, _: Point) -> [f64; 2] {
            [0.0; 2]
        }
        fn laplacian(&self, _: Point) -> f64 {
            0.0
        }
    }

    struct Affine;
    impl ExactSolution for Affine {
        fn value(&self, p: Point) -> f64 {
            0.3 + 2.0 * p[0] - 1.5 * p[1]
        }
        fn gradient(&self, _: Point) -> [f64; 2] {
            [2.0, -1.5]
        }
        fn laplacian(&self, _: Point) -> f64 {
            0.0
        }
    }

    #[test]
    fn single_free_node_stiffness_action() {
        // crisscross n=1: the center is the only free vertex; with u = phi_c
        // and kappa = 1 the residual entry is (grad phi_c, grad phi_c) = 4,
        // matching four right triangles with legs sqrt(2)/2 contributing 1 each
        let mesh = Mesh::unit_square(1, SquareSplit::Crisscross);
        let mut u = DiscreteField::zeros(mesh.num_vertices());
        u.values_mut()[4] = 1.0;
        let p = ProblemSpec::manufactured(
            "unit",
            Arc::new(|_| 1.0),
            Arc::new(|_| 0.0),
            Arc::new(|_| [0.0; 2]),
            Arc::new(|_| [0.0; 2]),
            1.0,
            Arc::new(Zero),
        )
        .unwrap();
        let r = assemble_residual(&mesh, &u, &p).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0] - 4.0).abs() < 1e-14);
        let lap = assemble_laplacian(&mesh);
        assert!((lap.get(0, 0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn laplacian_symmetry_and_row_sums() {
        let mesh = Mesh::unit_square(5, SquareSplit::Crisscross);
        let (fine, _) = mesh.refine(&[3, 17, 40].into_iter().collect()).unwrap();
        let a = assemble_laplacian(&fine);
        let at = a.transpose();
        let diff = a.add_scaled(&at, 1.0, -1.0).unwrap();
        assert!(diff.max_abs() <= 1e-14);

        // rows of vertices whose neighbours are all free sum to zero
        let dofs = FreeDofs::new(&fine);
        let mut touches_boundary = vec![false; fine.num_vertices()];
        for e in fine.elements() {
            if e.iter().any(|&v| fine.is_boundary(v)) {
                e.iter().for_each(|&v| touches_boundary[v] = true);
            }
        }
        let mut checked = 0;
        for d in 0..dofs.len() {
            if !touches_boundary[dofs.vertex(d)] {
                let s: f64 = a.row(d).1.iter().sum();
                assert!(s.abs() < 1e-13, "row {d} sums to {s}");
                checked += 1;
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn constant_kappa_jacobian_is_scaled_laplacian() {
        let mesh = Mesh::unit_square(4, SquareSplit::Crisscross);
        let c = 3.5;
        let p = ProblemSpec::manufactured(
            "const",
            Arc::new(move |_| c),
            Arc::new(|_| 0.0),
            Arc::new(|_| [0.0; 2]),
            Arc::new(|_| [0.0; 2]),
            c,
            Arc::new(crate::problem::Sinusoid { frequency: 1.0 }),
        )
        .unwrap();
        let u = DiscreteField::interpolant(&mesh, |q| q[0] * q[1]);
        let j = assemble_jacobian(&mesh, &u, &p).unwrap();
        let lap = assemble_laplacian(&mesh);
        let d = j.add_scaled(&lap, 1.0, -c).unwrap();
        assert!(d.max_abs() < 1e-13);
        let asym = j.add_scaled(&j.transpose(), 1.0, -1.0).unwrap();
        assert!(asym.max_abs() <= 1e-14);
    }

    #[test]
    fn reaction_term_vanishes_at_zero_state() {
        // at u = 0 only the kappa(0) and b(0) terms survive
        let mesh = Mesh::unit_square(3, SquareSplit::Crisscross);
        let p = ProblemSpec::example_1(6e-4).unwrap();
        let u = DiscreteField::zeros(mesh.num_vertices());
        let j = assemble_jacobian(&mesh, &u, &p).unwrap();
        let p_no_db = ProblemSpec {
            convection_prime: Arc::new(|_| [0.0; 2]),
            kappa_prime: Arc::new(|_| 0.0),
            ..p.clone()
        };
        let j2 = assemble_jacobian(&mesh, &u, &p_no_db).unwrap();
        assert_eq!(j, j2);
    }

    #[test]
    fn h1_error_cases() {
        let mesh = Mesh::unit_square(4, SquareSplit::Diagonal);
        let u = DiscreteField::from_values(mesh.vertices().iter().map(|&q| Affine.value(q)).collect());
        assert!(h1_error_against(&mesh, &u, &Affine) < 1e-13);

        let mesh = Mesh::unit_square(16, SquareSplit::Crisscross);
        let p = ProblemSpec::linear_poisson();
        let e = h1_error(&mesh, &DiscreteField::zeros(mesh.num_vertices()), &p).unwrap();
        let closed = (0.25 + std::f64::consts::PI.powi(2) / 2.0).sqrt();
        assert!((e - closed).abs() < 1e-3, "{e} vs {closed}");

        let mut no_exact = p.clone();
        no_exact.exact = None;
        assert!(matches!(
            h1_error(&mesh, &DiscreteField::zeros(mesh.num_vertices()), &no_exact),
            Err(AssemblyError::NoExactSolution(_))
        ));
    }

    #[test]
    fn jumps_vanish_for_affine_fields() {
        let mesh = Mesh::unit_square(3, SquareSplit::Crisscross);
        let u = DiscreteField::from_values(mesh.vertices().iter().map(|&q| Affine.value(q)).collect());
        let p = ProblemSpec::linear_poisson();
        for t in 0..mesh.num_elements() {
            for j in edge_jump(&mesh, &u, &p, t) {
                assert!(j.abs() < 1e-24);
            }
        }
    }

    #[test]
    fn kink_jump_on_two_triangle_patch() {
        // square split along the diagonal (0,0)-(1,1); u = 1 at (1,0), else 0.
        // Lower triangle: grad u = (1, -1); upper: grad u = 0.
        // Normal of the diagonal is (1,-1)/sqrt(2): slope difference sqrt(2),
        // edge length sqrt(2) -> jump integral sqrt(2) * 2.
        let mesh = Mesh::unit_square(1, SquareSplit::Diagonal);
        let mut u = DiscreteField::zeros(4);
        u.values_mut()[1] = 1.0;
        let p = ProblemSpec::linear_poisson();
        let lower = (0..2).find(|&t| mesh.element(t).contains(&1)).unwrap();
        let jumps = edge_jump(&mesh, &u, &p, lower);
        let interior: Vec<f64> = jumps.iter().copied().filter(|&j| j != 0.0).collect();
        assert_eq!(interior.len(), 1);
        assert!((interior[0] - 2f64.sqrt() * 2.0).abs() < 1e-14);
        // the two boundary edges contribute exactly zero
        assert_eq!(jumps.iter().filter(|&&j| j == 0.0).count(), 2);
    }

    #[test]
    fn field_dump_format() {
        let mut buf = Vec::new();
        DiscreteField::from_values(vec![0.1, -2.0]).write_dump(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1.0000000000000001e-1\n-2.0000000000000000e0\n");
    }
}
