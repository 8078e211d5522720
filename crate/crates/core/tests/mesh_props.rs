use proptest::prelude::*;
use ptcfem::fem::DiscreteField;
use ptcfem::mesh::{interpolate, MarkedSet, Mesh, SquareSplit};

fn refine_rounds(start: Mesh, rounds: &[Vec<usize>]) -> Mesh {
    let mut mesh = start;
    for picks in rounds {
        let marked: MarkedSet = picks.iter().map(|&k| k % mesh.num_elements()).collect();
        mesh = mesh.refine(&marked).unwrap().0;
    }
    mesh
}

fn split_strategy() -> impl Strategy<Value = SquareSplit> {
    prop_oneof![Just(SquareSplit::Crisscross), Just(SquareSplit::Diagonal)]
}

fn rounds_strategy() -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(any::<usize>(), 1..12), 1..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_refinement_stays_conforming(n in 1usize..4, split in split_strategy(), rounds in rounds_strategy()) {
        let mesh = refine_rounds(Mesh::unit_square(n, split), &rounds);
        prop_assert!(mesh.check_conforming().is_ok());
        let total: f64 = (0..mesh.num_elements()).map(|t| mesh.area(t)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!((0..mesh.num_elements()).all(|t| mesh.area(t) > 0.0));
        for v in 0..mesh.num_vertices() {
            let [x, y] = mesh.vertex(v);
            let on_edge = x.abs() < 1e-14 || y.abs() < 1e-14 || (x - 1.0).abs() < 1e-14 || (y - 1.0).abs() < 1e-14;
            prop_assert_eq!(mesh.is_boundary(v), on_edge);
        }
    }

    #[test]
    fn marked_elements_are_bisected(n in 1usize..4, split in split_strategy(), picks in prop::collection::vec(any::<usize>(), 1..10)) {
        let coarse = Mesh::unit_square(n, split);
        let marked: MarkedSet = picks.iter().map(|&k| k % coarse.num_elements()).collect();
        let (fine, parentage) = coarse.refine(&marked).unwrap();
        prop_assert!(fine.num_elements() >= coarse.num_elements() + marked.len());
        prop_assert_eq!(fine.num_vertices(), coarse.num_vertices() + parentage.parents.len());
        for t in marked.iter() {
            let [a, b] = coarse.refinement_edge(t);
            let mid = [(coarse.vertex(a)[0] + coarse.vertex(b)[0]) / 2.0, (coarse.vertex(a)[1] + coarse.vertex(b)[1]) / 2.0];
            prop_assert!(fine.vertices().iter().any(|p| (p[0] - mid[0]).abs() < 1e-14 && (p[1] - mid[1]).abs() < 1e-14));
        }
    }

    #[test]
    fn shape_regularity_is_bounded(rounds in prop::collection::vec(prop::collection::vec(any::<usize>(), 1..20), 1..7)) {
        let start = Mesh::unit_square(2, SquareSplit::Crisscross);
        let worst_start = (0..start.num_elements()).map(|t| start.shape_ratio(t)).fold(0.0, f64::max);
        let mesh = refine_rounds(start, &rounds);
        let worst = (0..mesh.num_elements()).map(|t| mesh.shape_ratio(t)).fold(0.0, f64::max);
        // Bisection of a crisscross mesh produces only the two similarity classes of right isosceles triangles.
        prop_assert!(worst <= worst_start * (1.0 + 1e-12));
    }

    #[test]
    fn interpolation_reproduces_affine_functions(rounds in rounds_strategy(), c in prop::array::uniform3(-3.0f64..3.0)) {
        let affine = |p: [f64; 2]| c[0] + c[1] * p[0] + c[2] * p[1];
        let coarse = refine_rounds(Mesh::unit_square(2, SquareSplit::Crisscross), &rounds);
        let field = DiscreteField::from_values(coarse.vertices().iter().map(|&p| affine(p)).collect());
        let marked: MarkedSet = (0..coarse.num_elements()).step_by(3).collect();
        let (fine, parentage) = coarse.refine(&marked).unwrap();
        let moved = interpolate(&coarse, &fine, &parentage, &field).unwrap();
        for v in 0..fine.num_vertices() {
            let expect = if fine.is_boundary(v) { 0.0 } else { affine(fine.vertex(v)) };
            prop_assert!((moved.values()[v] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn located_barycentrics_reproduce_the_point(rounds in rounds_strategy(), x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let mesh = refine_rounds(Mesh::unit_square(3, SquareSplit::Diagonal), &rounds);
        let (t, bary) = mesh.locate([x, y]).expect("point inside the unit square");
        let c = mesh.coords(t);
        prop_assert!(bary.iter().all(|&l| l >= -1e-12));
        prop_assert!((bary.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let px: f64 = (0..3).map(|k| bary[k] * c[k][0]).sum();
        let py: f64 = (0..3).map(|k| bary[k] * c[k][1]).sum();
        prop_assert!((px - x).abs() < 1e-12 && (py - y).abs() < 1e-12);
    }

    #[test]
    fn dump_round_trip_after_refinement(rounds in rounds_strategy()) {
        let mesh = refine_rounds(Mesh::unit_square(2, SquareSplit::Crisscross), &rounds);
        let mut buf = Vec::new();
        mesh.write_dump(&mut buf).unwrap();
        let back = Mesh::read_dump(buf.as_slice()).unwrap();
        prop_assert_eq!(back.elements(), mesh.elements());
        prop_assert_eq!(back.vertices(), mesh.vertices());
    }
}
