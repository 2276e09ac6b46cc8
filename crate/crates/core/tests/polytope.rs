mod common;

use std::collections::BTreeMap;

use cic_core::instance::{independent_aux_instance, inst_a, point_mass_instance, random_instance, BATCH_ALPHA};
use cic_core::polytope::{
    fm_eliminate, lift, polygon_contains, project_halfplanes, project_region, LinSystem, Polygon2D,
};
use cic_core::region::{build_system, ConstraintSystem, LinearInequality, RateVar, Sense, SystemKind};
use common::witness::{min_violation, witness_member};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

fn row(id: &str, vars: &[RateVar], sense: Sense, rhs: f64) -> LinearInequality {
    LinearInequality {
        id: id.into(),
        coeffs: vars.iter().map(|&v| (v, 1.0)).collect::<BTreeMap<_, _>>(),
        sense,
        rhs,
        rhs_terms: vec![],
        term_values: vec![],
    }
}

fn with_bounds(mut rows: Vec<LinearInequality>) -> ConstraintSystem {
    for v in RateVar::ALL {
        rows.push(row(&format!("nn.{v}"), &[v], Sense::Geq, 0.0));
    }
    ConstraintSystem { kind: SystemKind::Corrected, inequalities: rows }
}

fn assert_vertices(p: &Polygon2D, expected: &[[f64; 2]], tol: f64) {
    assert_eq!(p.vertices.len(), expected.len(), "{p:?}");
    for e in expected {
        assert!(
            p.vertices.iter().any(|v| (v[0] - e[0]).abs() < tol && (v[1] - e[1]).abs() < tol),
            "missing {e:?} in {p:?}"
        );
    }
}

#[test]
fn degenerate_joint_projects_to_origin() {
    let j = point_mass_instance().joint().unwrap();
    for kind in [SystemKind::Dmt, SystemKind::Corrected] {
        let p = project_region(&build_system(kind, &j).unwrap());
        assert_vertices(&p, &[[0.0, 0.0]], 1e-12);
    }
}

#[test]
fn decoupled_box_is_the_unit_square() {
    use RateVar::*;
    let sys = with_bounds(vec![
        row("b.1", &[R1p], Sense::Leq, 1.0),
        row("b.2", &[R1c], Sense::Leq, 0.0),
        row("b.3", &[R2p], Sense::Leq, 1.0),
        row("b.4", &[R2c], Sense::Leq, 0.0),
        row("b.5", &[Rp2c], Sense::Leq, 0.0),
        row("b.6", &[Rp2p], Sense::Leq, 0.0),
    ]);
    let p = project_region(&sys);
    assert_vertices(&p, &[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], 1e-12);
    // counter-clockwise
    assert!(p.area() > 0.0);
}

#[test]
fn empty_system_gives_empty_polygon() {
    use RateVar::*;
    let sys = with_bounds(vec![row("e.1", &[Rp2c], Sense::Geq, 1.0), row("e.2", &[R2c, Rp2c], Sense::Leq, 0.5)]);
    assert!(project_region(&sys).is_empty());
}

fn inst_a_systems() -> (ConstraintSystem, ConstraintSystem) {
    let j = inst_a().joint().unwrap();
    (build_system(SystemKind::Dmt, &j).unwrap(), build_system(SystemKind::Corrected, &j).unwrap())
}

#[test]
fn inst_a_vertices_agree_with_the_grid_oracle() {
    let (d, c) = inst_a_systems();
    for sys in [&d, &c] {
        let p = project_region(sys);
        assert!(p.vertices.len() >= 3);
        // every vertex is a witness-feasible point
        for v in &p.vertices {
            assert!(min_violation(sys, v[0].max(0.0), v[1].max(0.0)) <= 1e-9, "{v:?}");
        }
        // membership on a 1/128-bit grid covering the region
        let (mx, my) = p.vertices.iter().fold((0.0f64, 0.0f64), |m, v| (m.0.max(v[0]), m.1.max(v[1])));
        let mut checked = 0;
        for i in 0..=((mx * 1.1) * 128.0) as usize {
            for k in 0..=((my * 1.1) * 128.0) as usize {
                let pt = [i as f64 / 128.0, k as f64 / 128.0];
                if p.contains_point(pt, 1e-9) != witness_member(sys, pt[0], pt[1]) {
                    assert!(p.boundary_distance(pt) < 1e-6, "{pt:?}");
                }
                checked += 1;
            }
        }
        assert!(checked > 1000);
    }
    let vertices = |s| project_region(s).vertices;
    // values from an independent LP support-function computation of the same projection
    assert_vertices(
        &Polygon2D::new(vertices(&c)),
        &[[0.0, 0.0], [1.376_201_6, 0.0], [1.376_201_6, 0.314_192_8], [1.317_653_5, 0.372_741_0], [0.0, 0.372_741_0]],
        1e-6,
    );
    assert_vertices(
        &Polygon2D::new(vertices(&d)),
        &[[0.0, 0.0], [1.103_350_5, 0.0], [1.103_350_5, 0.056_039_5], [0.845_197_2, 0.314_192_8], [0.0, 0.314_192_8]],
        1e-6,
    );
}

#[test]
fn inst_a_random_points_agree_with_witness_search() {
    let (_, c) = inst_a_systems();
    let p = project_region(&c);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(9);
    for _ in 0..2000 {
        let pt = [rng.gen_range(0.0..1.6), rng.gen_range(0.0..0.5)];
        if p.contains_point(pt, 1e-9) != witness_member(&c, pt[0], pt[1]) {
            assert!(p.boundary_distance(pt) < 1e-6, "{pt:?}");
        }
    }
}

#[test]
fn corrected_contains_dmt_and_vertices_are_feasible() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(21);
    let mut nonempty = 0;
    for i in 0..60 {
        let j = random_instance(&mut rng, 1 + i % 2, BATCH_ALPHA).joint().unwrap();
        let d = build_system(SystemKind::Dmt, &j).unwrap();
        let c = build_system(SystemKind::Corrected, &j).unwrap();
        let (pd, pc) = (project_region(&d), project_region(&c));
        assert!(polygon_contains(&pc, &pd));
        assert!(pc.area() >= -1e-12 && pd.area() >= -1e-12);
        let hs = project_halfplanes(&c);
        for v in &pc.vertices {
            assert!(hs.contains(*v, 1e-9));
            assert!(v[0] >= -1e-9 && v[1] >= -1e-9);
        }
        nonempty += usize::from(!pc.is_empty());
    }
    assert!(nonempty > 0);
}

#[test]
fn independent_auxiliaries_give_identical_polygons() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(4);
    let j = independent_aux_instance(&mut rng, 2, 1.0).joint().unwrap();
    let pd = project_region(&build_system(SystemKind::Dmt, &j).unwrap());
    let pc = project_region(&build_system(SystemKind::Corrected, &j).unwrap());
    assert!(polygon_contains(&pc, &pd) && polygon_contains(&pd, &pc));
}

#[test]
fn polygon_contains_itself() {
    let (_, c) = inst_a_systems();
    let p = project_region(&c);
    assert!(polygon_contains(&p, &p));
    let square = Polygon2D::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
    assert!(polygon_contains(&square, &Polygon2D::new(vec![[0.0, 0.0]])));
}

fn eval(sys: &LinSystem, x: &[f64]) -> bool {
    sys.satisfied_by(x, 1e-9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Points of the input project into the output; output points lift back.
    #[test]
    fn elimination_is_exact(seed in any::<u64>(), q in 1usize..=2) {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let j = random_instance(&mut rng, q, BATCH_ALPHA).joint().unwrap();
        let sys = lift(&build_system(SystemKind::Corrected, &j).unwrap());
        let out = fm_eliminate(&sys, "Rp2c");
        let k = sys.index("Rp2c").unwrap();
        let scale = sys.rows.iter().map(|r| r.rhs.abs()).fold(1.0, f64::max);
        for _ in 0..300 {
            let x: Vec<f64> = (0..sys.vars.len()).map(|_| rng.gen_range(0.0..scale)).collect();
            let mut reduced = x.clone();
            reduced.remove(k);
            if eval(&sys, &x) {
                prop_assert!(eval(&out, &reduced));
            }
            if eval(&out, &reduced) {
                // the tightest admissible value of the eliminated variable is a witness
                let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                for r in &sys.rows {
                    let rest: f64 = r.coeffs.iter().zip(&x).enumerate()
                        .filter(|&(i, _)| i != k).map(|(_, (a, b))| a * b).sum();
                    let a = r.coeffs[k];
                    if a > 0.0 { hi = hi.min((r.rhs - rest) / a); }
                    else if a < 0.0 { lo = lo.max((r.rhs - rest) / a); }
                }
                prop_assert!(lo <= hi + 1e-9);
            }
        }
    }

    /// Raising every right-hand side can only grow the projection.
    #[test]
    fn projection_is_monotone(seed in any::<u64>()) {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let j = random_instance(&mut rng, 1, BATCH_ALPHA).joint().unwrap();
        let small = build_system(SystemKind::Dmt, &j).unwrap();
        let mut big = small.clone();
        for ineq in big.inequalities.iter_mut().filter(|i| i.sense == Sense::Leq) {
            ineq.rhs += rng.gen_range(0.0..0.3);
        }
        prop_assert!(polygon_contains(&project_region(&big), &project_region(&small)));
    }
}
