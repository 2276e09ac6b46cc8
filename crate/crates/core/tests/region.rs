mod common;

use cic_core::instance::{independent_aux_instance, BATCH_ALPHA, inst_a, point_mass_instance, random_instance};
use cic_core::region::{
    added_terms, build_system, constraint_gap, exponent_identity_check, ConstraintSystem,
    SystemKind, AUGMENTED,
};
use common::{h2, oracle_term, outcomes};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

fn both(inst: &cic_core::instance::Instance) -> (ConstraintSystem, ConstraintSystem) {
    let j = inst.joint().unwrap();
    (
        build_system(SystemKind::Dmt, &j).unwrap(),
        build_system(SystemKind::Corrected, &j).unwrap(),
    )
}

#[test]
fn sixteen_tagged_rows_plus_six_bounds() {
    let (d, c) = both(&inst_a());
    for s in [&d, &c] {
        assert_eq!(s.tagged().count(), 16);
        assert_eq!(s.inequalities.len(), 22);
    }
    assert!(d.get("2.16").is_some() && c.get("3.16").is_some());
}

#[test]
fn every_rhs_matches_its_terms_under_the_oracle() {
    let inst = inst_a();
    let outs = outcomes(&inst);
    let (d, c) = both(&inst);
    for s in [&d, &c] {
        for ineq in s.tagged() {
            let direct: f64 = ineq.rhs_terms.iter().map(|q| oracle_term(&outs, &q.to_string())).sum();
            assert!((ineq.rhs - direct).abs() < 1e-9, "{}: {} vs {direct}", ineq.id, ineq.rhs);
            let summed: f64 = ineq.term_values.iter().sum();
            assert!((ineq.rhs - summed).abs() <= 1e-12);
            assert!(ineq.rhs.is_finite() && ineq.rhs >= 0.0);
        }
    }
}

#[test]
fn independent_auxiliaries_cost_nothing() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
    for q in [1, 2] {
        let (d, c) = both(&independent_aux_instance(&mut rng, q, 1.0));
        for s in [&d, &c] {
            let p = s.id_prefix();
            assert!(s.rhs(&format!("{p}.1")).unwrap().abs() < 1e-12);
            assert!(s.rhs(&format!("{p}.2")).unwrap().abs() < 1e-12);
        }
        for (id, g) in constraint_gap(&d, &c).unwrap().iter() {
            assert!(g.abs() < 1e-9, "{id}: {g}");
        }
    }
}

#[test]
fn inst_a_gaps_equal_the_added_terms() {
    let inst = inst_a();
    let outs = outcomes(&inst);
    let (d, c) = both(&inst);
    let gaps = constraint_gap(&d, &c).unwrap();
    assert_eq!(gaps.get("3.3"), Some(0.0));
    let g37 = c.rhs("3.7").unwrap() - d.rhs("2.7").unwrap();
    assert!((g37 - oracle_term(&outs, "I(U2c;U1p|Q)")).abs() < 1e-9);
    assert!((gaps.get("3.13").unwrap() - oracle_term(&outs, "I(U2p;U2c|Q)")).abs() < 1e-9);
    // U2c is a BSC(0.1) image of the uniform bit U1p xor U1c; U2p one of U1c.
    let bsc = 1.0 - h2(0.1);
    assert!((gaps.get("3.9").unwrap() - bsc).abs() < 1e-9);
    assert!((gaps.get("3.14").unwrap() - bsc).abs() < 1e-9);
    assert!((gaps.get("3.16").unwrap() - bsc).abs() < 1e-9);
    for id in ["3.7", "3.8", "3.13", "3.15"] {
        assert!(gaps.get(id).unwrap().abs() < 1e-9, "{id}");
    }
    assert!((c.rhs("3.1").unwrap() - bsc).abs() < 1e-9);
    assert!((c.rhs("3.2").unwrap() - bsc).abs() < 1e-9);
}

#[test]
fn gaps_reject_mismatched_joints() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
    let d = build_system(SystemKind::Dmt, &random_instance(&mut rng, 1, 1.0).joint().unwrap()).unwrap();
    let c = build_system(SystemKind::Corrected, &random_instance(&mut rng, 1, 1.0).joint().unwrap())
        .unwrap();
    assert!(constraint_gap(&d, &c).is_err());
    assert!(constraint_gap(&c, &d).is_err());
}

#[test]
fn chain_rule_form_of_3_7() {
    let inst = inst_a();
    let outs = outcomes(&inst);
    let (_, c) = both(&inst);
    let combined =
        oracle_term(&outs, "I(Y1;U1p,U2c|U1c,Q)") + oracle_term(&outs, "I(U2c;U1p,U1c|Q)");
    assert!((c.rhs("3.7").unwrap() - combined).abs() < 1e-9);
}

#[test]
fn rebuild_is_bit_identical() {
    let j = inst_a().joint().unwrap();
    let a = build_system(SystemKind::Corrected, &j).unwrap();
    let b = build_system(SystemKind::Corrected, &j).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn json_lists_terms_as_text_and_round_trips() {
    let (_, c) = both(&inst_a());
    let text = serde_json::to_string_pretty(&c).unwrap();
    assert!(text.contains("\"I(Y1;U1p,U2c|U1c,Q)\""));
    assert!(text.contains("\"LEQ\"") && text.contains("\"GEQ\""));
    let back: ConstraintSystem = serde_json::from_str(&text).unwrap();
    assert_eq!(back, c);
}

#[test]
fn identities_hold_on_fixtures() {
    let pm = exponent_identity_check(&point_mass_instance().joint().unwrap()).unwrap();
    assert_eq!(pm.rows.len(), 7);
    for r in &pm.rows {
        assert!(r.residual.abs() < 1e-12 && r.rhs.abs() < 1e-12);
    }
    let a = exponent_identity_check(&inst_a().joint().unwrap()).unwrap();
    assert!(a.max_residual() <= 1e-9, "{a:?}");
    assert!(a.notes.iter().any(|n| n.contains("3.16")));
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(2);
    let ind = independent_aux_instance(&mut rng, 2, 1.0).joint().unwrap();
    let r = exponent_identity_check(&ind).unwrap();
    assert!(r.passes(1e-9));
    // with the added terms gone, both sides reduce to the channel term alone
    let c = build_system(SystemKind::Corrected, &ind).unwrap();
    for row in &r.rows {
        let ineq = c.get(&row.constraint).unwrap();
        assert!((row.exponent_closed_form - ineq.term_values[0]).abs() < 1e-9);
    }
}

#[test]
fn added_terms_table() {
    for k in 1..=16u8 {
        assert_eq!(added_terms(k).is_empty(), !AUGMENTED.contains(&k));
    }
    assert_eq!(added_terms(16).len(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn corrected_rhs_dominates(seed in any::<u64>(), q in 1usize..=2) {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let inst = random_instance(&mut rng, q, BATCH_ALPHA);
        let outs = outcomes(&inst);
        let (d, c) = both(&inst);
        let gaps = constraint_gap(&d, &c).unwrap();
        for (id, g) in gaps.iter() {
            prop_assert!(g >= -1e-9, "{} {}", id, g);
            let k: u8 = id[2..].parse().unwrap();
            let expected: f64 = added_terms(k).iter().map(|t| oracle_term(&outs, &t.to_string())).sum();
            prop_assert!((g - expected).abs() < 1e-9, "{} {} {}", id, g, expected);
        }
        let r = exponent_identity_check(&inst.joint().unwrap()).unwrap();
        prop_assert!(r.passes(1e-9), "{:?}", r);
    }
}
