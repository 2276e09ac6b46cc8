//! Brute-force reference computations that share no code with the library's
//! marginalization or entropy routines.
#![allow(dead_code)]

pub mod witness;

use std::collections::HashMap;

use cic_core::instance::Instance;
use cic_core::pmf::Var;

/// Every outcome `(q,u1p,u1c,u2c,u2p,x1,x2,y1,y2)` with its probability, by
/// multiplying the factor tables directly.
pub fn outcomes(inst: &Instance) -> Vec<([usize; 9], f64)> {
    let a = &inst.aux;
    let c = a.cards();
    let ch = &inst.channel;
    let mut out = Vec::new();
    for q in 0..c.q {
        for u1p in 0..c.u1p {
            for u1c in 0..c.u1c {
                for u2c in 0..c.u2c {
                    for u2p in 0..c.u2p {
                        for x1 in 0..c.x1 {
                            for x2 in 0..c.x2 {
                                for y1 in 0..ch.y1_card() {
                                    for y2 in 0..ch.y2_card() {
                                        let p = a.p_q.row(0)[q]
                                            * a.p_u1c.row(q)[u1c]
                                            * a.p_u1p.row(q)[u1p]
                                            * a.p_x1.row_of(&[q, u1c, u1p])[x1]
                                            * a.p_u2c.row_of(&[q, u1c, u1p])[u2c]
                                            * a.p_u2p.row_of(&[q, u1c, u1p])[u2p]
                                            * a.p_x2.row_of(&[q, u2c, u2p])[x2]
                                            * ch.prob(x1, x2, y1, y2);
                                        out.push(([q, u1p, u1c, u2c, u2p, x1, x2, y1, y2], p));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn idx(v: Var) -> usize {
    Var::ALL.iter().position(|&w| w == v).unwrap()
}

pub fn marginal(outs: &[([usize; 9], f64)], vars: &[Var]) -> HashMap<Vec<usize>, f64> {
    let mut m = HashMap::new();
    for (o, p) in outs {
        let key: Vec<usize> = vars.iter().map(|&v| o[idx(v)]).collect();
        *m.entry(key).or_insert(0.0) += p;
    }
    m
}

/// `Σ p(a,b,c) log2 [p(a,b,c) p(c) / (p(a,c) p(b,c))]`.
pub fn oracle_mi(outs: &[([usize; 9], f64)], a: &[Var], b: &[Var], c: &[Var]) -> f64 {
    let cat = |x: &[Var], y: &[Var]| -> Vec<Var> { x.iter().chain(y).copied().collect() };
    let ac = cat(a, c);
    let bc = cat(b, c);
    let abc = cat(a, &bc);
    let (m_abc, m_ac, m_bc, m_c) = (
        marginal(outs, &abc),
        marginal(outs, &ac),
        marginal(outs, &bc),
        marginal(outs, c),
    );
    let mut total = 0.0;
    for (key, &p) in &m_abc {
        if p <= 0.0 {
            continue;
        }
        let ka = &key[..a.len()];
        let kb = &key[a.len()..a.len() + b.len()];
        let kc = &key[a.len() + b.len()..];
        let pc = if c.is_empty() { 1.0 } else { m_c[kc] };
        let pac = m_ac[&[ka, kc].concat()];
        let pbc = m_bc[&[kb, kc].concat()];
        total += p * (p * pc / (pac * pbc)).log2();
    }
    total
}

/// Parses `"I(A;B|C)"` with the same grammar the library prints, evaluated by the oracle.
pub fn oracle_term(outs: &[([usize; 9], f64)], term: &str) -> f64 {
    let body = term.strip_prefix("I(").unwrap().strip_suffix(')').unwrap();
    let (args, given) = body.split_once('|').unwrap_or((body, ""));
    let (l, r) = args.split_once(';').unwrap();
    let vars = |s: &str| -> Vec<Var> {
        if s.is_empty() {
            vec![]
        } else {
            s.split(',').map(|n| n.parse().unwrap()).collect()
        }
    };
    oracle_mi(outs, &vars(l), &vars(r), &vars(given))
}

pub fn h2(p: f64) -> f64 {
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}
