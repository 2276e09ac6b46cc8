//! Witness search for membership of `(R1, R2)` in the projection of a rate
//! system, without any elimination: bin rates sit at their lower bounds, R1p
//! walks a 1/64-bit grid (then a convex refinement), and R2p is optimized
//! exactly for each R1p.
#![allow(dead_code)]

use cic_core::region::{ConstraintSystem, RateVar, Sense};

pub const GRID_STEP: f64 = 1.0 / 64.0;

/// Each row as `alpha·R1p + beta·R2p + gamma ≤ 0` for a fixed point.
struct Affine {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

fn rows_at(sys: &ConstraintSystem, r1: f64, r2: f64) -> Vec<Affine> {
    // bin rates only appear with positive weight in upper bounds, so their
    // lower bounds are optimal witnesses
    let mut lower = [0.0f64; 2];
    for ineq in &sys.inequalities {
        if ineq.sense == Sense::Geq && ineq.coeffs.len() == 1 {
            for (slot, v) in [(0, RateVar::Rp2c), (1, RateVar::Rp2p)] {
                if let Some(&c) = ineq.coeffs.get(&v) {
                    lower[slot] = lower[slot].max(ineq.rhs / c);
                }
            }
        }
    }
    sys.inequalities
        .iter()
        .map(|ineq| {
            let sign = if ineq.sense == Sense::Leq { 1.0 } else { -1.0 };
            let c = |v| ineq.coeffs.get(&v).copied().unwrap_or(0.0) * sign;
            // R1c = r1 - R1p, R2c = r2 - R2p
            Affine {
                alpha: c(RateVar::R1p) - c(RateVar::R1c),
                beta: c(RateVar::R2p) - c(RateVar::R2c),
                gamma: c(RateVar::R1c) * r1
                    + c(RateVar::R2c) * r2
                    + c(RateVar::Rp2c) * lower[0]
                    + c(RateVar::Rp2p) * lower[1]
                    - sign * ineq.rhs,
            }
        })
        .collect()
}

/// `min over R2p in [0, r2] of max_i (beta_i R2p + off_i)`, exactly.
fn inner_min(rows: &[Affine], r1p: f64, r2: f64) -> f64 {
    let offs: Vec<(f64, f64)> = rows.iter().map(|a| (a.beta, a.alpha * r1p + a.gamma)).collect();
    let eval = |t: f64| offs.iter().map(|&(b, o)| b * t + o).fold(f64::NEG_INFINITY, f64::max);
    let mut best = eval(0.0).min(eval(r2));
    for &(b1, o1) in offs.iter().filter(|r| r.0 > 0.0) {
        for &(b2, o2) in offs.iter().filter(|r| r.0 < 0.0) {
            let t = (o2 - o1) / (b1 - b2);
            if t > 0.0 && t < r2 {
                best = best.min(eval(t));
            }
        }
    }
    best
}

/// Smallest achievable maximum violation at `(r1, r2)`; the point is in the
/// projection iff this is `≤ 0` (up to rounding).
pub fn min_violation(sys: &ConstraintSystem, r1: f64, r2: f64) -> f64 {
    if r1 < 0.0 || r2 < 0.0 {
        return r1.min(r2).abs();
    }
    let rows = rows_at(sys, r1, r2);
    let g = |r1p: f64| inner_min(&rows, r1p, r2);
    let steps = (r1 / GRID_STEP).floor() as usize;
    let mut grid: Vec<f64> = (0..=steps).map(|k| k as f64 * GRID_STEP).collect();
    if *grid.last().unwrap() < r1 {
        grid.push(r1);
    }
    let (mut best_i, mut best) = (0, f64::INFINITY);
    for (i, &x) in grid.iter().enumerate() {
        let v = g(x);
        if v <= 0.0 {
            return v;
        }
        if v < best {
            best = v;
            best_i = i;
        }
    }
    // each row has |d/dR1p| ≤ 1, so g moves at most half a step between grid points
    if best > GRID_STEP / 2.0 + 1e-12 {
        return best;
    }
    let (mut lo, mut hi) = (
        grid[best_i.saturating_sub(1)],
        grid[(best_i + 1).min(grid.len() - 1)],
    );
    for _ in 0..100 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if g(m1) <= g(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    best.min(g((lo + hi) / 2.0))
}

pub fn witness_member(sys: &ConstraintSystem, r1: f64, r2: f64) -> bool {
    min_violation(sys, r1, r2) <= 1e-9
}
