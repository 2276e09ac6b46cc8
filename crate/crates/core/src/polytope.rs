//! Fourier–Motzkin projection of rate systems onto the `(R1, R2)` plane and
//! small convex-polygon utilities.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::pmf::JointPmf;
use crate::region::{build_system, constraint_gap, ConstraintSystem, GapTable, RateVar, RegionError, Sense, SystemKind};

/// Feasibility and geometry tolerance, in bits.
pub const GEOM_TOL: f64 = 1e-9;
/// Coefficient tolerance for merging normalized rows.
pub const MERGE_TOL: f64 = 1e-12;

/// `coeffs · x ≤ rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

/// A conjunction of `≤` rows over named real variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LinSystem {
    pub vars: Vec<String>,
    pub rows: Vec<Row>,
    /// Set once pruning finds a row `0 ≤ negative`.
    pub infeasible: bool,
}

impl LinSystem {
    pub fn new(vars: Vec<String>) -> Self {
        Self {
            vars,
            rows: Vec::new(),
            infeasible: false,
        }
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }

    /// Adds `Σ terms ≤ rhs`; names must be declared.
    pub fn leq(&mut self, terms: &[(&str, f64)], rhs: f64) {
        let mut coeffs = vec![0.0; self.vars.len()];
        for &(name, c) in terms {
            let i = self.index(name).unwrap_or_else(|| panic!("undeclared variable {name}"));
            coeffs[i] += c;
        }
        self.rows.push(Row { coeffs, rhs });
    }

    pub fn geq(&mut self, terms: &[(&str, f64)], rhs: f64) {
        let neg: Vec<(&str, f64)> = terms.iter().map(|&(n, c)| (n, -c)).collect();
        self.leq(&neg, -rhs);
    }

    pub fn satisfied_by(&self, x: &[f64], tol: f64) -> bool {
        !self.infeasible
            && self.rows.iter().all(|r| {
                r.coeffs.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() <= r.rhs + tol
            })
    }
}

fn normalize(row: &mut Row) -> bool {
    let scale = row.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return false;
    }
    row.coeffs.iter_mut().for_each(|c| *c /= scale);
    row.rhs /= scale;
    true
}

/// Normalizes rows, drops vacuous ones, flags contradictions and merges
/// parallel rows that share a direction (keeping the tightest).
fn prune(sys: &mut LinSystem) {
    let mut kept: Vec<Row> = Vec::with_capacity(sys.rows.len());
    for mut row in std::mem::take(&mut sys.rows) {
        for c in row.coeffs.iter_mut() {
            if c.abs() < MERGE_TOL {
                *c = 0.0;
            }
        }
        if !normalize(&mut row) {
            if row.rhs < -GEOM_TOL {
                sys.infeasible = true;
            }
            continue;
        }
        match kept.iter_mut().find(|k| {
            k.coeffs
                .iter()
                .zip(&row.coeffs)
                .all(|(a, b)| (a - b).abs() < MERGE_TOL)
        }) {
            Some(k) => k.rhs = k.rhs.min(row.rhs),
            None => kept.push(row),
        }
    }
    sys.rows = kept;
}

/// Eliminates `var` by Fourier–Motzkin: a point over the remaining variables
/// satisfies the result iff some value of `var` satisfies the input.
pub fn fm_eliminate(sys: &LinSystem, var: &str) -> LinSystem {
    let Some(k) = sys.index(var) else {
        return sys.clone();
    };
    let drop_k = |c: &[f64]| -> Vec<f64> {
        c.iter()
            .enumerate()
            .filter(|&(i, _)| i != k)
            .map(|(_, &v)| v)
            .collect()
    };
    let mut out = LinSystem::new(drop_k_names(&sys.vars, k));
    out.infeasible = sys.infeasible;
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for r in &sys.rows {
        let a = r.coeffs[k];
        if a > 0.0 {
            pos.push(r);
        } else if a < 0.0 {
            neg.push(r);
        } else {
            out.rows.push(Row {
                coeffs: drop_k(&r.coeffs),
                rhs: r.rhs,
            });
        }
    }
    for p in &pos {
        for n in &neg {
            let (wp, wn) = (1.0 / p.coeffs[k], -1.0 / n.coeffs[k]);
            let coeffs: Vec<f64> = p
                .coeffs
                .iter()
                .zip(&n.coeffs)
                .map(|(a, b)| wp * a + wn * b)
                .collect();
            out.rows.push(Row {
                coeffs: drop_k(&coeffs),
                rhs: wp * p.rhs + wn * n.rhs,
            });
        }
    }
    prune(&mut out);
    out
}

fn drop_k_names(vars: &[String], k: usize) -> Vec<String> {
    vars.iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, v)| v.clone())
        .collect()
}

/// Order in which the split and bin rates are projected out.
pub const ELIMINATION_ORDER: [RateVar; 6] = [
    RateVar::Rp2c,
    RateVar::Rp2p,
    RateVar::R1p,
    RateVar::R1c,
    RateVar::R2p,
    RateVar::R2c,
];

/// The rate system over the six split rates plus `R1`, `R2`, with the two
/// coupling equalities written as paired inequalities.
pub fn lift(system: &ConstraintSystem) -> LinSystem {
    let mut vars: Vec<String> = RateVar::ALL.iter().map(|v| v.name().to_string()).collect();
    vars.extend(["R1".to_string(), "R2".to_string()]);
    let mut sys = LinSystem::new(vars);
    for ineq in &system.inequalities {
        let terms: Vec<(&str, f64)> = ineq.coeffs.iter().map(|(v, &c)| (v.name(), c)).collect();
        match ineq.sense {
            Sense::Leq => sys.leq(&terms, ineq.rhs),
            Sense::Geq => sys.geq(&terms, ineq.rhs),
        }
    }
    for (total, a, b) in [("R1", "R1p", "R1c"), ("R2", "R2p", "R2c")] {
        sys.leq(&[(a, 1.0), (b, 1.0), (total, -1.0)], 0.0);
        sys.geq(&[(a, 1.0), (b, 1.0), (total, -1.0)], 0.0);
    }
    prune(&mut sys);
    sys
}

/// `a·R1 + b·R2 ≤ c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl HalfPlane {
    pub fn slack(&self, p: [f64; 2]) -> f64 {
        self.c - self.a * p[0] - self.b * p[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfPlaneSet {
    pub planes: Vec<HalfPlane>,
    pub infeasible: bool,
}

impl HalfPlaneSet {
    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        !self.infeasible && self.planes.iter().all(|h| h.slack(p) >= -tol)
    }

    /// Largest violation at `p` (non-positive inside).
    pub fn violation(&self, p: [f64; 2]) -> f64 {
        self.planes
            .iter()
            .map(|h| -h.slack(p))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Projects onto `(R1, R2)` as half-planes.
pub fn project_halfplanes(system: &ConstraintSystem) -> HalfPlaneSet {
    let mut sys = lift(system);
    for v in ELIMINATION_ORDER {
        sys = fm_eliminate(&sys, v.name());
        log::debug!("after eliminating {v}: {} rows", sys.rows.len());
    }
    let (i1, i2) = (sys.index("R1").unwrap(), sys.index("R2").unwrap());
    HalfPlaneSet {
        planes: sys
            .rows
            .iter()
            .map(|r| HalfPlane {
                a: r.coeffs[i1],
                b: r.coeffs[i2],
                c: r.rhs,
            })
            .collect(),
        infeasible: sys.infeasible,
    }
}

/// Existential projection of a rate system onto the `(R1, R2)` plane.
pub fn project_region(system: &ConstraintSystem) -> Polygon2D {
    Polygon2D::from_halfplanes(&project_halfplanes(system))
}

/// Convex polygon with counter-clockwise vertices; zero, one or two vertices
/// denote the empty set, a point and a segment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Polygon2D {
    pub vertices: Vec<[f64; 2]>,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn seg_dist(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * dx, a[1] + t * dy])
}

impl Polygon2D {
    pub fn new(vertices: Vec<[f64; 2]>) -> Self {
        Self { vertices }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Vertex enumeration by pairwise line intersection and feasibility filtering.
    pub fn from_halfplanes(set: &HalfPlaneSet) -> Self {
        if set.infeasible {
            return Self::default();
        }
        let hs = &set.planes;
        let mut pts: Vec<[f64; 2]> = Vec::new();
        for i in 0..hs.len() {
            for j in i + 1..hs.len() {
                let (p, q) = (hs[i], hs[j]);
                let det = p.a * q.b - p.b * q.a;
                if det.abs() < MERGE_TOL {
                    continue;
                }
                // `+ 0.0` folds -0.0 so emitted vertices never print a signed zero
                let x = [
                    (p.c * q.b - p.b * q.c) / det + 0.0,
                    (p.a * q.c - p.c * q.a) / det + 0.0,
                ];
                if set.contains(x, GEOM_TOL) && !pts.iter().any(|&y| dist(x, y) <= GEOM_TOL) {
                    pts.push(x);
                }
            }
        }
        Self::hull_order(pts)
    }

    fn hull_order(mut pts: Vec<[f64; 2]>) -> Self {
        if pts.len() > 1 {
            let n = pts.len() as f64;
            let c = [
                pts.iter().map(|p| p[0]).sum::<f64>() / n,
                pts.iter().map(|p| p[1]).sum::<f64>() / n,
            ];
            let key = |p: &[f64; 2]| ((p[1] - c[1]).atan2(p[0] - c[0]), dist(*p, c));
            pts.sort_by(|a, b| key(a).partial_cmp(&key(b)).expect("finite vertices"));
        }
        // drop middle points of collinear runs until none remain
        loop {
            let n = pts.len();
            if n < 3 {
                break;
            }
            let Some(i) = (0..n).find(|&i| {
                cross(pts[(i + n - 1) % n], pts[i], pts[(i + 1) % n]).abs() <= GEOM_TOL
            }) else {
                break;
            };
            pts.remove(i);
        }
        Self { vertices: pts }
    }

    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        (0..n)
            .map(|i| v[i][0] * v[(i + 1) % n][1] - v[(i + 1) % n][0] * v[i][1])
            .sum::<f64>()
            / 2.0
    }

    /// Distance from `p` to the polygon boundary (to the point or segment for
    /// degenerate polygons). Infinite for the empty polygon.
    pub fn boundary_distance(&self, p: [f64; 2]) -> f64 {
        let v = &self.vertices;
        match v.len() {
            0 => f64::INFINITY,
            1 => dist(p, v[0]),
            n => (0..n)
                .map(|i| seg_dist(p, v[i], v[(i + 1) % n]))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Inside or within `tol` of the polygon.
    pub fn contains_point(&self, p: [f64; 2], tol: f64) -> bool {
        let v = &self.vertices;
        match v.len() {
            0 => false,
            1 | 2 => self.boundary_distance(p) <= tol,
            n => (0..n).all(|i| {
                let (a, b) = (v[i], v[(i + 1) % n]);
                cross(a, b, p) / dist(a, b) >= -tol
            }),
        }
    }

    /// Two-column `r1,r2` CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r1,r2\n");
        for v in &self.vertices {
            writeln!(s, "{},{}", v[0], v[1]).expect("write to string");
        }
        s
    }
}

/// True iff every vertex of `inner` lies in `outer` within [`GEOM_TOL`].
pub fn polygon_contains(outer: &Polygon2D, inner: &Polygon2D) -> bool {
    inner
        .vertices
        .iter()
        .all(|&p| outer.contains_point(p, GEOM_TOL))
}

/// Both systems for one joint, their gaps and their projections.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub gaps: GapTable,
    pub inclusion: bool,
    pub dmt_polygon: Polygon2D,
    pub corrected_polygon: Polygon2D,
}

pub fn compare_regions(joint: &JointPmf) -> Result<Comparison, RegionError> {
    let dmt = build_system(SystemKind::Dmt, joint)?;
    let corrected = build_system(SystemKind::Corrected, joint)?;
    let gaps = constraint_gap(&dmt, &corrected)?;
    let dmt_polygon = project_region(&dmt);
    let corrected_polygon = project_region(&corrected);
    Ok(Comparison {
        gaps,
        inclusion: polygon_contains(&corrected_polygon, &dmt_polygon),
        dmt_polygon,
        corrected_polygon,
    })
}
