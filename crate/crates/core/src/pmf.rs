//! Finite-alphabet probability tables.
//!
//! A [`JointPmf`] is a dense table over an ordered [`Roster`] of named
//! variables, stored row-major in roster order. [`ChannelSpec`] and
//! [`AuxFactorization`] hold the conditional tables of the channel law and of
//! the auxiliary factorization; [`compose`] multiplies them into the full
//! nine-variable joint that every information measure is evaluated on.
//!
//! Zero-probability symbols are never pruned, so alphabet indices stay
//! stable across marginalization and composition.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the normalization of input tables.
pub const INPUT_TOL: f64 = 1e-12;
/// Tolerance on quantities derived from input tables.
pub const DERIVED_TOL: f64 = 1e-9;

/// The nine random variables of the cognitive interference channel model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Var {
    Q,
    U1p,
    U1c,
    U2c,
    U2p,
    X1,
    X2,
    Y1,
    Y2,
}

impl Var {
    /// Canonical roster order of the composed joint.
    pub const ALL: [Var; 9] = [
        Var::Q,
        Var::U1p,
        Var::U1c,
        Var::U2c,
        Var::U2p,
        Var::X1,
        Var::X2,
        Var::Y1,
        Var::Y2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Var::Q => "Q",
            Var::U1p => "U1p",
            Var::U1c => "U1c",
            Var::U2c => "U2c",
            Var::U2p => "U2p",
            Var::X1 => "X1",
            Var::X2 => "X2",
            Var::Y1 => "Y1",
            Var::Y2 => "Y2",
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Var {
    type Err = PmfError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Var::ALL
            .iter()
            .copied()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| PmfError::UnknownName(s.trim().to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PmfError {
    #[error("unknown variable name `{0}`")]
    UnknownName(String),
    #[error("variable {0} is not in the roster")]
    NotInRoster(Var),
    #[error("variable {0} listed more than once")]
    Duplicate(Var),
    #[error("variable {0} has an empty alphabet")]
    EmptyAlphabet(Var),
    #[error("no variables selected")]
    EmptySelection,
    #[error("{what}: expected {expected} entries, found {found}")]
    Shape {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("cardinality of {var} differs: channel has {channel}, factorization has {aux}")]
    CardinalityMismatch { var: Var, channel: usize, aux: usize },
    #[error("{0}")]
    Invalid(Diagnostic),
}

/// A violated table invariant, naming what and where.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic(pub String);

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Formats a probability with at most 12 decimals and no trailing zeros.
pub(crate) fn fmt_prob(x: f64) -> String {
    let s = format!("{x:.12}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Ordered list of distinct variables with their alphabet sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Roster {
    entries: Vec<(Var, usize)>,
}

impl Roster {
    pub fn new(entries: Vec<(Var, usize)>) -> Result<Self, PmfError> {
        for (i, &(v, card)) in entries.iter().enumerate() {
            if card == 0 {
                return Err(PmfError::EmptyAlphabet(v));
            }
            if entries[..i].iter().any(|&(w, _)| w == v) {
                return Err(PmfError::Duplicate(v));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(Var, usize)] {
        &self.entries
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.entries.iter().map(|&(v, _)| v)
    }

    pub fn position(&self, v: Var) -> Option<usize> {
        self.entries.iter().position(|&(w, _)| w == v)
    }

    pub fn card(&self, v: Var) -> Option<usize> {
        self.position(v).map(|i| self.entries[i].1)
    }

    pub fn contains(&self, v: Var) -> bool {
        self.position(v).is_some()
    }

    /// Number of cells of the product alphabet.
    pub fn size(&self) -> usize {
        self.entries.iter().map(|&(_, c)| c).product()
    }

    /// Decodes a flat row-major index into per-variable symbols.
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.entries.len()];
        for (slot, &(_, card)) in out.iter_mut().zip(&self.entries).rev() {
            *slot = flat % card;
            flat /= card;
        }
        out
    }

    fn describe_cell(&self, flat: usize) -> String {
        self.entries
            .iter()
            .zip(self.unflatten(flat))
            .map(|(&(v, _), s)| format!("{v}={s}"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Probability table over a roster. Entries are row-major in roster order.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    roster: Roster,
    mass: Vec<f64>,
}

impl JointPmf {
    /// Wraps a table after checking only its length; see [`JointPmf::validate`].
    pub fn from_parts(roster: Roster, mass: Vec<f64>) -> Result<Self, PmfError> {
        if mass.len() != roster.size() {
            return Err(PmfError::Shape {
                what: "joint mass table".into(),
                expected: roster.size(),
                found: mass.len(),
            });
        }
        Ok(Self { roster, mass })
    }

    /// Wraps and validates a table.
    pub fn new(roster: Roster, mass: Vec<f64>) -> Result<Self, PmfError> {
        let pmf = Self::from_parts(roster, mass)?;
        pmf.validate().map_err(PmfError::Invalid)?;
        Ok(pmf)
    }

    pub fn roster(&self) -> &Roster {
        &self.roster
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Checks non-negativity and normalization, reporting the first violation.
    pub fn validate(&self) -> Result<(), Diagnostic> {
        if let Some((i, &m)) = self
            .mass
            .iter()
            .enumerate()
            .find(|(_, m)| !(m.is_finite() && **m >= 0.0))
        {
            return Err(Diagnostic(format!(
                "negative mass {} at index {i} ({})",
                fmt_prob(m),
                self.roster.describe_cell(i)
            )));
        }
        let total = self.total();
        if (total - 1.0).abs() > INPUT_TOL {
            return Err(Diagnostic(format!("total mass {} ≠ 1", fmt_prob(total))));
        }
        Ok(())
    }

    /// Sums out every variable not in `keep`; kept variables stay in roster order.
    pub fn marginalize(&self, keep: &[Var]) -> Result<JointPmf, PmfError> {
        if keep.is_empty() {
            return Err(PmfError::EmptySelection);
        }
        for &v in keep {
            if !self.roster.contains(v) {
                return Err(PmfError::NotInRoster(v));
            }
        }
        let order: Vec<Var> = self.roster.vars().filter(|v| keep.contains(v)).collect();
        self.project(&order)
    }

    /// Marginal over `order`, laid out in exactly that variable order.
    pub fn project(&self, order: &[Var]) -> Result<JointPmf, PmfError> {
        if order.is_empty() {
            return Err(PmfError::EmptySelection);
        }
        let mut entries = Vec::with_capacity(order.len());
        let mut positions = Vec::with_capacity(order.len());
        for &v in order {
            let pos = self.roster.position(v).ok_or(PmfError::NotInRoster(v))?;
            entries.push(self.roster.entries[pos]);
            positions.push(pos);
        }
        let target = Roster::new(entries)?;
        let strides = target_strides(&self.roster, &target, &positions);
        let mut out = vec![0.0; target.size()];
        for_each_cell(&self.roster, |flat, digits| {
            let t: usize = digits.iter().zip(&strides).map(|(d, s)| d * s).sum();
            out[t] += self.mass[flat];
        });
        Ok(JointPmf {
            roster: target,
            mass: out,
        })
    }
}

/// For each source roster slot, the stride of that variable in `target` (0 if dropped).
fn target_strides(source: &Roster, target: &Roster, positions: &[usize]) -> Vec<usize> {
    let mut tstride = vec![0usize; target.len()];
    let mut acc = 1;
    for (slot, &(_, card)) in tstride.iter_mut().zip(target.entries()).rev() {
        *slot = acc;
        acc *= card;
    }
    let mut strides = vec![0usize; source.len()];
    for (k, &pos) in positions.iter().enumerate() {
        strides[pos] = tstride[k];
    }
    strides
}

/// Visits every cell of the roster in flat order with its digit vector.
fn for_each_cell(roster: &Roster, mut f: impl FnMut(usize, &[usize])) {
    let cards: Vec<usize> = roster.entries.iter().map(|&(_, c)| c).collect();
    let mut digits = vec![0usize; cards.len()];
    for flat in 0..roster.size() {
        f(flat, &digits);
        for k in (0..cards.len()).rev() {
            digits[k] += 1;
            if digits[k] < cards[k] {
                break;
            }
            digits[k] = 0;
        }
    }
}

/// A conditional table `p(child | parents)`, one row per parent configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CondTable {
    label: String,
    parents: Vec<(&'static str, usize)>,
    child: (&'static str, usize),
    data: Vec<f64>,
}

impl CondTable {
    /// `data` is row-major over `[parents...][child]`. Every row must be a pmf.
    pub fn new(
        label: impl Into<String>,
        parents: Vec<(&'static str, usize)>,
        child: (&'static str, usize),
        data: Vec<f64>,
    ) -> Result<Self, PmfError> {
        let table = Self {
            label: label.into(),
            parents,
            child,
            data,
        };
        let expected = table.rows() * table.child.1;
        if table.data.len() != expected {
            return Err(PmfError::Shape {
                what: table.label.clone(),
                expected,
                found: table.data.len(),
            });
        }
        table.validate().map_err(PmfError::Invalid)?;
        Ok(table)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn rows(&self) -> usize {
        self.parents.iter().map(|&(_, c)| c).product()
    }

    pub fn child_card(&self) -> usize {
        self.child.1
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, parent_flat: usize) -> &[f64] {
        let k = self.child.1;
        &self.data[parent_flat * k..(parent_flat + 1) * k]
    }

    /// Row selected by parent symbols given in signature order.
    pub fn row_of(&self, parents: &[usize]) -> &[f64] {
        let flat = parents
            .iter()
            .zip(&self.parents)
            .fold(0, |acc, (&s, &(_, c))| acc * c + s);
        self.row(flat)
    }

    fn describe_row(&self, flat: usize) -> String {
        let mut rest = flat;
        let mut parts = Vec::with_capacity(self.parents.len());
        for &(name, card) in self.parents.iter().rev() {
            parts.push(format!("{name}={}", rest % card));
            rest /= card;
        }
        parts.reverse();
        parts.join(",")
    }

    fn validate(&self) -> Result<(), Diagnostic> {
        for r in 0..self.rows() {
            let row = self.row(r);
            let place = if self.parents.is_empty() {
                String::new()
            } else {
                format!(", row {}", self.describe_row(r))
            };
            if let Some((s, &v)) = row
                .iter()
                .enumerate()
                .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
            {
                return Err(Diagnostic(format!(
                    "{}{place} has negative entry {} at {}={s}",
                    self.label,
                    fmt_prob(v),
                    self.child.0
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > INPUT_TOL {
                return Err(Diagnostic(format!(
                    "{}{place} sums to {}",
                    self.label,
                    fmt_prob(sum)
                )));
            }
        }
        Ok(())
    }
}

/// The channel law `p(y1,y2|x1,x2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    x1: usize,
    x2: usize,
    y1: usize,
    y2: usize,
    table: CondTable,
}

impl ChannelSpec {
    /// `table` is row-major over `[x1][x2][y1][y2]`.
    pub fn new(
        x1: usize,
        x2: usize,
        y1: usize,
        y2: usize,
        table: Vec<f64>,
    ) -> Result<Self, PmfError> {
        for (v, c) in [(Var::X1, x1), (Var::X2, x2), (Var::Y1, y1), (Var::Y2, y2)] {
            if c == 0 {
                return Err(PmfError::EmptyAlphabet(v));
            }
        }
        let table = CondTable::new(
            "channel p(y1,y2|x1,x2)",
            vec![("x1", x1), ("x2", x2)],
            ("(y1,y2)", y1 * y2),
            table,
        )?;
        Ok(Self {
            x1,
            x2,
            y1,
            y2,
            table,
        })
    }

    pub fn x1_card(&self) -> usize {
        self.x1
    }
    pub fn x2_card(&self) -> usize {
        self.x2
    }
    pub fn y1_card(&self) -> usize {
        self.y1
    }
    pub fn y2_card(&self) -> usize {
        self.y2
    }

    /// Conditional row over `(y1, y2)` flattened as `y1 * |Y2| + y2`.
    pub fn row(&self, x1: usize, x2: usize) -> &[f64] {
        self.table.row(x1 * self.x2 + x2)
    }

    pub fn prob(&self, x1: usize, x2: usize, y1: usize, y2: usize) -> f64 {
        self.row(x1, x2)[y1 * self.y2 + y2]
    }

    pub fn table(&self) -> &CondTable {
        &self.table
    }
}

/// Alphabet sizes of the coding-layer variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxCards {
    pub q: usize,
    pub u1p: usize,
    pub u1c: usize,
    pub u2c: usize,
    pub u2p: usize,
    pub x1: usize,
    pub x2: usize,
}

impl AuxCards {
    /// All auxiliaries binary, `|Q| = q`, binary inputs.
    pub fn binary(q: usize) -> Self {
        Self {
            q,
            u1p: 2,
            u1c: 2,
            u2c: 2,
            u2p: 2,
            x1: 2,
            x2: 2,
        }
    }
}

/// Raw factor tables of the auxiliary factorization, each row-major in its
/// signature order (for example `p(u2c|q,u1c,u1p)` is indexed `[q][u1c][u1p][u2c]`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FactorTables {
    pub p_q: Vec<f64>,
    pub p_u1c: Vec<f64>,
    pub p_u1p: Vec<f64>,
    pub p_x1: Vec<f64>,
    pub p_u2c: Vec<f64>,
    pub p_u2p: Vec<f64>,
    pub p_x2: Vec<f64>,
}

/// `p(q)p(u1c|q)p(u1p|q)p(x1|q,u1c,u1p)p(u2c|q,u1c,u1p)p(u2p|q,u1c,u1p)p(x2|q,u2c,u2p)`.
///
/// U2c and U2p are conditionally independent given `(Q, U1p, U1c)` by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxFactorization {
    cards: AuxCards,
    pub p_q: CondTable,
    pub p_u1c: CondTable,
    pub p_u1p: CondTable,
    pub p_x1: CondTable,
    pub p_u2c: CondTable,
    pub p_u2p: CondTable,
    pub p_x2: CondTable,
}

impl AuxFactorization {
    pub fn new(cards: AuxCards, t: FactorTables) -> Result<Self, PmfError> {
        let c = cards;
        for (v, k) in [
            (Var::Q, c.q),
            (Var::U1p, c.u1p),
            (Var::U1c, c.u1c),
            (Var::U2c, c.u2c),
            (Var::U2p, c.u2p),
            (Var::X1, c.x1),
            (Var::X2, c.x2),
        ] {
            if k == 0 {
                return Err(PmfError::EmptyAlphabet(v));
            }
        }
        let u1 = |q| vec![("q", q), ("u1c", c.u1c), ("u1p", c.u1p)];
        Ok(Self {
            cards,
            p_q: CondTable::new("factor p(q)", vec![], ("q", c.q), t.p_q)?,
            p_u1c: CondTable::new("factor p(u1c|q)", vec![("q", c.q)], ("u1c", c.u1c), t.p_u1c)?,
            p_u1p: CondTable::new("factor p(u1p|q)", vec![("q", c.q)], ("u1p", c.u1p), t.p_u1p)?,
            p_x1: CondTable::new("factor p(x1|q,u1c,u1p)", u1(c.q), ("x1", c.x1), t.p_x1)?,
            p_u2c: CondTable::new("factor p(u2c|q,u1c,u1p)", u1(c.q), ("u2c", c.u2c), t.p_u2c)?,
            p_u2p: CondTable::new("factor p(u2p|q,u1c,u1p)", u1(c.q), ("u2p", c.u2p), t.p_u2p)?,
            p_x2: CondTable::new(
                "factor p(x2|q,u2c,u2p)",
                vec![("q", c.q), ("u2c", c.u2c), ("u2p", c.u2p)],
                ("x2", c.x2),
                t.p_x2,
            )?,
        })
    }

    pub fn cards(&self) -> AuxCards {
        self.cards
    }

    /// Codebook marginal `p(u2c|q) = Σ p(u2c|u1c,u1p,q) p(u1c|q) p(u1p|q)`.
    pub fn u2c_given_q(&self) -> Vec<Vec<f64>> {
        self.mix_over_u1(&self.p_u2c)
    }

    /// Codebook marginal `p(u2p|q)`, the same mixture for U2p.
    pub fn u2p_given_q(&self) -> Vec<Vec<f64>> {
        self.mix_over_u1(&self.p_u2p)
    }

    fn mix_over_u1(&self, table: &CondTable) -> Vec<Vec<f64>> {
        let c = self.cards;
        (0..c.q)
            .map(|q| {
                let mut row = vec![0.0; table.child_card()];
                for u1c in 0..c.u1c {
                    for u1p in 0..c.u1p {
                        let w = self.p_u1c.row(q)[u1c] * self.p_u1p.row(q)[u1p];
                        for (acc, &p) in row.iter_mut().zip(table.row_of(&[q, u1c, u1p])) {
                            *acc += w * p;
                        }
                    }
                }
                row
            })
            .collect()
    }
}

/// Full joint over `(Q,U1p,U1c,U2c,U2p,X1,X2,Y1,Y2)`: the seven factors times the channel.
pub fn compose(channel: &ChannelSpec, aux: &AuxFactorization) -> Result<JointPmf, PmfError> {
    let c = aux.cards();
    if channel.x1_card() != c.x1 {
        return Err(PmfError::CardinalityMismatch {
            var: Var::X1,
            channel: channel.x1_card(),
            aux: c.x1,
        });
    }
    if channel.x2_card() != c.x2 {
        return Err(PmfError::CardinalityMismatch {
            var: Var::X2,
            channel: channel.x2_card(),
            aux: c.x2,
        });
    }
    let roster = Roster::new(vec![
        (Var::Q, c.q),
        (Var::U1p, c.u1p),
        (Var::U1c, c.u1c),
        (Var::U2c, c.u2c),
        (Var::U2p, c.u2p),
        (Var::X1, c.x1),
        (Var::X2, c.x2),
        (Var::Y1, channel.y1_card()),
        (Var::Y2, channel.y2_card()),
    ])?;
    let ys = channel.y1_card() * channel.y2_card();
    let mut mass = Vec::with_capacity(roster.size());
    for q in 0..c.q {
        let pq = aux.p_q.row(0)[q];
        for u1p in 0..c.u1p {
            for u1c in 0..c.u1c {
                let pu1 = pq * aux.p_u1c.row(q)[u1c] * aux.p_u1p.row(q)[u1p];
                let parents = [q, u1c, u1p];
                for u2c in 0..c.u2c {
                    let pu2c = pu1 * aux.p_u2c.row_of(&parents)[u2c];
                    for u2p in 0..c.u2p {
                        let pu2 = pu2c * aux.p_u2p.row_of(&parents)[u2p];
                        for x1 in 0..c.x1 {
                            let px1 = pu2 * aux.p_x1.row_of(&parents)[x1];
                            for x2 in 0..c.x2 {
                                let px = px1 * aux.p_x2.row_of(&[q, u2c, u2p])[x2];
                                let row = channel.row(x1, x2);
                                debug_assert_eq!(row.len(), ys);
                                mass.extend(row.iter().map(|&w| px * w));
                            }
                        }
                    }
                }
            }
        }
    }
    JointPmf::from_parts(roster, mass)
}
