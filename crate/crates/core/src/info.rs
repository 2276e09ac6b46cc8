//! Entropies and conditional mutual informations, in bits.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::pmf::{JointPmf, PmfError, Var, DERIVED_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfoError {
    #[error(transparent)]
    Pmf(#[from] PmfError),
    #[error("variable {0} appears in more than one argument of {1}")]
    Overlap(Var, MiQuery),
    #[error("{0} has an empty argument")]
    EmptyArgument(MiQuery),
    #[error("malformed information term `{0}`")]
    Malformed(String),
    #[error("{query} evaluated to {value:e} bits, beyond rounding residue")]
    Inconsistent { query: MiQuery, value: f64 },
}

/// `I(left; right | given)`, with `given` possibly empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MiQuery {
    pub left: Vec<Var>,
    pub right: Vec<Var>,
    pub given: Vec<Var>,
}

impl MiQuery {
    pub fn new(left: &[Var], right: &[Var], given: &[Var]) -> Self {
        Self {
            left: left.to_vec(),
            right: right.to_vec(),
            given: given.to_vec(),
        }
    }

    fn check(&self) -> Result<(), InfoError> {
        if self.left.is_empty() || self.right.is_empty() {
            return Err(InfoError::EmptyArgument(self.clone()));
        }
        let all: Vec<Var> = self
            .left
            .iter()
            .chain(&self.right)
            .chain(&self.given)
            .copied()
            .collect();
        for (i, v) in all.iter().enumerate() {
            if all[..i].contains(v) {
                return Err(InfoError::Overlap(*v, self.clone()));
            }
        }
        Ok(())
    }
}

fn join(vars: &[Var]) -> String {
    vars.iter().map(|v| v.name()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for MiQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "I({};{}", join(&self.left), join(&self.right))?;
        if !self.given.is_empty() {
            write!(f, "|{}", join(&self.given))?;
        }
        f.write_str(")")
    }
}

impl FromStr for MiQuery {
    type Err = InfoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || InfoError::Malformed(s.to_string());
        let body = s
            .trim()
            .strip_prefix("I(")
            .and_then(|b| b.strip_suffix(')'))
            .ok_or_else(malformed)?;
        let (args, given) = match body.split_once('|') {
            Some((a, g)) => (a, Some(g)),
            None => (body, None),
        };
        let (left, right) = args.split_once(';').ok_or_else(malformed)?;
        let parse = |part: &str| -> Result<Vec<Var>, InfoError> {
            part.split(',')
                .map(|name| name.parse::<Var>().map_err(InfoError::from))
                .collect()
        };
        Ok(Self {
            left: parse(left)?,
            right: parse(right)?,
            given: match given {
                Some(g) => parse(g)?,
                None => Vec::new(),
            },
        })
    }
}

impl Serialize for MiQuery {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MiQuery {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `H(subset)` in bits, with `0 log 0 = 0`.
pub fn entropy(pmf: &JointPmf, subset: &[Var]) -> Result<f64, InfoError> {
    let marginal = pmf.marginalize(subset)?;
    Ok(marginal
        .mass()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum::<f64>()
        // a marginal cell can exceed 1 by an ulp
        .max(0.0))
}

fn entropy_or_zero(pmf: &JointPmf, subset: &[Var]) -> Result<f64, InfoError> {
    if subset.is_empty() {
        Ok(0.0)
    } else {
        entropy(pmf, subset)
    }
}

/// `I(A;B|C) = H(A,C) + H(B,C) - H(A,B,C) - H(C)` without any clamping, so
/// rounding residue shows up with its sign.
pub fn cond_mutual_info_raw(pmf: &JointPmf, q: &MiQuery) -> Result<f64, InfoError> {
    q.check()?;
    let ac: Vec<Var> = q.left.iter().chain(&q.given).copied().collect();
    let bc: Vec<Var> = q.right.iter().chain(&q.given).copied().collect();
    let abc: Vec<Var> = q.left.iter().chain(&bc).copied().collect();
    Ok(entropy(pmf, &ac)? + entropy(pmf, &bc)?
        - entropy(pmf, &abc)?
        - entropy_or_zero(pmf, &q.given)?)
}

/// `I(A;B|C)` in bits.
///
/// Negative rounding residue down to `-1e-9` is clamped to zero; anything
/// more negative is reported as [`InfoError::Inconsistent`].
pub fn cond_mutual_info(pmf: &JointPmf, q: &MiQuery) -> Result<f64, InfoError> {
    let value = cond_mutual_info_raw(pmf, q)?;
    if value >= 0.0 {
        Ok(value)
    } else if value >= -DERIVED_TOL {
        Ok(0.0)
    } else {
        Err(InfoError::Inconsistent {
            query: q.clone(),
            value,
        })
    }
}

/// Parses and evaluates a term such as `"I(U2c;U1p|Q)"`.
pub fn mi(pmf: &JointPmf, term: &str) -> Result<f64, InfoError> {
    cond_mutual_info(pmf, &term.parse()?)
}

/// One line of [`property_suite`]: the worst value seen for a property and
/// whether it is within tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub property: &'static str,
    pub worst: f64,
    pub passes: bool,
}

/// Basic information identities over every pair of roster variables,
/// unconditioned and conditioned on each single other variable:
/// non-negativity (smallest raw value) and symmetry, plus the chain rule
/// `I(A;B,D) = I(A;B) + I(A;D|B)` over every ordered triple (largest
/// deviation). When the roster
/// holds the four auxiliaries and `Q`, the Markov structure of the private
/// layers is checked too.
pub fn property_suite(pmf: &JointPmf, tol: f64) -> Result<Vec<PropertyCheck>, InfoError> {
    let vars: Vec<Var> = pmf.roster().vars().collect();
    let mut min_mi = f64::INFINITY;
    let mut asymmetry = 0.0f64;
    let mut chain = 0.0f64;
    for (i, &a) in vars.iter().enumerate() {
        for &b in &vars[i + 1..] {
            let others = vars.iter().copied().filter(|&v| v != a && v != b);
            let conditions = std::iter::once(None).chain(others.map(Some));
            for c in conditions {
                let given: Vec<Var> = c.into_iter().collect();
                let ab = cond_mutual_info_raw(pmf, &MiQuery::new(&[a], &[b], &given))?;
                let ba = cond_mutual_info_raw(pmf, &MiQuery::new(&[b], &[a], &given))?;
                min_mi = min_mi.min(ab);
                asymmetry = asymmetry.max((ab - ba).abs());
                if c.is_some() {
                    continue;
                }
                for &d in vars.iter().filter(|&&v| v != a && v != b) {
                    let joint = cond_mutual_info_raw(pmf, &MiQuery::new(&[a], &[b, d], &given))?;
                    let mut bd = given.clone();
                    bd.push(b);
                    let split = ab + cond_mutual_info_raw(pmf, &MiQuery::new(&[a], &[d], &bd))?;
                    chain = chain.max((joint - split).abs());
                }
            }
        }
    }
    let mut out = vec![
        PropertyCheck {
            property: "non-negativity",
            worst: if min_mi.is_finite() { min_mi } else { 0.0 },
            passes: !(min_mi < -tol),
        },
        PropertyCheck {
            property: "symmetry",
            worst: asymmetry,
            passes: asymmetry <= tol,
        },
        PropertyCheck {
            property: "chain rule",
            worst: chain,
            passes: chain <= tol,
        },
    ];
    use Var::*;
    if [Q, U1p, U1c, U2c, U2p].iter().all(|&v| pmf.roster().contains(v)) {
        let markov = cond_mutual_info_raw(pmf, &MiQuery::new(&[U2p], &[U2c], &[U1p, U1c, Q]))?;
        out.push(PropertyCheck {
            property: "markov I(U2p;U2c|U1p,U1c,Q)",
            worst: markov,
            passes: markov <= tol,
        });
    }
    Ok(out)
}
