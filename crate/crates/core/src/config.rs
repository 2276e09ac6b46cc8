//! JSON instance documents: cardinalities, the channel table and the seven
//! factor tables, each as nested arrays in signature order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::instance::Instance;
use crate::pmf::{AuxCards, AuxFactorization, ChannelSpec, FactorTables, PmfError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed config: {0}")]
    Json(serde_json::Error),
    #[error("missing table {0}")]
    MissingTable(String),
    #[error("unknown factor table {0}")]
    UnknownTable(String),
    #[error("{table}: expected {expected} entries at {at}, found {found}")]
    Shape {
        table: String,
        at: String,
        expected: usize,
        found: usize,
    },
    #[error("{table}: entry at {at} is not a number")]
    NotANumber { table: String, at: String },
    #[error(transparent)]
    Pmf(#[from] PmfError),
}

// Not `#[from]`: the message already embeds the parser error, so exposing it
// as a source would print it twice in a chained report.
impl From<serde_json::Error> for ConfigError {
    fn from(e: serde_json::Error) -> Self {
        ConfigError::Json(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cardinalities {
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "U1p")]
    pub u1p: usize,
    #[serde(rename = "U1c")]
    pub u1c: usize,
    #[serde(rename = "U2c")]
    pub u2c: usize,
    #[serde(rename = "U2p")]
    pub u2p: usize,
    #[serde(rename = "X1")]
    pub x1: usize,
    #[serde(rename = "X2")]
    pub x2: usize,
    #[serde(rename = "Y1")]
    pub y1: usize,
    #[serde(rename = "Y2")]
    pub y2: usize,
}

/// Serialized instance. Tables stay as raw JSON until [`InstanceConfig::to_instance`]
/// checks their shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub cardinalities: Cardinalities,
    /// `p(y1,y2|x1,x2)` indexed `[x1][x2][y1][y2]`.
    pub channel: Value,
    pub factors: BTreeMap<String, Value>,
}

pub const FACTOR_NAMES: [&str; 7] = [
    "p(q)",
    "p(u1c|q)",
    "p(u1p|q)",
    "p(x1|q,u1c,u1p)",
    "p(u2c|q,u1c,u1p)",
    "p(u2p|q,u1c,u1p)",
    "p(x2|q,u2c,u2p)",
];

fn flatten(table: &str, v: &Value, dims: &[(&str, usize)]) -> Result<Vec<f64>, ConfigError> {
    let mut out = Vec::with_capacity(dims.iter().map(|d| d.1).product());
    walk(table, v, dims, &mut Vec::new(), &mut out)?;
    Ok(out)
}

fn walk(
    table: &str,
    v: &Value,
    dims: &[(&str, usize)],
    path: &mut Vec<String>,
    out: &mut Vec<f64>,
) -> Result<(), ConfigError> {
    let at = || {
        if path.is_empty() {
            "top level".to_string()
        } else {
            path.join(",")
        }
    };
    let Some(&(name, n)) = dims.first() else {
        return match v.as_f64() {
            Some(x) => {
                out.push(x);
                Ok(())
            }
            None => Err(ConfigError::NotANumber {
                table: table.to_string(),
                at: at(),
            }),
        };
    };
    let found = v.as_array().map_or(0, Vec::len);
    if !v.is_array() || found != n {
        return Err(ConfigError::Shape {
            table: table.to_string(),
            at: at(),
            expected: n,
            found,
        });
    }
    for (i, item) in v.as_array().expect("checked above").iter().enumerate() {
        path.push(format!("{name}={i}"));
        walk(table, item, &dims[1..], path, out)?;
        path.pop();
    }
    Ok(())
}

fn nest(flat: &[f64], dims: &[usize]) -> Value {
    match dims.split_first() {
        None => Value::from(flat[0]),
        Some((&n, rest)) => {
            let stride: usize = rest.iter().product();
            Value::Array(
                (0..n)
                    .map(|i| nest(&flat[i * stride..(i + 1) * stride], rest))
                    .collect(),
            )
        }
    }
}

impl InstanceConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Checks every table's shape and every conditional row.
    pub fn to_instance(&self) -> Result<Instance, ConfigError> {
        if let Some(k) = self.factors.keys().find(|k| !FACTOR_NAMES.contains(&k.as_str())) {
            return Err(ConfigError::UnknownTable(k.clone()));
        }
        let c = self.cardinalities;
        let factor = |name: &str, dims: &[(&str, usize)]| -> Result<Vec<f64>, ConfigError> {
            let v = self
                .factors
                .get(name)
                .ok_or_else(|| ConfigError::MissingTable(format!("factor {name}")))?;
            flatten(&format!("factor {name}"), v, dims)
        };
        let u1 = |child: (&'static str, usize)| [("q", c.q), ("u1c", c.u1c), ("u1p", c.u1p), child];
        let tables = FactorTables {
            p_q: factor("p(q)", &[("q", c.q)])?,
            p_u1c: factor("p(u1c|q)", &[("q", c.q), ("u1c", c.u1c)])?,
            p_u1p: factor("p(u1p|q)", &[("q", c.q), ("u1p", c.u1p)])?,
            p_x1: factor("p(x1|q,u1c,u1p)", &u1(("x1", c.x1)))?,
            p_u2c: factor("p(u2c|q,u1c,u1p)", &u1(("u2c", c.u2c)))?,
            p_u2p: factor("p(u2p|q,u1c,u1p)", &u1(("u2p", c.u2p)))?,
            p_x2: factor(
                "p(x2|q,u2c,u2p)",
                &[("q", c.q), ("u2c", c.u2c), ("u2p", c.u2p), ("x2", c.x2)],
            )?,
        };
        let channel = flatten(
            "channel p(y1,y2|x1,x2)",
            &self.channel,
            &[("x1", c.x1), ("x2", c.x2), ("y1", c.y1), ("y2", c.y2)],
        )?;
        let cards = AuxCards {
            q: c.q,
            u1p: c.u1p,
            u1c: c.u1c,
            u2c: c.u2c,
            u2p: c.u2p,
            x1: c.x1,
            x2: c.x2,
        };
        Ok(Instance {
            label: self.label.clone(),
            channel: ChannelSpec::new(c.x1, c.x2, c.y1, c.y2, channel)?,
            aux: AuxFactorization::new(cards, tables)?,
        })
    }

    pub fn from_instance(inst: &Instance) -> Self {
        let a = &inst.aux;
        let k = a.cards();
        let ch = &inst.channel;
        let u1 = |child| vec![k.q, k.u1c, k.u1p, child];
        let factors = [
            ("p(q)", a.p_q.data(), vec![k.q]),
            ("p(u1c|q)", a.p_u1c.data(), vec![k.q, k.u1c]),
            ("p(u1p|q)", a.p_u1p.data(), vec![k.q, k.u1p]),
            ("p(x1|q,u1c,u1p)", a.p_x1.data(), u1(k.x1)),
            ("p(u2c|q,u1c,u1p)", a.p_u2c.data(), u1(k.u2c)),
            ("p(u2p|q,u1c,u1p)", a.p_u2p.data(), u1(k.u2p)),
            ("p(x2|q,u2c,u2p)", a.p_x2.data(), vec![k.q, k.u2c, k.u2p, k.x2]),
        ]
        .into_iter()
        .map(|(name, data, dims)| (name.to_string(), nest(data, &dims)))
        .collect();
        Self {
            label: inst.label.clone(),
            cardinalities: Cardinalities {
                q: k.q,
                u1p: k.u1p,
                u1c: k.u1c,
                u2c: k.u2c,
                u2p: k.u2p,
                x1: k.x1,
                x2: k.x2,
                y1: ch.y1_card(),
                y2: ch.y2_card(),
            },
            channel: nest(
                ch.table().data(),
                &[ch.x1_card(), ch.x2_card(), ch.y1_card(), ch.y2_card()],
            ),
            factors,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::inst_a;

    #[test]
    fn round_trip_through_json() {
        let inst = inst_a();
        let text = serde_json::to_string(&InstanceConfig::from_instance(&inst)).unwrap();
        let back = InstanceConfig::from_json(&text).unwrap().to_instance().unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn row_sum_diagnostic_names_table_and_row() {
        let mut cfg = InstanceConfig::from_instance(&inst_a());
        cfg.factors.insert("p(u1c|q)".into(), serde_json::json!([[0.49, 0.49]]));
        let err = cfg.to_instance().unwrap_err().to_string();
        assert!(err.contains("factor p(u1c|q), row q=0 sums to 0.98"), "{err}");
    }

    #[test]
    fn shape_errors_point_at_the_entry() {
        let mut cfg = InstanceConfig::from_instance(&inst_a());
        cfg.factors.insert("p(u1c|q)".into(), serde_json::json!([[0.5, 0.25, 0.25]]));
        let err = cfg.to_instance().unwrap_err().to_string();
        assert_eq!(err, "factor p(u1c|q): expected 2 entries at q=0, found 3");
        cfg.factors.insert("p(u1c|q)".into(), serde_json::json!([[0.5, "x"]]));
        assert!(matches!(cfg.to_instance(), Err(ConfigError::NotANumber { .. })));
        cfg.factors.remove("p(u1c|q)");
        assert!(matches!(cfg.to_instance(), Err(ConfigError::MissingTable(_))));
        cfg.factors.insert("p(w)".into(), serde_json::json!([1.0]));
        assert!(matches!(cfg.to_instance(), Err(ConfigError::UnknownTable(_))));
    }
}
