//! Search spaces, parameter values and assignments.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Str(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Float(f) => Some(*f),
            ParamValue::Str(_) => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x}"),
            ParamValue::Str(s) => f.write_str(s),
        }
    }
}

/// Parameter name → value, ordered by name.
pub type Assignment = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Continuous { low: f64, high: f64, log: bool },
    Integer { low: i64, high: i64 },
    Categorical { choices: Vec<ParamValue> },
}

pub const DEFAULT_GRID_POINTS: usize = 5;

/// One named search dimension. In config files:
/// `{ name, type = "continuous" | "integer" | "categorical", low, high, log,
/// choices, grid, grid_points }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDimension", into = "RawDimension")]
pub struct Dimension {
    pub name: String,
    pub domain: Domain,
    /// Explicit grid for grid search; otherwise derived from `grid_points`.
    pub grid: Option<Vec<ParamValue>>,
    pub grid_points: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDimension {
    name: String,
    #[serde(rename = "type")]
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    low: Option<ParamValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    high: Option<ParamValue>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    log: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    choices: Option<Vec<ParamValue>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<Vec<ParamValue>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid_points: Option<usize>,
}

impl TryFrom<RawDimension> for Dimension {
    type Error = String;

    fn try_from(r: RawDimension) -> std::result::Result<Self, String> {
        let need = |v: Option<ParamValue>, key: &str| v.ok_or_else(|| format!("dimension {:?} needs `{key}`", r.name));
        let domain = match r.kind.as_str() {
            "continuous" => {
                let num = |v: ParamValue, key: &str| v.as_f64().ok_or_else(|| format!("`{key}` must be a number"));
                Domain::Continuous {
                    low: num(need(r.low.clone(), "low")?, "low")?,
                    high: num(need(r.high.clone(), "high")?, "high")?,
                    log: r.log,
                }
            }
            "integer" => {
                let int = |v: ParamValue, key: &str| match v {
                    ParamValue::Int(i) => Ok(i),
                    _ => Err(format!("`{key}` must be an integer")),
                };
                Domain::Integer {
                    low: int(need(r.low.clone(), "low")?, "low")?,
                    high: int(need(r.high.clone(), "high")?, "high")?,
                }
            }
            "categorical" => Domain::Categorical {
                choices: r.choices.clone().ok_or_else(|| format!("dimension {:?} needs `choices`", r.name))?,
            },
            other => {
                return Err(format!("unknown dimension type {other:?} (expected continuous, integer or categorical)"))
            }
        };
        let stray = match domain {
            Domain::Categorical { .. } => r.low.is_some() || r.high.is_some() || r.log,
            Domain::Integer { .. } => r.choices.is_some() || r.log,
            Domain::Continuous { .. } => r.choices.is_some(),
        };
        if stray {
            return Err(format!("dimension {:?} has keys that do not apply to type {}", r.name, r.kind));
        }
        Ok(Dimension { name: r.name, domain, grid: r.grid, grid_points: r.grid_points })
    }
}

impl From<Dimension> for RawDimension {
    fn from(d: Dimension) -> Self {
        let (kind, low, high, log, choices) = match d.domain {
            Domain::Continuous { low, high, log } => {
                ("continuous", Some(ParamValue::Float(low)), Some(ParamValue::Float(high)), log, None)
            }
            Domain::Integer { low, high } => {
                ("integer", Some(ParamValue::Int(low)), Some(ParamValue::Int(high)), false, None)
            }
            Domain::Categorical { choices } => ("categorical", None, None, false, Some(choices)),
        };
        RawDimension {
            name: d.name,
            kind: kind.into(),
            low,
            high,
            log,
            choices,
            grid: d.grid,
            grid_points: d.grid_points,
        }
    }
}

impl Dimension {
    pub fn continuous(name: &str, low: f64, high: f64, log: bool) -> Self {
        Dimension { name: name.into(), domain: Domain::Continuous { low, high, log }, grid: None, grid_points: None }
    }

    pub fn integer(name: &str, low: i64, high: i64) -> Self {
        Dimension { name: name.into(), domain: Domain::Integer { low, high }, grid: None, grid_points: None }
    }

    pub fn categorical(name: &str, choices: Vec<ParamValue>) -> Self {
        Dimension { name: name.into(), domain: Domain::Categorical { choices }, grid: None, grid_points: None }
    }

    pub fn with_grid(mut self, grid: Vec<ParamValue>) -> Self {
        self.grid = Some(grid);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::config(format!("dimension {:?}: {msg}", self.name)));
        match &self.domain {
            Domain::Continuous { low, high, log } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return bad("requires finite low < high");
                }
                if *log && *low <= 0.0 {
                    return bad("log scale requires low > 0");
                }
            }
            Domain::Integer { low, high } if low >= high => return bad("requires low < high"),
            Domain::Categorical { choices } => {
                if choices.is_empty() {
                    return bad("categorical choices must be non-empty");
                }
                for (i, c) in choices.iter().enumerate() {
                    if choices[..i].contains(c) {
                        return bad("categorical choices must be unique");
                    }
                }
            }
            _ => {}
        }
        if self.grid_points == Some(0) {
            return bad("grid_points must be >= 1");
        }
        if let Some(g) = &self.grid {
            if g.is_empty() {
                return bad("explicit grid is empty");
            }
            if let Some(v) = g.iter().find(|v| !self.contains(v)) {
                return bad(&format!("grid value {v} outside the domain"));
            }
        }
        Ok(())
    }

    pub fn contains(&self, v: &ParamValue) -> bool {
        match (&self.domain, v) {
            (Domain::Continuous { low, high, .. }, v) => v.as_f64().is_some_and(|x| x >= *low && x <= *high),
            (Domain::Integer { low, high }, ParamValue::Int(i)) => i >= low && i <= high,
            (Domain::Categorical { choices }, v) => choices.contains(v),
            _ => false,
        }
    }

    /// Grid used by grid search.
    pub fn grid_values(&self) -> Vec<ParamValue> {
        if let Some(g) = &self.grid {
            return g.clone();
        }
        let points = self.grid_points.unwrap_or(DEFAULT_GRID_POINTS);
        match &self.domain {
            Domain::Continuous { low, high, log } => {
                if points == 1 {
                    return vec![ParamValue::Float(if *log { (low * high).sqrt() } else { (low + high) / 2.0 })];
                }
                (0..points)
                    .map(|i| {
                        let u = i as f64 / (points - 1) as f64;
                        let v =
                            if *log { (low.ln() + u * (high.ln() - low.ln())).exp() } else { low + u * (high - low) };
                        ParamValue::Float(v)
                    })
                    .collect()
            }
            Domain::Integer { low, high } => {
                let span = (high - low) as usize + 1;
                if span <= points {
                    return (*low..=*high).map(ParamValue::Int).collect();
                }
                let mut out: Vec<ParamValue> = (0..points)
                    .map(|i| {
                        let u = if points == 1 { 0.5 } else { i as f64 / (points - 1) as f64 };
                        ParamValue::Int(low + (u * (high - low) as f64).round() as i64)
                    })
                    .collect();
                out.dedup();
                out
            }
            Domain::Categorical { choices } => choices.clone(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self.domain, Domain::Continuous { .. })
    }

    /// Every value of a discrete dimension.
    pub(crate) fn all_values(&self) -> Option<Vec<ParamValue>> {
        match &self.domain {
            Domain::Continuous { .. } => None,
            Domain::Integer { low, high } => Some((*low..=*high).map(ParamValue::Int).collect()),
            Domain::Categorical { choices } => Some(choices.clone()),
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> ParamValue {
        match &self.domain {
            Domain::Continuous { low, high, log } => {
                let u: f64 = rng.gen();
                ParamValue::Float(if *log {
                    (low.ln() + u * (high.ln() - low.ln())).exp()
                } else {
                    low + u * (high - low)
                })
            }
            Domain::Integer { low, high } => ParamValue::Int(rng.gen_range(*low..=*high)),
            Domain::Categorical { choices } => choices[rng.gen_range(0..choices.len())].clone(),
        }
    }

    /// Coordinates in the unit cube: one for numeric dimensions (log-scaled
    /// where flagged), one-hot for categoricals.
    pub fn encode(&self, v: &ParamValue, out: &mut Vec<f64>) {
        match &self.domain {
            Domain::Continuous { low, high, log } => {
                let x = v.as_f64().unwrap_or(*low);
                out.push(if *log { (x.ln() - low.ln()) / (high.ln() - low.ln()) } else { (x - low) / (high - low) });
            }
            Domain::Integer { low, high } => {
                let x = v.as_f64().unwrap_or(*low as f64);
                out.push((x - *low as f64) / (high - low) as f64);
            }
            Domain::Categorical { choices } => out.extend(choices.iter().map(|c| (c == v) as u8 as f64)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSpace {
    pub dims: Vec<Dimension>,
}

impl ParamSpace {
    pub fn new(dims: Vec<Dimension>) -> Self {
        ParamSpace { dims }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, d) in self.dims.iter().enumerate() {
            d.validate()?;
            if self.dims[..i].iter().any(|o| o.name == d.name) {
                return Err(Error::config(format!("dimension {:?} listed twice", d.name)));
            }
        }
        Ok(())
    }

    /// Cartesian product of the dimension grids, first dimension slowest.
    pub fn grid(&self) -> Vec<Assignment> {
        product(&self.dims, &self.dims.iter().map(Dimension::grid_values).collect::<Vec<_>>())
    }

    pub fn grid_size(&self) -> usize {
        self.dims.iter().map(|d| d.grid_values().len()).product()
    }

    pub fn is_discrete(&self) -> bool {
        self.dims.iter().all(Dimension::is_discrete)
    }

    pub(crate) fn enumerate_discrete(&self) -> Option<Vec<Assignment>> {
        let values: Vec<Vec<ParamValue>> = self.dims.iter().map(Dimension::all_values).collect::<Option<_>>()?;
        Some(product(&self.dims, &values))
    }

    pub fn sample(&self, rng: &mut Rng) -> Assignment {
        self.dims.iter().map(|d| (d.name.clone(), d.sample(rng))).collect()
    }

    pub fn encode(&self, a: &Assignment) -> Vec<f64> {
        let mut out = Vec::new();
        for d in &self.dims {
            match a.get(&d.name) {
                Some(v) => d.encode(v, &mut out),
                None => panic!("assignment lacks dimension {}", d.name),
            }
        }
        out
    }

    pub fn contains(&self, a: &Assignment) -> bool {
        a.len() == self.dims.len() && self.dims.iter().all(|d| a.get(&d.name).is_some_and(|v| d.contains(v)))
    }
}

fn product(dims: &[Dimension], values: &[Vec<ParamValue>]) -> Vec<Assignment> {
    let mut out = vec![Assignment::new()];
    for (d, vals) in dims.iter().zip(values) {
        let mut next = Vec::with_capacity(out.len() * vals.len());
        for a in &out {
            for v in vals {
                let mut b = a.clone();
                b.insert(d.name.clone(), v.clone());
                next.push(b);
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn grids() {
        let d = Dimension::continuous("x", 0.0, 1.0, false);
        assert_eq!(d.grid_values().len(), 5);
        let l = Dimension::continuous("lr", 1e-3, 1e-1, true);
        let g: Vec<f64> = l.grid_values().iter().map(|v| v.as_f64().unwrap()).collect();
        assert!((g[2] - 1e-2).abs() < 1e-15);
        assert_eq!(
            Dimension::integer("k", 1, 3).grid_values(),
            vec![ParamValue::Int(1), ParamValue::Int(2), ParamValue::Int(3)]
        );
        let s = ParamSpace::new(vec![Dimension::integer("a", 0, 2), Dimension::integer("b", 0, 3)]);
        let grid = s.grid();
        assert_eq!(grid.len(), 12);
        assert_eq!(grid[1]["a"], ParamValue::Int(0));
        assert_eq!(grid[1]["b"], ParamValue::Int(1));
    }

    #[test]
    fn validation() {
        assert!(Dimension::continuous("x", 1.0, 1.0, false).validate().is_err());
        assert!(Dimension::continuous("x", 0.0, 1.0, true).validate().is_err());
        assert!(Dimension::categorical("c", vec![]).validate().is_err());
        let dup = vec![ParamValue::Int(1), ParamValue::Int(1)];
        assert!(Dimension::categorical("c", dup).validate().is_err());
        let s = ParamSpace::new(vec![Dimension::integer("a", 0, 2), Dimension::integer("a", 0, 3)]);
        assert!(s.validate().is_err());
        let g = Dimension::integer("a", 0, 2).with_grid(vec![ParamValue::Int(5)]);
        assert!(g.validate().is_err());
    }

    #[test]
    fn samples_stay_in_bounds_and_encode_to_unit_cube() {
        let s = ParamSpace::new(vec![
            Dimension::continuous("lr", 1e-3, 1.0, true),
            Dimension::integer("depth", 2, 9),
            Dimension::categorical("kind", vec![ParamValue::Str("a".into()), ParamValue::Str("b".into())]),
        ]);
        let mut r = rng::seeded(1);
        for _ in 0..200 {
            let a = s.sample(&mut r);
            assert!(s.contains(&a));
            let x = s.encode(&a);
            assert_eq!(x.len(), 4);
            assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn toml_shape() {
        let d: Dimension =
            toml::from_str("name = \"c\"\ntype = \"continuous\"\nlow = 0.01\nhigh = 100.0\nlog = true").unwrap();
        assert_eq!(d.domain, Domain::Continuous { low: 0.01, high: 100.0, log: true });
        let d: Dimension =
            toml::from_str("name = \"n\"\ntype = \"integer\"\nlow = 1\nhigh = 4\ngrid = [1, 4]").unwrap();
        assert_eq!(d.grid_values(), vec![ParamValue::Int(1), ParamValue::Int(4)]);
        assert!(toml::from_str::<Dimension>("name = \"n\"\ntype = \"integer\"\nlow = 1\nhigh = 4\nlog = true").is_err());
        let e =
            toml::from_str::<Dimension>("name = \"n\"\ntype = \"integer\"\nlow = 1\nhigh = 4\nstep = 2").unwrap_err();
        assert!(e.to_string().contains("step"));
        let back: Dimension = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }
}
