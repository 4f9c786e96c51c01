//! Ground-truth factor and dataset descriptions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, domain, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorName {
    X,
    Y,
    Size,
    Shape,
    Angle,
    Hue,
    Saturation,
    Value,
    Red,
    Green,
    Blue,
}

impl FactorName {
    pub const ALL: [FactorName; 11] = [
        FactorName::X,
        FactorName::Y,
        FactorName::Size,
        FactorName::Shape,
        FactorName::Angle,
        FactorName::Hue,
        FactorName::Saturation,
        FactorName::Value,
        FactorName::Red,
        FactorName::Green,
        FactorName::Blue,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FactorName::X => "x",
            FactorName::Y => "y",
            FactorName::Size => "size",
            FactorName::Shape => "shape",
            FactorName::Angle => "angle",
            FactorName::Hue => "hue",
            FactorName::Saturation => "saturation",
            FactorName::Value => "value",
            FactorName::Red => "red",
            FactorName::Green => "green",
            FactorName::Blue => "blue",
        }
    }

    pub fn is_hsv(self) -> bool {
        matches!(self, FactorName::Hue | FactorName::Saturation | FactorName::Value)
    }

    pub fn is_rgb(self) -> bool {
        matches!(self, FactorName::Red | FactorName::Green | FactorName::Blue)
    }

    /// Value used when a dataset does not mention the factor.
    pub fn default_value(self) -> f64 {
        match self {
            FactorName::X | FactorName::Y => 0.5,
            FactorName::Size => 0.2,
            FactorName::Shape | FactorName::Angle | FactorName::Hue => 0.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for FactorName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FactorName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FactorName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| domain!("unknown factor `{s}`"))
    }
}

/// Sprite shapes, encoded in the `shape` factor as 0, 1 and 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Circle,
    Square,
    Triangle,
}

impl Shape {
    pub fn from_code(code: f64) -> Result<Self> {
        match code {
            c if c == 0.0 => Ok(Shape::Circle),
            c if c == 1.0 => Ok(Shape::Square),
            c if c == 2.0 => Ok(Shape::Triangle),
            c => Err(domain!("unknown shape code {c} (expected 0, 1 or 2)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FactorKind {
    Constant(f64),
    Uniform { lo: f64, hi: f64 },
    Discrete(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub name: FactorName,
    pub kind: FactorKind,
}

impl FactorSpec {
    pub fn constant(name: FactorName, v: f64) -> Self {
        FactorSpec {
            name,
            kind: FactorKind::Constant(v),
        }
    }

    pub fn uniform(name: FactorName, lo: f64, hi: f64) -> Self {
        FactorSpec {
            name,
            kind: FactorKind::Uniform { lo, hi },
        }
    }

    pub fn is_varying(&self) -> bool {
        match &self.kind {
            FactorKind::Constant(_) => false,
            FactorKind::Uniform { lo, hi } => hi > lo,
            FactorKind::Discrete(v) => v.len() > 1,
        }
    }

    /// Smallest and largest value the factor can take.
    pub fn range(&self) -> (f64, f64) {
        match &self.kind {
            FactorKind::Constant(v) => (*v, *v),
            FactorKind::Uniform { lo, hi } => (*lo, *hi),
            FactorKind::Discrete(v) => (
                v.iter().copied().fold(f64::INFINITY, f64::min),
                v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
        }
    }

    fn validate(&self) -> Result<()> {
        let check = |v: f64| -> Result<()> {
            if self.name == FactorName::Shape {
                Shape::from_code(v).map(|_| ())
            } else if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(domain!("factor {} value {v} outside [0, 1]", self.name))
            }
        };
        match &self.kind {
            FactorKind::Constant(v) => check(*v),
            FactorKind::Uniform { lo, hi } => {
                if lo > hi {
                    return Err(domain!("factor {}: lo {lo} > hi {hi}", self.name));
                }
                check(*lo)?;
                check(*hi)
            }
            FactorKind::Discrete(vs) => {
                if vs.is_empty() {
                    return Err(domain!("factor {} has an empty value set", self.name));
                }
                vs.iter().try_for_each(|&v| check(v))
            }
        }
    }
}

/// A quarter of the two-factor product space excluded from training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum Holdout {
    #[default]
    None,
    /// Middle half of both factor ranges.
    CenterQuarter { factors: [FactorName; 2] },
    /// Upper half of both factor ranges.
    CornerQuarter { factors: [FactorName; 2] },
}


fn default_antialias() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub image_size: usize,
    pub channels: usize,
    pub factors: Vec<FactorSpec>,
    #[serde(default = "default_antialias")]
    pub antialias_factor: usize,
    #[serde(default)]
    pub holdout: Holdout,
    #[serde(default)]
    pub blank_fraction: f64,
    /// Sample the full factor space, including any held-out region.
    #[serde(default)]
    pub evaluate_holdout: bool,
    #[serde(default)]
    pub seed: u64,
}

/// Named datasets with circle sprites.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CirclesDataset {
    XY,
    XH,
    RG,
    XYHSmall,
    XYHTiny,
}

impl CirclesDataset {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "x-y" => CirclesDataset::XY,
            "x-h" => CirclesDataset::XH,
            "r-g" => CirclesDataset::RG,
            "x-y-h-small" => CirclesDataset::XYHSmall,
            "x-y-h-tiny" => CirclesDataset::XYHTiny,
            _ => return None,
        })
    }
}

impl DatasetSpec {
    /// The circles datasets at `image_size`, RGB, antialiasing factor 5.
    pub fn circles(which: CirclesDataset, image_size: usize) -> Self {
        use FactorName::*;
        let u = FactorSpec::uniform;
        let c = FactorSpec::constant;
        let factors = match which {
            CirclesDataset::XY => vec![
                u(X, 0.2, 0.8),
                u(Y, 0.2, 0.8),
                c(Size, 0.2),
                c(Red, 1.0),
                c(Green, 1.0),
                c(Blue, 1.0),
            ],
            CirclesDataset::XH => vec![
                u(X, 0.2, 0.8),
                c(Y, 0.5),
                c(Size, 0.3),
                u(Hue, 0.2, 0.8),
                c(Saturation, 1.0),
                c(Value, 1.0),
            ],
            CirclesDataset::RG => vec![
                c(X, 0.5),
                c(Y, 0.5),
                c(Size, 0.5),
                u(Red, 0.4, 0.8),
                u(Green, 0.4, 0.8),
                c(Blue, 1.0),
            ],
            CirclesDataset::XYHSmall | CirclesDataset::XYHTiny => vec![
                u(X, 0.2, 0.8),
                u(Y, 0.2, 0.8),
                c(Size, if which == CirclesDataset::XYHSmall { 0.1 } else { 0.075 }),
                u(Hue, 0.2, 0.8),
                c(Saturation, 1.0),
                c(Value, 1.0),
            ],
        };
        DatasetSpec {
            image_size,
            channels: 3,
            factors,
            antialias_factor: 5,
            holdout: Holdout::None,
            blank_fraction: 0.0,
            evaluate_holdout: false,
            seed: 0,
        }
    }

    /// Procedural stand-in for colored sprites: three shapes with random position, scale,
    /// rotation and HSV color.
    pub fn colored_sprites(image_size: usize) -> Self {
        use FactorName::*;
        DatasetSpec {
            image_size,
            channels: 3,
            factors: vec![
                FactorSpec {
                    name: Shape,
                    kind: FactorKind::Discrete(vec![0.0, 1.0, 2.0]),
                },
                FactorSpec::uniform(Size, 0.15, 0.3),
                FactorSpec::uniform(Angle, 0.0, 1.0),
                FactorSpec::uniform(X, 0.15, 0.85),
                FactorSpec::uniform(Y, 0.15, 0.85),
                FactorSpec::uniform(Hue, 0.0, 1.0),
                FactorSpec::uniform(Saturation, 0.3, 0.7),
                FactorSpec::uniform(Value, 0.3, 0.7),
            ],
            antialias_factor: 5,
            holdout: Holdout::None,
            blank_fraction: 0.0,
            evaluate_holdout: false,
            seed: 0,
        }
    }

    pub fn with_holdout(mut self, holdout: Holdout) -> Self {
        self.holdout = holdout;
        self
    }

    pub fn factor(&self, name: FactorName) -> Option<&FactorSpec> {
        self.factors.iter().find(|f| f.name == name)
    }

    pub fn varying_factors(&self) -> Vec<&FactorSpec> {
        self.factors.iter().filter(|f| f.is_varying()).collect()
    }

    /// Color space declared by the factors: `Some(true)` for HSV, `Some(false)` for RGB.
    pub fn uses_hsv(&self) -> Option<bool> {
        let hsv = self.factors.iter().any(|f| f.name.is_hsv());
        let rgb = self.factors.iter().any(|f| f.name.is_rgb());
        match (hsv, rgb) {
            (true, false) => Some(true),
            (false, true) => Some(false),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 {
            return Err(config_err!("image_size must be positive"));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(config_err!("channels must be 1 or 3, got {}", self.channels));
        }
        if self.antialias_factor == 0 {
            return Err(config_err!("antialias_factor must be positive"));
        }
        if !(0.0..=1.0).contains(&self.blank_fraction) {
            return Err(config_err!("blank_fraction {} outside [0, 1]", self.blank_fraction));
        }
        let mut seen = BTreeMap::new();
        for f in &self.factors {
            if seen.insert(f.name, ()).is_some() {
                return Err(config_err!("factor {} declared twice", f.name));
            }
            f.validate()?;
        }
        let hsv = self.factors.iter().any(|f| f.name.is_hsv());
        let rgb = self.factors.iter().any(|f| f.name.is_rgb());
        if hsv && rgb {
            return Err(config_err!("dataset mixes HSV and RGB color factors"));
        }
        if let Some(pair) = self.holdout_factors() {
            if pair[0] == pair[1] {
                return Err(config_err!("holdout needs two distinct factors"));
            }
            for name in pair {
                match self.factor(name).map(|f| &f.kind) {
                    Some(FactorKind::Uniform { lo, hi }) if hi > lo => {}
                    _ => {
                        return Err(config_err!(
                            "holdout factor {name} must be a varying uniform-range factor"
                        ))
                    }
                }
            }
        }
        Ok(())
    }

    pub fn holdout_factors(&self) -> Option<[FactorName; 2]> {
        match &self.holdout {
            Holdout::None => None,
            Holdout::CenterQuarter { factors } | Holdout::CornerQuarter { factors } => Some(*factors),
        }
    }

    /// Whether a configuration lies in the held-out quarter of factor space.
    pub fn in_holdout(&self, factors: &FactorVector) -> bool {
        let Some(pair) = self.holdout_factors() else {
            return false;
        };
        let center = matches!(self.holdout, Holdout::CenterQuarter { .. });
        pair.iter().all(|&name| {
            let (lo, hi) = self.factor(name).map_or((0.0, 1.0), |f| f.range());
            let v = factors.get(name).unwrap_or_else(|| name.default_value());
            let q = (hi - lo) / 4.0;
            if center {
                v >= lo + q && v <= hi - q
            } else {
                v >= lo + 2.0 * q
            }
        })
    }
}

/// Values of named ground-truth factors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FactorVector(pub BTreeMap<FactorName, f64>);

impl FactorVector {
    pub fn new() -> Self {
        FactorVector(BTreeMap::new())
    }

    pub fn with(mut self, name: FactorName, v: f64) -> Self {
        self.0.insert(name, v);
        self
    }

    pub fn get(&self, name: FactorName) -> Option<f64> {
        self.0.get(&name).copied()
    }

    pub fn set(&mut self, name: FactorName, v: f64) {
        self.0.insert(name, v);
    }
}

impl<const N: usize> From<[(FactorName, f64); N]> for FactorVector {
    fn from(v: [(FactorName, f64); N]) -> Self {
        FactorVector(v.into_iter().collect())
    }
}

/// One sampled dataset item: a factor configuration or a blank image.
#[derive(Clone, Debug, PartialEq)]
pub enum Sample {
    Factors(FactorVector),
    Blank,
}

impl Sample {
    pub fn factors(&self) -> Option<&FactorVector> {
        match self {
            Sample::Factors(f) => Some(f),
            Sample::Blank => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xy_row_matches_circles_table() {
        let spec = DatasetSpec::circles(CirclesDataset::XY, 64);
        assert_eq!(spec.factor(FactorName::X).unwrap().range(), (0.2, 0.8));
        assert_eq!(spec.factor(FactorName::Y).unwrap().range(), (0.2, 0.8));
        assert_eq!(spec.factor(FactorName::Size).unwrap().kind, FactorKind::Constant(0.2));
        for c in [FactorName::Red, FactorName::Green, FactorName::Blue] {
            assert_eq!(spec.factor(c).unwrap().kind, FactorKind::Constant(1.0));
        }
        assert_eq!(spec.uses_hsv(), Some(false));
        assert_eq!(spec.antialias_factor, 5);
        spec.validate().unwrap();
    }

    #[test]
    fn small_and_tiny_sizes() {
        let s = DatasetSpec::circles(CirclesDataset::XYHSmall, 64);
        assert_eq!(s.factor(FactorName::Size).unwrap().kind, FactorKind::Constant(0.1));
        let t = DatasetSpec::circles(CirclesDataset::XYHTiny, 64);
        assert_eq!(t.factor(FactorName::Size).unwrap().kind, FactorKind::Constant(0.075));
        assert_eq!(t.uses_hsv(), Some(true));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = DatasetSpec::circles(CirclesDataset::XY, 32);
        s.factors.push(FactorSpec::constant(FactorName::Hue, 0.5));
        assert!(s.validate().is_err(), "mixed color spaces");
        let mut s = DatasetSpec::circles(CirclesDataset::XY, 32);
        s.factors[0] = FactorSpec::uniform(FactorName::X, 0.8, 0.2);
        assert!(s.validate().is_err(), "lo > hi");
        let mut s = DatasetSpec::circles(CirclesDataset::XY, 32);
        s.factors[2] = FactorSpec::constant(FactorName::Size, 1.5);
        assert!(s.validate().is_err(), "constant outside [0,1]");
        let s = DatasetSpec::circles(CirclesDataset::XY, 32).with_holdout(Holdout::CenterQuarter {
            factors: [FactorName::X, FactorName::Size],
        });
        assert!(s.validate().is_err(), "holdout on a constant factor");
    }

    #[test]
    fn spec_json_round_trip_and_unknown_keys() {
        let spec = DatasetSpec::circles(CirclesDataset::XH, 64).with_holdout(Holdout::CenterQuarter {
            factors: [FactorName::X, FactorName::Hue],
        });
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<DatasetSpec>(&text).unwrap(), spec);
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["colour"] = 1.into();
        assert!(serde_json::from_value::<DatasetSpec>(v).is_err());
    }
}
