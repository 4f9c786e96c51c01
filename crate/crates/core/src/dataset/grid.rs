use super::spec::{DatasetSpec, FactorKind, FactorName, FactorVector};
use crate::error::{domain, Result};
use crate::nn::linspace;

/// A regular `g x g` grid over two factors, other factors held at mid-range.
///
/// Point `(i, j)` (stored at `i * g + j`) has the first factor at its `i`-th grid value
/// and the second at its `j`-th.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorGrid {
    pub axis_factors: [FactorName; 2],
    pub size: usize,
    pub axis_values: [Vec<f64>; 2],
    pub points: Vec<FactorVector>,
    pub holdout_mask: Vec<bool>,
}

impl FactorGrid {
    pub fn point(&self, i: usize, j: usize) -> &FactorVector {
        &self.points[i * self.size + j]
    }

    pub fn held_out(&self, i: usize, j: usize) -> bool {
        self.holdout_mask[i * self.size + j]
    }
}

pub fn make_factor_grid(spec: &DatasetSpec, f1: FactorName, f2: FactorName, g: usize) -> Result<FactorGrid> {
    if g < 2 {
        return Err(domain!("grid resolution must be at least 2, got {g}"));
    }
    if f1 == f2 {
        return Err(domain!("grid axes must be two different factors"));
    }
    let axis = |name: FactorName| -> Result<Vec<f64>> {
        match spec.factor(name) {
            Some(f) if f.is_varying() => {
                let (lo, hi) = f.range();
                Ok(linspace(lo, hi, g))
            }
            _ => Err(domain!("grid factor {name} is not a varying factor of the dataset")),
        }
    };
    let (a1, a2) = (axis(f1)?, axis(f2)?);
    let mut base = FactorVector::new();
    for f in &spec.factors {
        let v = match &f.kind {
            FactorKind::Constant(v) => *v,
            FactorKind::Uniform { lo, hi } => 0.5 * (lo + hi),
            FactorKind::Discrete(vs) => vs[0],
        };
        base.set(f.name, v);
    }
    let mut points = Vec::with_capacity(g * g);
    let mut holdout_mask = Vec::with_capacity(g * g);
    for &v1 in &a1 {
        for &v2 in &a2 {
            let p = base.clone().with(f1, v1).with(f2, v2);
            holdout_mask.push(spec.in_holdout(&p));
            points.push(p);
        }
    }
    Ok(FactorGrid {
        axis_factors: [f1, f2],
        size: g,
        axis_values: [a1, a2],
        points,
        holdout_mask,
    })
}
