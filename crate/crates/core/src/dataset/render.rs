//! Supersampled rasterization of a single sprite on a black background.

use std::f64::consts::{PI, TAU};

use super::color::hsv_to_rgb;
use super::spec::{DatasetSpec, FactorKind, FactorName, FactorVector, Shape};
use crate::error::{domain, Result};
use crate::images::Image;

/// Fully resolved drawing parameters in pixel units.
#[derive(Clone, Copy, Debug)]
struct Sprite {
    shape: Shape,
    cx: f64,
    cy: f64,
    /// Half the sprite extent: circle radius, half side of the square, circumradius of the triangle.
    radius: f64,
    cos: f64,
    sin: f64,
    rgb: [f64; 3],
}

impl Sprite {
    fn contains(&self, px: f64, py: f64) -> bool {
        let dx = px - self.cx;
        let dy = py - self.cy;
        let r = self.radius;
        match self.shape {
            Shape::Circle => dx * dx + dy * dy <= r * r,
            Shape::Square | Shape::Triangle => {
                let u = dx * self.cos + dy * self.sin;
                let v = -dx * self.sin + dy * self.cos;
                if self.shape == Shape::Square {
                    return u.abs() <= r && v.abs() <= r;
                }
                // Apex at (0, -r), base on v = r / 2 (image y grows downward).
                if v > r / 2.0 {
                    return false;
                }
                let s3 = 3f64.sqrt();
                // Edges through the apex: |u| <= (v + r) / sqrt(3).
                u.abs() * s3 <= v + r
            }
        }
    }

    fn extent(&self) -> f64 {
        match self.shape {
            Shape::Circle | Shape::Triangle => self.radius,
            Shape::Square => self.radius * std::f64::consts::SQRT_2,
        }
    }
}

/// Looks up a factor value: constants come from the spec, varying factors from `factors`,
/// and factors the dataset does not declare fall back to defaults.
fn resolve(spec: &DatasetSpec, factors: &FactorVector, name: FactorName) -> Result<f64> {
    let v = match spec.factor(name) {
        Some(f) => match &f.kind {
            FactorKind::Constant(v) => factors.get(name).unwrap_or(*v),
            _ => factors
                .get(name)
                .ok_or_else(|| domain!("missing value for varying factor {name}"))?,
        },
        None => factors.get(name).unwrap_or_else(|| name.default_value()),
    };
    if name != FactorName::Shape && !(0.0..=1.0).contains(&v) {
        return Err(domain!("factor {name} = {v} outside [0, 1]"));
    }
    Ok(v)
}

fn sprite(factors: &FactorVector, spec: &DatasetSpec) -> Result<Sprite> {
    let get = |n| resolve(spec, factors, n);
    let shape = Shape::from_code(get(FactorName::Shape)?)?;
    let size = spec.image_size as f64;
    let angle = get(FactorName::Angle)? * TAU;
    let rgb = if spec.uses_hsv() == Some(true) {
        let (r, g, b) = hsv_to_rgb(get(FactorName::Hue)?, get(FactorName::Saturation)?, get(FactorName::Value)?)?;
        [r, g, b]
    } else {
        [get(FactorName::Red)?, get(FactorName::Green)?, get(FactorName::Blue)?]
    };
    Ok(Sprite {
        shape,
        cx: get(FactorName::X)? * size,
        cy: get(FactorName::Y)? * size,
        radius: get(FactorName::Size)? * size / 2.0,
        cos: angle.cos(),
        sin: angle.sin(),
        rgb,
    })
}

/// Renders one sprite with `antialias_factor x antialias_factor` box-filtered supersampling.
pub fn render_sprite(factors: &FactorVector, spec: &DatasetSpec) -> Result<Image> {
    render_with_supersampling(factors, spec, spec.antialias_factor)
}

pub(crate) fn render_with_supersampling(factors: &FactorVector, spec: &DatasetSpec, aa: usize) -> Result<Image> {
    if aa == 0 {
        return Err(domain!("antialias factor must be positive"));
    }
    let sp = sprite(factors, spec)?;
    let n = spec.image_size;
    let mut img = Image::blank(n, n, spec.channels);
    let color: Vec<f64> = if spec.channels == 1 {
        vec![sp.rgb.iter().sum::<f64>() / 3.0]
    } else {
        sp.rgb.to_vec()
    };
    let e = sp.extent() + 1.0;
    let clip = |v: f64| v.clamp(0.0, n as f64) as usize;
    let (r0, r1) = (clip((sp.cy - e).floor()), clip((sp.cy + e).ceil()));
    let (c0, c1) = (clip((sp.cx - e).floor()), clip((sp.cx + e).ceil()));
    let step = 1.0 / aa as f64;
    let total = (aa * aa) as f64;
    for row in r0..r1 {
        for col in c0..c1 {
            let mut hits = 0usize;
            for si in 0..aa {
                let py = row as f64 + (si as f64 + 0.5) * step;
                for sj in 0..aa {
                    let px = col as f64 + (sj as f64 + 0.5) * step;
                    hits += sp.contains(px, py) as usize;
                }
            }
            if hits > 0 {
                let cover = hits as f64 / total;
                let base = (row * n + col) * spec.channels;
                for (c, &v) in color.iter().enumerate() {
                    img.data[base + c] = (cover * v) as f32;
                }
            }
        }
    }
    Ok(img)
}

/// Area of the sprite in pixels, from its analytic shape.
pub fn sprite_area(factors: &FactorVector, spec: &DatasetSpec) -> Result<f64> {
    let sp = sprite(factors, spec)?;
    let r = sp.radius;
    Ok(match sp.shape {
        Shape::Circle => PI * r * r,
        Shape::Square => 4.0 * r * r,
        Shape::Triangle => 3.0 * 3f64.sqrt() / 4.0 * r * r,
    })
}
