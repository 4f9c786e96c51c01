use crate::error::{domain, Result};

/// Hexcone HSV to RGB conversion; all components in `[0, 1]`. A hue of 1 wraps to red.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> Result<(f64, f64, f64)> {
    for (name, x) in [("hue", h), ("saturation", s), ("value", v)] {
        if !(0.0..=1.0).contains(&x) {
            return Err(domain!("{name} {x} outside [0, 1]"));
        }
    }
    let h6 = (h * 6.0) % 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    Ok(match sector as u8 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    })
}
