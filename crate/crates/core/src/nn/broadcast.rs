//! The spatial broadcast operation and its coordinate channels.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{domain, Result};

/// `n` evenly spaced points on `[lo, hi]`, endpoints included. A single point is `lo`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Fixed `h x w x 2` coordinate channels stored as one `(x, y)` pair per site, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordChannels {
    pub height: usize,
    pub width: usize,
    pub pairs: Vec<(f64, f64)>,
}

impl CoordChannels {
    /// The meshgrid of `linspace(-1, 1, w)` (x, varies along a row) and
    /// `linspace(-1, 1, h)` (y, varies along a column).
    pub fn meshgrid(height: usize, width: usize) -> Self {
        let xs = linspace(-1.0, 1.0, width);
        let ys = linspace(-1.0, 1.0, height);
        let pairs = ys
            .iter()
            .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
            .collect();
        CoordChannels {
            height,
            width,
            pairs,
        }
    }

    /// Reorders the sites: site `i` of the result holds the pair from site `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.pairs.len());
        CoordChannels {
            height: self.height,
            width: self.width,
            pairs: perm.iter().map(|&j| self.pairs[j]).collect(),
        }
    }

    pub fn x_channel(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|p| p.0)
    }

    pub fn y_channel(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|p| p.1)
    }
}

/// A uniformly random permutation of the `h * w` coordinate sites.
pub fn random_site_permutation<R: Rng + ?Sized>(sites: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..sites).collect();
    perm.shuffle(rng);
    perm
}

/// Randomly permutes the `h * w` coordinate pairs, keeping each `(x, y)` pair together.
pub fn shuffle_coordinate_channels<R: Rng + ?Sized>(
    coords: &CoordChannels,
    rng: &mut R,
) -> CoordChannels {
    let perm = random_site_permutation(coords.pairs.len(), rng);
    coords.permuted(&perm)
}

/// Tiles `z` over an `h x w` grid and appends x/y coordinate channels.
///
/// Returns an `h x w x (k + 2)` array in row-major `(row, col, channel)` order.
pub fn spatial_broadcast(z: &[f64], height: usize, width: usize) -> Result<Vec<f64>> {
    if z.is_empty() || height == 0 || width == 0 {
        return Err(domain!(
            "spatial broadcast needs k, h, w >= 1 (got k={}, h={height}, w={width})",
            z.len()
        ));
    }
    if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(domain!("non-finite latent value {bad}"));
    }
    let coords = CoordChannels::meshgrid(height, width);
    let depth = z.len() + 2;
    let mut out = Vec::with_capacity(height * width * depth);
    for &(x, y) in &coords.pairs {
        out.extend_from_slice(z);
        out.push(x);
        out.push(y);
    }
    Ok(out)
}
