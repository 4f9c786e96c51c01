use crate::error::{domain, Result};
use crate::images::{Image, ImageBatch};
use crate::nn::{linspace, OutputMap, Scalar, Vae};

/// Decoded sweeps of each latent coordinate around a seed image's posterior mean.
#[derive(Clone, Debug, PartialEq)]
pub struct TraversalGrid {
    /// Latent indices, ascending by mean posterior variance.
    pub rows: Vec<usize>,
    pub mean_variances: Vec<f64>,
    /// Traversal values (columns).
    pub values: Vec<f64>,
    /// `images[row][col]`
    pub images: Vec<Vec<Image>>,
    pub origin: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraversalConfig {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
    /// Keep only this many rows (lowest variance first).
    pub max_rows: Option<usize>,
}

impl Default for TraversalConfig {
    fn default() -> Self {
        TraversalConfig {
            lo: -2.0,
            hi: 2.0,
            steps: 10,
            max_rows: None,
        }
    }
}

/// Sweeps every latent of `seed` (a single image) over `[lo, hi]`, holding the others at
/// the posterior mean. With one step, the single column sits at the origin coordinate.
///
/// Rows are ordered by posterior variance averaged over `reference` (or the seed alone).
pub fn traverse<T: Scalar>(
    vae: &Vae<T>,
    seed: &Image,
    reference: Option<&ImageBatch>,
    config: &TraversalConfig,
    map: OutputMap,
) -> Result<TraversalGrid> {
    if config.steps == 0 {
        return Err(domain!("a traversal needs at least one step"));
    }
    if !vae.all_finite() {
        return Err(domain!("model parameters are not finite"));
    }
    let post = vae.encode(&ImageBatch::from_images(std::slice::from_ref(seed))).remove(0);
    let k = post.dim();
    let mean_variances: Vec<f64> = match reference {
        Some(batch) => {
            let posts = vae.encode_chunked(batch, 64);
            (0..k)
                .map(|i| posts.iter().map(|p| p.log_variance[i].exp()).sum::<f64>() / posts.len() as f64)
                .collect()
        }
        None => post.variance(),
    };
    if mean_variances.iter().chain(&post.mean).any(|v| !v.is_finite()) {
        return Err(domain!("non-finite posterior"));
    }
    let mut rows: Vec<usize> = (0..k).collect();
    rows.sort_by(|&a, &b| mean_variances[a].total_cmp(&mean_variances[b]).then(a.cmp(&b)));
    if let Some(m) = config.max_rows {
        rows.truncate(m);
    }
    let origin = post.mean.clone();
    let mut images = Vec::with_capacity(rows.len());
    let mut values = Vec::new();
    for &d in &rows {
        values = if config.steps == 1 {
            vec![origin[d]]
        } else {
            linspace(config.lo, config.hi, config.steps)
        };
        // one decode per cell keeps every cell bit-identical to a single-image decode
        let row = values
            .iter()
            .map(|&v| {
                let mut z = origin.clone();
                z[d] = v;
                vae.decode_means(&[z], map).image(0)
            })
            .collect();
        images.push(row);
    }
    Ok(TraversalGrid {
        rows,
        mean_variances,
        values,
        images,
        origin,
    })
}
