use crate::dataset::{FactorGrid, FactorName};
use crate::error::{Error, Result};
use crate::metrics::FactorEncoder;

/// Mean posterior std above which a latent counts as non-coding.
pub const NON_CODING_STD: f64 = 0.9;

/// Encodings of a factor grid in the two lowest-variance latents.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometryEmbedding {
    pub grid: FactorGrid,
    pub latents: [usize; 2],
    /// Row-major like the grid's points.
    pub embedded: Vec<[f64; 2]>,
    pub holdout_flags: Vec<bool>,
    pub mean_variances: Vec<f64>,
    pub linearity_r2: f64,
}

impl GeometryEmbedding {
    /// Factor coordinates of every grid point.
    pub fn factor_points(&self) -> Vec<[f64; 2]> {
        let [f1, f2] = self.grid.axis_factors;
        self.grid
            .points
            .iter()
            .map(|p| [value(p, f1), value(p, f2)])
            .collect()
    }

    /// Linearity of the held-out points alone (affine map fitted on them).
    pub fn holdout_r2(&self) -> Result<f64> {
        let (x, y) = self.subset(true);
        linearity_r2(&x, &y)
    }

    /// Linearity of the map fitted on training-region points, scored on held-out points.
    pub fn holdout_transfer_r2(&self) -> Result<f64> {
        let (xt, yt) = self.subset(false);
        let (xh, yh) = self.subset(true);
        let map = AffineMap::fit(&xt, &yt)?;
        whitened_r2(&xh, &yh, &map)
    }

    fn subset(&self, held_out: bool) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
        self.factor_points()
            .into_iter()
            .zip(&self.embedded)
            .zip(&self.holdout_flags)
            .filter(|(_, &h)| h == held_out)
            .map(|((x, y), _)| (x, *y))
            .unzip()
    }
}

fn value(p: &crate::dataset::FactorVector, f: FactorName) -> f64 {
    p.get(f).expect("grid points carry both axis factors")
}

/// `y ~ A x + b` for 2-D inputs and outputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    /// Rows map to outputs: `y_i = a[i][0] x_0 + a[i][1] x_1 + a[i][2]`.
    pub a: [[f64; 3]; 2],
}

impl AffineMap {
    /// Least-squares fit.
    pub fn fit(x: &[[f64; 2]], y: &[[f64; 2]]) -> Result<Self> {
        if x.len() != y.len() || x.len() < 3 {
            return Err(Error::UndefinedMetric("an affine fit needs at least 3 paired points".into()));
        }
        let mut xtx = [[0.0; 3]; 3];
        let mut xty = [[0.0; 2]; 3];
        for (xi, yi) in x.iter().zip(y) {
            let r = [xi[0], xi[1], 1.0];
            for a in 0..3 {
                for b in 0..3 {
                    xtx[a][b] += r[a] * r[b];
                }
                for o in 0..2 {
                    xty[a][o] += r[a] * yi[o];
                }
            }
        }
        let inv = invert3(&xtx).ok_or_else(|| Error::UndefinedMetric("factor points are collinear".into()))?;
        let mut a = [[0.0; 3]; 2];
        for (o, row) in a.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|m| inv[c][m] * xty[m][o]).sum();
            }
        }
        Ok(AffineMap { a })
    }

    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        [0, 1].map(|o| self.a[o][0] * x[0] + self.a[o][1] * x[1] + self.a[o][2])
    }
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let scale = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    if det.abs() <= 1e-12 * scale.powi(3) {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
        }
    }
    Some(inv)
}

fn covariance(v: &[[f64; 2]]) -> [[f64; 2]; 2] {
    let n = v.len() as f64;
    let mean = [0, 1].map(|i| v.iter().map(|p| p[i]).sum::<f64>() / n);
    let mut c = [[0.0; 2]; 2];
    for p in v {
        for a in 0..2 {
            for b in 0..2 {
                c[a][b] += (p[a] - mean[a]) * (p[b] - mean[b]);
            }
        }
    }
    c
}

/// `1 - tr(T^-1 R) / 2`, with `T` the total and `R` the residual scatter of `y` under `map`.
fn whitened_r2(x: &[[f64; 2]], y: &[[f64; 2]], map: &AffineMap) -> Result<f64> {
    let t = covariance(y);
    let det = t[0][0] * t[1][1] - t[0][1] * t[1][0];
    let tr = t[0][0] + t[1][1];
    if !(det > 1e-12 * tr * tr) {
        return Err(Error::UndefinedMetric("embedded points do not span two dimensions".into()));
    }
    let tinv = [[t[1][1] / det, -t[0][1] / det], [-t[1][0] / det, t[0][0] / det]];
    let mut r = [[0.0; 2]; 2];
    for (xi, yi) in x.iter().zip(y) {
        let p = map.apply(*xi);
        let e = [yi[0] - p[0], yi[1] - p[1]];
        for a in 0..2 {
            for b in 0..2 {
                r[a][b] += e[a] * e[b];
            }
        }
    }
    let q = (0..2)
        .map(|a| (0..2).map(|b| tinv[a][b] * r[b][a]).sum::<f64>())
        .sum::<f64>();
    Ok((1.0 - q / 2.0).clamp(0.0, 1.0))
}

/// Coefficient of determination of the best affine map from factors to embedding.
///
/// Residual and total scatter are compared after whitening the embedding, which makes the
/// score invariant to any invertible affine change of the two latent coordinates.
pub fn linearity_r2(x: &[[f64; 2]], y: &[[f64; 2]]) -> Result<f64> {
    let map = AffineMap::fit(x, y)?;
    whitened_r2(x, y, &map)
}

/// Encodes every grid point (held-out ones included) and projects onto the two latents of
/// smallest mean posterior variance.
pub fn embed_factor_grid<E: FactorEncoder + ?Sized>(encoder: &E, grid: &FactorGrid) -> Result<GeometryEmbedding> {
    let posts = encoder.encode_factors(&grid.points)?;
    let k = encoder.latent_dim();
    if k < 2 {
        return Err(Error::UndefinedMetric("geometry needs at least two latents".into()));
    }
    let n = posts.len() as f64;
    let mean_variances: Vec<f64> = (0..k)
        .map(|i| posts.iter().map(|p| p.log_variance[i].exp()).sum::<f64>() / n)
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| mean_variances[a].total_cmp(&mean_variances[b]).then(a.cmp(&b)));
    let coding = mean_variances.iter().filter(|v| v.sqrt() <= NON_CODING_STD).count();
    if coding < 2 {
        log::warn!("only {coding} coding latents; embedding uses the two smallest-variance latents anyway");
    }
    let latents = [order[0], order[1]];
    let embedded: Vec<[f64; 2]> = posts.iter().map(|p| [p.mean[latents[0]], p.mean[latents[1]]]).collect();
    let mut emb = GeometryEmbedding {
        grid: grid.clone(),
        latents,
        embedded,
        holdout_flags: grid.holdout_mask.clone(),
        mean_variances,
        linearity_r2: 0.0,
    };
    emb.linearity_r2 = match linearity_r2(&emb.factor_points(), &emb.embedded) {
        Ok(r2) => r2,
        Err(e) => {
            log::warn!("linearity undefined ({e}); reporting 0");
            0.0
        }
    };
    Ok(emb)
}
