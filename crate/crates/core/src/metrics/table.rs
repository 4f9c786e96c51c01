use rand::Rng;

use crate::dataset::{render_sprite, sample_factors, DatasetSpec, FactorKind, FactorVector, Sample};
use crate::error::{domain, Result};
use crate::images::ImageBatch;
use crate::nn::{LatentPosterior, Scalar, Vae};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnKind {
    Continuous,
    Discrete,
}

/// Encoded samples aligned with their ground-truth factors.
#[derive(Clone, Debug, PartialEq)]
pub struct RepresentationTable {
    /// `N x k`
    pub latent_means: Vec<Vec<f64>>,
    /// `N x k`
    pub latent_stds: Vec<Vec<f64>>,
    /// `N x F`
    pub factors: Vec<Vec<f64>>,
    pub factor_names: Vec<String>,
    pub factor_kinds: Vec<ColumnKind>,
}

impl RepresentationTable {
    pub fn new(
        latent_means: Vec<Vec<f64>>,
        latent_stds: Vec<Vec<f64>>,
        factors: Vec<Vec<f64>>,
        factor_names: Vec<String>,
        factor_kinds: Vec<ColumnKind>,
    ) -> Result<Self> {
        let n = latent_means.len();
        if latent_stds.len() != n || factors.len() != n {
            return Err(domain!("representation table rows are not aligned"));
        }
        let k = latent_means.first().map_or(0, Vec::len);
        let f = factor_names.len();
        if factor_kinds.len() != f {
            return Err(domain!("one kind per factor column is required"));
        }
        if latent_means.iter().chain(&latent_stds).any(|r| r.len() != k) || factors.iter().any(|r| r.len() != f) {
            return Err(domain!("ragged representation table"));
        }
        Ok(RepresentationTable {
            latent_means,
            latent_stds,
            factors,
            factor_names,
            factor_kinds,
        })
    }

    /// Table with unit stds, for synthetic codes.
    pub fn from_means(latent_means: Vec<Vec<f64>>, factors: Vec<Vec<f64>>, kinds: Vec<ColumnKind>) -> Result<Self> {
        let stds = latent_means.iter().map(|r| vec![1.0; r.len()]).collect();
        let names = (0..kinds.len()).map(|j| format!("factor_{j}")).collect();
        Self::new(latent_means, stds, factors, names, kinds)
    }

    pub fn rows(&self) -> usize {
        self.latent_means.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_means.first().map_or(0, Vec::len)
    }

    pub fn latent_column(&self, i: usize) -> Vec<f64> {
        self.latent_means.iter().map(|r| r[i]).collect()
    }

    pub fn factor_column(&self, j: usize) -> Vec<f64> {
        self.factors.iter().map(|r| r[j]).collect()
    }
}

/// Maps ground-truth factor configurations to latent posteriors.
pub trait FactorEncoder {
    fn latent_dim(&self) -> usize;
    fn encode_factors(&self, factors: &[FactorVector]) -> Result<Vec<LatentPosterior>>;
}

/// Renders factor configurations with a dataset spec and encodes them with a VAE.
pub struct RenderingEncoder<'a, T> {
    pub vae: &'a Vae<T>,
    pub spec: &'a DatasetSpec,
    pub chunk: usize,
}

impl<'a, T> RenderingEncoder<'a, T> {
    pub fn new(vae: &'a Vae<T>, spec: &'a DatasetSpec) -> Self {
        RenderingEncoder { vae, spec, chunk: 64 }
    }
}

impl<T: Scalar> FactorEncoder for RenderingEncoder<'_, T> {
    fn latent_dim(&self) -> usize {
        self.vae.latent_dim()
    }

    fn encode_factors(&self, factors: &[FactorVector]) -> Result<Vec<LatentPosterior>> {
        let mut out = Vec::with_capacity(factors.len());
        for chunk in factors.chunks(self.chunk.max(1)) {
            let images = chunk
                .iter()
                .map(|f| render_sprite(f, self.spec))
                .collect::<Result<Vec<_>>>()?;
            out.extend(self.vae.encode(&ImageBatch::from_images(&images)));
        }
        Ok(out)
    }
}

/// Encoder defined by a function of the factors; the posterior std is fixed.
pub struct FnEncoder<F> {
    pub dim: usize,
    pub std: f64,
    pub f: F,
}

impl<F: Fn(&FactorVector) -> Vec<f64>> FactorEncoder for FnEncoder<F> {
    fn latent_dim(&self) -> usize {
        self.dim
    }

    fn encode_factors(&self, factors: &[FactorVector]) -> Result<Vec<LatentPosterior>> {
        factors
            .iter()
            .map(|fv| {
                let m = (self.f)(fv);
                let lv = vec![2.0 * self.std.ln(); m.len()];
                LatentPosterior::new(m, lv)
            })
            .collect()
    }
}

/// Draws `n` non-blank factor configurations from the training distribution.
pub fn sample_configurations<R: Rng + ?Sized>(spec: &DatasetSpec, n: usize, rng: &mut R) -> Vec<FactorVector> {
    let mut no_blanks = spec.clone();
    no_blanks.blank_fraction = 0.0;
    (0..n)
        .map(|_| match sample_factors(&no_blanks, rng) {
            Sample::Factors(f) => f,
            Sample::Blank => unreachable!("blank fraction is zero"),
        })
        .collect()
}

/// Encodes `n` sampled configurations into a table over the spec's varying factors.
pub fn representation_table<E: FactorEncoder + ?Sized, R: Rng + ?Sized>(
    encoder: &E,
    spec: &DatasetSpec,
    n: usize,
    rng: &mut R,
) -> Result<RepresentationTable> {
    let configs = sample_configurations(spec, n, rng);
    let posts = encoder.encode_factors(&configs)?;
    let varying = spec.varying_factors();
    let factors = configs
        .iter()
        .map(|c| varying.iter().map(|f| c.get(f.name).unwrap_or(f64::NAN)).collect())
        .collect();
    let kinds = varying
        .iter()
        .map(|f| match f.kind {
            FactorKind::Discrete(_) => ColumnKind::Discrete,
            _ => ColumnKind::Continuous,
        })
        .collect();
    RepresentationTable::new(
        posts.iter().map(|p| p.mean.clone()).collect(),
        posts.iter().map(|p| p.std()).collect(),
        factors,
        varying.iter().map(|f| f.name.to_string()).collect(),
        kinds,
    )
}
