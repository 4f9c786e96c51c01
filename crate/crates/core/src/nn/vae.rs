//! The encoder/decoder pair of a VAE.

use rand::Rng;

use super::arch::{build_decoder, build_encoder, ArchitectureSpec};
use super::broadcast::CoordChannels;
use super::layers::Layer;
use super::network::Network;
use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{domain, Result};
use crate::images::ImageBatch;

/// Diagonal Gaussian posterior of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentPosterior {
    pub mean: Vec<f64>,
    pub log_variance: Vec<f64>,
}

impl LatentPosterior {
    pub fn new(mean: Vec<f64>, log_variance: Vec<f64>) -> Result<Self> {
        if mean.len() != log_variance.len() {
            return Err(domain!("posterior mean and log-variance lengths differ"));
        }
        if mean.iter().chain(&log_variance).any(|v| !v.is_finite()) {
            return Err(domain!("non-finite posterior parameter"));
        }
        Ok(LatentPosterior { mean, log_variance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_variance.iter().map(|lv| (0.5 * lv).exp()).collect()
    }

    pub fn variance(&self) -> Vec<f64> {
        self.log_variance.iter().map(|lv| lv.exp()).collect()
    }
}

/// Splits a `[2k, N]` encoder output into per-sample posteriors.
pub fn posteriors_from_head<T: Scalar>(head: &Tensor<T>) -> Vec<LatentPosterior> {
    let (two_k, n) = (head.dim(0), head.dim(1));
    let k = two_k / 2;
    let d = head.data();
    (0..n)
        .map(|i| LatentPosterior {
            mean: (0..k).map(|j| d[j * n + i].f64()).collect(),
            log_variance: (0..k).map(|j| d[(k + j) * n + i].f64()).collect(),
        })
        .collect()
}

/// `[k, N]` tensor from per-sample latent vectors.
pub fn latent_tensor<T: Scalar>(latents: &[Vec<f64>]) -> Tensor<T> {
    let n = latents.len();
    let k = latents.first().map_or(0, |z| z.len());
    let mut data = vec![T::zero(); k * n];
    for (i, z) in latents.iter().enumerate() {
        assert_eq!(z.len(), k, "ragged latent batch");
        for (j, &v) in z.iter().enumerate() {
            data[j * n + i] = T::of(v);
        }
    }
    Tensor::from_vec(&[k, n], data)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// How decoder outputs are turned into mean images.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputMap {
    /// Bernoulli logits: the mean is `sigmoid(logit)`.
    Sigmoid,
    /// Gaussian means, clipped to `[0, 1]` for display.
    Clip,
}

impl OutputMap {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            OutputMap::Sigmoid => sigmoid(v),
            OutputMap::Clip => v.clamp(0.0, 1.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Vae<T> {
    pub spec: ArchitectureSpec,
    pub encoder: Network<T>,
    pub decoder: Network<T>,
    /// Frozen coordinate-site permutation of a shuffled broadcast decoder.
    pub coord_permutation: Option<Vec<usize>>,
}

impl<T: Scalar> Vae<T> {
    pub fn new<R: Rng + ?Sized>(spec: &ArchitectureSpec, rng: &mut R) -> Result<Self> {
        let encoder = build_encoder(spec, rng)?;
        let (decoder, coord_permutation) = build_decoder(spec, None, rng)?;
        Ok(Vae {
            spec: spec.clone(),
            encoder,
            decoder,
            coord_permutation,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.spec.latent_dim
    }

    pub fn parameter_count(&self) -> usize {
        self.encoder.parameter_count() + self.decoder.parameter_count()
    }

    /// Every parameter with its name, encoder first.
    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v = self.encoder.named_params();
        v.extend(self.decoder.named_params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = self.encoder.params_mut();
        v.extend(self.decoder.params_mut());
        v
    }

    pub fn all_finite(&self) -> bool {
        self.named_params().iter().all(|(_, t)| t.all_finite())
    }

    pub fn encode_tensor(&self, x: Tensor<T>) -> Tensor<T> {
        self.encoder.forward(x)
    }

    pub fn encode(&self, images: &ImageBatch) -> Vec<LatentPosterior> {
        posteriors_from_head(&self.encoder.forward(images.to_tensor()))
    }

    /// Encodes in chunks of `chunk` images to bound memory.
    pub fn encode_chunked(&self, images: &ImageBatch, chunk: usize) -> Vec<LatentPosterior> {
        let all = images.images();
        all.chunks(chunk.max(1))
            .flat_map(|c| self.encode(&ImageBatch::from_images(c)))
            .collect()
    }

    pub fn decode_logits(&self, latents: &[Vec<f64>]) -> Tensor<T> {
        self.decoder.forward(latent_tensor(latents))
    }

    pub fn decode_means(&self, latents: &[Vec<f64>], map: OutputMap) -> ImageBatch {
        ImageBatch::from_tensor(&self.decode_logits(latents), |v| map.apply(v))
    }

    /// Decodes the posterior mean of every image.
    pub fn reconstruct(&self, images: &ImageBatch, map: OutputMap) -> ImageBatch {
        let means: Vec<Vec<f64>> = self.encode(images).into_iter().map(|p| p.mean).collect();
        self.decode_means(&means, map)
    }

    /// Replaces the frozen site permutation of a shuffled broadcast decoder.
    pub fn set_coord_permutation(&mut self, perm: Vec<usize>) -> Result<()> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(domain!("coordinate permutation is not a permutation"));
            }
        }
        let layer = self
            .decoder
            .layers_mut()
            .iter_mut()
            .find_map(|l| match l {
                Layer::Broadcast { coords } => Some(coords),
                _ => None,
            })
            .ok_or_else(|| domain!("decoder has no broadcast layer"))?;
        if layer.height * layer.width != perm.len() {
            return Err(domain!(
                "permutation has {} sites, broadcast grid {}",
                perm.len(),
                layer.height * layer.width
            ));
        }
        *layer = CoordChannels::meshgrid(layer.height, layer.width).permuted(&perm);
        self.coord_permutation = Some(perm);
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Vae<U> {
        Vae {
            spec: self.spec.clone(),
            encoder: self.encoder.cast(),
            decoder: self.decoder.cast(),
            coord_permutation: self.coord_permutation.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::images::Image;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn encoder_produces_one_posterior_per_image_in_order() {
        let mut spec = ArchitectureSpec::broadcast_default(3);
        spec.encoder = crate::nn::EncoderSpec::uniform(8, 16);
        let vae = Vae::<f32>::new(&spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut imgs: Vec<Image> = (0..3).map(|_| Image::blank(64, 64, 3)).collect();
        imgs[1].data.iter_mut().for_each(|v| *v = 0.5);
        let batch = ImageBatch::from_images(&imgs);
        let post = vae.encode(&batch);
        assert_eq!(post.len(), 3);
        assert!(post.iter().all(|p| p.dim() == 10));
        let single = vae.encode(&ImageBatch::from_images(&imgs[1..2]));
        for (a, b) in post[1].mean.iter().zip(&single[0].mean) {
            assert!((a - b).abs() < 1e-5);
        }
        assert_ne!(post[0].mean, post[1].mean);
    }

    #[test]
    fn zero_weights_give_zero_posterior() {
        let mut spec = ArchitectureSpec::broadcast_default(3);
        spec.encoder = crate::nn::EncoderSpec::uniform(8, 16);
        let mut vae = Vae::<f64>::new(&spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for p in vae.encoder.params_mut() {
            p.fill(0.0);
        }
        let batch = ImageBatch::from_images(&[Image::blank(64, 64, 3)]);
        let post = &vae.encode(&batch)[0];
        assert!(post.mean.iter().chain(&post.log_variance).all(|&v| v == 0.0));
    }
}
