use super::spec::{Likelihood, GAUSSIAN_VARIANCE};
use crate::error::{domain, Result};
use crate::images::ImageBatch;
use crate::nn::vae::sigmoid;
use crate::nn::{LatentPosterior, Scalar, Tensor};

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `z = mean + exp(log_variance / 2) * noise`.
pub fn reparameterize(post: &LatentPosterior, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != post.dim() {
        return Err(domain!("noise has length {}, posterior has {}", noise.len(), post.dim()));
    }
    Ok(post
        .mean
        .iter()
        .zip(&post.log_variance)
        .zip(noise)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect())
}

/// KL divergence from `N(mean, exp(log_variance))` to `N(0, I)`, summed over dimensions.
pub fn kl_to_standard_normal(post: &LatentPosterior) -> f64 {
    post.mean
        .iter()
        .zip(&post.log_variance)
        .map(|(m, lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .sum()
}

fn pixel_nll(out: f64, t: f64, likelihood: Likelihood) -> (f64, f64) {
    match likelihood {
        Likelihood::BernoulliLogits => (softplus(out) - t * out, sigmoid(out) - t),
        Likelihood::GaussianFixedVariance => {
            let d = out - t;
            (
                d * d / (2.0 * GAUSSIAN_VARIANCE) + 0.5 * (2.0 * std::f64::consts::PI * GAUSSIAN_VARIANCE).ln(),
                d / GAUSSIAN_VARIANCE,
            )
        }
    }
}

/// Per-image NLL of `[C, N, H, W]` decoder outputs and its gradient with respect to them.
pub fn nll_with_grad<T: Scalar>(out: &Tensor<T>, target: &Tensor<T>, likelihood: Likelihood) -> (Vec<f64>, Tensor<T>) {
    assert_eq!(out.shape(), target.shape(), "decoder output and target shapes differ");
    let n = out.dim(1);
    let plane = out.dim(2) * out.dim(3);
    let mut per_image = vec![0.0; n];
    let mut grad = Tensor::zeros(out.shape());
    for (idx, ((o, t), g)) in out.data().iter().zip(target.data()).zip(grad.data_mut()).enumerate() {
        let (l, d) = pixel_nll(o.f64(), t.f64(), likelihood);
        per_image[(idx / plane) % n] += l;
        *g = T::of(d);
    }
    (per_image, grad)
}

/// Negative log-likelihood of each target image, in nats.
pub fn nll(output: &ImageBatch, target: &ImageBatch, likelihood: Likelihood) -> Result<Vec<f64>> {
    let dims = |b: &ImageBatch| (b.batch, b.height, b.width, b.channels);
    if dims(output) != dims(target) {
        return Err(domain!("output shape {:?} differs from target shape {:?}", dims(output), dims(target)));
    }
    if target.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(domain!("targets must lie in [0, 1]"));
    }
    let per = target.height * target.width * target.channels;
    Ok(output
        .data
        .chunks(per.max(1))
        .zip(target.data.chunks(per.max(1)))
        .map(|(o, t)| {
            o.iter()
                .zip(t)
                .map(|(&o, &t)| pixel_nll(o as f64, t as f64, likelihood).0)
                .sum()
        })
        .take(target.batch)
        .collect())
}
