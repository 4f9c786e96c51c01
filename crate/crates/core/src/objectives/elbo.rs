use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::likelihood::nll_with_grad;
use super::spec::{LossReport, ObjectiveSpec};
use crate::error::{config_err, Error, Result};
use crate::nn::{Scalar, Tape, Tensor, Vae};

/// Forward pass of a VAE on one batch with fixed reparameterization noise.
pub struct ElboPass<T> {
    encoder_tape: Tape<T>,
    decoder_tape: Tape<T>,
    /// `[2k, N]` posterior parameters.
    head: Tensor<T>,
    /// `[k, N]` standard-normal noise.
    noise: Tensor<T>,
    /// `[k, N]` posterior samples.
    pub z: Tensor<T>,
    pub nll: Vec<f64>,
    pub kl: Vec<f64>,
    nll_grad: Tensor<T>,
}

impl<T: Scalar> ElboPass<T> {
    pub fn batch(&self) -> usize {
        self.nll.len()
    }

    pub fn report(&self, beta: f64) -> LossReport {
        let n = self.batch() as f64;
        let nll = self.nll.iter().sum::<f64>() / n;
        let kl = self.kl.iter().sum::<f64>() / n;
        LossReport {
            nll,
            kl,
            elbo_loss: nll + beta * kl,
            ..Default::default()
        }
    }
}

/// Standard-normal noise tensor of shape `[k, n]`.
pub fn sample_noise<T: Scalar, R: Rng + ?Sized>(k: usize, n: usize, rng: &mut R) -> Tensor<T> {
    let data = (0..k * n)
        .map(|_| T::of(StandardNormal.sample(rng)))
        .collect();
    Tensor::from_vec(&[k, n], data)
}

/// Runs encoder, reparameterization and decoder on `[C, N, H, W]` images.
pub fn elbo_forward<T: Scalar>(vae: &Vae<T>, x: &Tensor<T>, noise: Tensor<T>, spec: &ObjectiveSpec) -> ElboPass<T> {
    let (head, encoder_tape) = vae.encoder.forward_train(x.clone());
    let k = vae.latent_dim();
    let n = x.dim(1);
    assert_eq!(noise.shape(), &[k, n], "noise must be [k, N]");
    let h = head.data();
    let mut z = Tensor::zeros(&[k, n]);
    let mut kl = vec![0.0; n];
    for j in 0..k {
        for i in 0..n {
            let (m, lv) = (h[j * n + i], h[(k + j) * n + i]);
            z.data_mut()[j * n + i] = m + (lv * T::of(0.5)).exp() * noise.data()[j * n + i];
            let (m, lv) = (m.f64(), lv.f64());
            kl[i] += 0.5 * (m * m + lv.exp() - 1.0 - lv);
        }
    }
    let (out, decoder_tape) = vae.decoder.forward_train(z.clone());
    let (nll, nll_grad) = nll_with_grad(&out, x, spec.likelihood);
    ElboPass {
        encoder_tape,
        decoder_tape,
        head,
        noise,
        z,
        nll,
        kl,
        nll_grad,
    }
}

/// Gradients of the batch-mean `nll + beta * kl` (plus an optional extra gradient with
/// respect to the latent samples) for every parameter, encoder first.
pub fn elbo_backward<T: Scalar>(vae: &Vae<T>, pass: &ElboPass<T>, beta: f64, z_grad: Option<&Tensor<T>>) -> Vec<Tensor<T>> {
    let n = pass.batch();
    let k = vae.latent_dim();
    let scale = T::of(1.0 / n as f64);
    let mut dec_grads = vae.decoder.zero_grads();
    let mut dz = vae
        .decoder
        .backward(&pass.decoder_tape, pass.nll_grad.map(|g| g * scale), &mut dec_grads);
    if let Some(extra) = z_grad {
        dz.add_assign(extra);
    }
    let h = pass.head.data();
    let b = T::of(beta / n as f64);
    let half = T::of(0.5);
    let mut dhead = Tensor::zeros(&[2 * k, n]);
    {
        let d = dhead.data_mut();
        for j in 0..k {
            for i in 0..n {
                let (m, lv) = (h[j * n + i], h[(k + j) * n + i]);
                let g = dz.data()[j * n + i];
                let std = (lv * half).exp();
                d[j * n + i] = g + b * m;
                d[(k + j) * n + i] = g * pass.noise.data()[j * n + i] * half * std + b * half * (std * std - T::one());
            }
        }
    }
    let mut grads = vae.encoder.zero_grads();
    vae.encoder.backward(&pass.encoder_tape, dhead, &mut grads);
    grads.extend(dec_grads);
    grads
}

/// Loss report and parameter gradients of one optimization step.
pub struct ElboStep<T> {
    pub report: LossReport,
    pub grads: Vec<Tensor<T>>,
}

/// Batch-mean `nll + beta * kl` with one posterior sample per image, and its gradient.
pub fn elbo_loss<T: Scalar, R: Rng + ?Sized>(
    vae: &Vae<T>,
    x: &Tensor<T>,
    spec: &ObjectiveSpec,
    rng: &mut R,
) -> Result<ElboStep<T>> {
    if spec.factorvae.is_some() {
        return Err(config_err!("elbo_loss called with a FactorVAE objective"));
    }
    let noise = sample_noise(vae.latent_dim(), x.dim(1), rng);
    elbo_loss_with_noise(vae, x, spec, noise)
}

pub fn elbo_loss_with_noise<T: Scalar>(vae: &Vae<T>, x: &Tensor<T>, spec: &ObjectiveSpec, noise: Tensor<T>) -> Result<ElboStep<T>> {
    let pass = elbo_forward(vae, x, noise, spec);
    let report = pass.report(spec.beta);
    check_finite(&report)?;
    let grads = elbo_backward(vae, &pass, spec.beta, None);
    Ok(ElboStep { report, grads })
}

/// Fails with [`Error::Diverged`] (step 0, filled in by the caller) on a non-finite loss.
pub fn check_finite(report: &LossReport) -> Result<()> {
    if report.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged {
            step: 0,
            reason: format!("non-finite loss {report:?}"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{sample_batch, CirclesDataset, DatasetSpec};
    use crate::nn::{ArchitectureSpec, BroadcastSpec, ConvLayerSpec, DecoderSpec, EncoderSpec};
    use crate::objectives::Likelihood;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_spec(decoder: DecoderSpec) -> ArchitectureSpec {
        ArchitectureSpec {
            latent_dim: 2,
            image_size: 8,
            channels: 1,
            encoder: EncoderSpec {
                conv_layers: vec![
                    ConvLayerSpec {
                        kernel: 4,
                        stride: 2,
                        channels: 8
                    };
                    2
                ],
                fc_widths: vec![8],
            },
            decoder,
        }
    }

    fn tiny_broadcast() -> ArchitectureSpec {
        tiny_spec(DecoderSpec::Broadcast(BroadcastSpec {
            conv_depth: 2,
            kernel: 3,
            channels: 8,
            ..Default::default()
        }))
    }

    fn images(n: usize) -> Tensor<f64> {
        let mut data = DatasetSpec::circles(CirclesDataset::XY, 8);
        data.channels = 1;
        let (b, _) = sample_batch(&data, n, &mut ChaCha8Rng::seed_from_u64(5));
        b.to_tensor()
    }

    fn loss(vae: &Vae<f64>, x: &Tensor<f64>, spec: &ObjectiveSpec, noise: &Tensor<f64>) -> f64 {
        elbo_forward(vae, x, noise.clone(), spec).report(spec.beta).elbo_loss
    }

    fn gradient_check(arch: ArchitectureSpec, spec: ObjectiveSpec) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut vae = Vae::<f64>::new(&arch, &mut rng).unwrap();
        // non-zero biases exercise every path
        for p in vae.params_mut() {
            if p.shape().len() == 1 {
                for v in p.data_mut() {
                    *v = 0.1 * (rng.random::<f64>() - 0.5);
                }
            }
        }
        let x = images(3);
        let noise = sample_noise(2, 3, &mut rng);
        let step = elbo_loss_with_noise(&vae, &x, &spec, noise.clone()).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        for (pi, g) in step.grads.iter().enumerate() {
            for e in 0..g.len() {
                let orig = vae.params_mut()[pi].data()[e];
                vae.params_mut()[pi].data_mut()[e] = orig + h;
                let up = loss(&vae, &x, &spec, &noise);
                vae.params_mut()[pi].data_mut()[e] = orig - h;
                let down = loss(&vae, &x, &spec, &noise);
                vae.params_mut()[pi].data_mut()[e] = orig;
                let fd = (up - down) / (2.0 * h);
                let a = g.data()[e];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3);
                worst = worst.max(rel);
                checked += 1;
            }
        }
        assert!(checked == vae.parameter_count());
        assert!(worst < 1e-5, "worst relative error {worst}");
    }

    #[test]
    fn elbo_gradient_matches_finite_differences_broadcast() {
        gradient_check(tiny_broadcast(), ObjectiveSpec::beta(1.0));
    }

    #[test]
    fn elbo_gradient_matches_finite_differences_gaussian_beta() {
        let spec = ObjectiveSpec {
            likelihood: Likelihood::GaussianFixedVariance,
            beta: 2.5,
            factorvae: None,
        };
        gradient_check(tiny_broadcast(), spec);
    }

    #[test]
    fn elbo_gradient_matches_finite_differences_deconv() {
        let arch = tiny_spec(DecoderSpec::Deconv(crate::nn::DeconvSpec {
            mlp_widths: vec![8],
            deconv_depth: 2,
            kernel: 4,
            channels: 8,
            channel_schedule: None,
        }));
        gradient_check(arch.clone(), ObjectiveSpec::beta(1.0));
        let coord = ArchitectureSpec {
            decoder: match arch.decoder {
                DecoderSpec::Deconv(d) => DecoderSpec::CoordConv(d),
                d => d,
            },
            ..arch
        };
        gradient_check(coord, ObjectiveSpec::beta(0.5));
    }

    #[test]
    fn beta_zero_is_nll() {
        let vae = Vae::<f64>::new(&tiny_broadcast(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let x = images(4);
        let noise = sample_noise(2, 4, &mut ChaCha8Rng::seed_from_u64(2));
        let r = elbo_loss_with_noise(&vae, &x, &ObjectiveSpec::beta(0.0), noise).unwrap().report;
        assert_eq!(r.elbo_loss, r.nll);
        assert!(r.kl >= 0.0);
    }

    #[test]
    fn perfect_decoder_leaves_only_kl() {
        // One-pixel Gaussian toy: the encoder reads the pixel, the decoder copies z[0] back.
        let arch = ArchitectureSpec {
            latent_dim: 1,
            image_size: 1,
            channels: 1,
            encoder: EncoderSpec {
                conv_layers: vec![],
                fc_widths: vec![],
            },
            decoder: DecoderSpec::Broadcast(BroadcastSpec {
                conv_depth: 1,
                kernel: 1,
                channels: 1,
                ..Default::default()
            }),
        };
        let mut vae = Vae::<f64>::new(&arch, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        {
            let mut p = vae.params_mut();
            // encoder head [2, 1]: mean = pixel, log-variance = -4
            p[0].data_mut().copy_from_slice(&[1.0, 0.0]);
            p[1].data_mut().copy_from_slice(&[0.0, -4.0]);
            // decoder 1x1 conv over (z, x, y): output = z
            p[2].data_mut().copy_from_slice(&[1.0, 0.0, 0.0]);
            p[3].data_mut()[0] = 0.0;
        }
        let x = Tensor::from_vec(&[1, 2, 1, 1], vec![0.3, 0.8]);
        let spec = ObjectiveSpec {
            likelihood: Likelihood::GaussianFixedVariance,
            beta: 1.0,
            factorvae: None,
        };
        let r = elbo_loss_with_noise(&vae, &x, &spec, Tensor::zeros(&[1, 2])).unwrap().report;
        let constant = 0.5 * (2.0 * std::f64::consts::PI * 0.3f64).ln();
        assert!((r.nll - constant).abs() < 1e-12);
        let kl = |m: f64| 0.5 * (m * m + (-4f64).exp() - 1.0 + 4.0);
        assert!((r.elbo_loss - constant - 0.5 * (kl(0.3) + kl(0.8))).abs() < 1e-12);
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let mut vae = Vae::<f64>::new(&tiny_broadcast(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        // a NaN output bias cannot be masked by a ReLU
        let last = vae.params_mut().len() - 1;
        vae.params_mut()[last].data_mut()[0] = f64::NAN;
        let x = images(2);
        let err = elbo_loss(&vae, &x, &ObjectiveSpec::default(), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::Diverged { .. })));
    }
}
