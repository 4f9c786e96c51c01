use rand::seq::SliceRandom;
use rand::Rng;

use super::elbo::{check_finite, elbo_backward, elbo_forward, sample_noise};
use super::spec::{DiscriminatorSpec, LossReport, ObjectiveSpec};
use crate::error::{config_err, domain, Result};
use crate::nn::arch::dense;
use crate::nn::{Layer, Network, Scalar, Tensor, Vae};

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` before taking logs.
pub const PROB_FLOOR: f64 = 1e-6;

/// MLP from `k` latents to two logits: class 0 for samples of `q(z)`, class 1 for
/// dimension-permuted samples.
pub fn build_discriminator<T: Scalar, R: Rng + ?Sized>(k: usize, spec: &DiscriminatorSpec, rng: &mut R) -> Network<T> {
    let mut layers = Vec::new();
    let mut width = k;
    for _ in 0..spec.hidden_layers {
        layers.push(dense(width, spec.width, rng));
        layers.push(Layer::LeakyRelu(spec.leaky_slope));
        width = spec.width;
    }
    layers.push(dense(width, 2, rng));
    Network::new("discriminator", layers)
}

/// Permutes every latent dimension (row of a `[k, B]` tensor) independently across the batch.
pub fn permute_dims<T: Scalar, R: Rng + ?Sized>(z: &Tensor<T>, rng: &mut R) -> Result<Tensor<T>> {
    let (k, b) = (z.dim(0), z.dim(1));
    if b < 2 {
        return Err(domain!("permute_dims needs a batch of at least 2, got {b}"));
    }
    let mut out = z.clone();
    for row in out.data_mut().chunks_mut(b).take(k) {
        row.shuffle(rng);
    }
    Ok(out)
}

/// `P(class 0)` from `[2, N]` logits, clamped away from 0 and 1.
fn real_probabilities<T: Scalar>(logits: &Tensor<T>) -> Result<Vec<f64>> {
    let n = logits.dim(1);
    let d = logits.data();
    (0..n)
        .map(|i| {
            let diff = d[i].f64() - d[n + i].f64();
            let p = crate::nn::vae::sigmoid(diff);
            if !p.is_finite() {
                return Err(domain!("discriminator produced a non-finite probability"));
            }
            Ok(p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))
        })
        .collect()
}

/// One adversarial step's losses and gradients, all computed from the current parameters.
pub struct FactorVaeStep<T> {
    pub report: LossReport,
    pub vae_grads: Vec<Tensor<T>>,
    pub discriminator_loss: f64,
    pub discriminator_grads: Vec<Tensor<T>>,
}

/// FactorVAE losses on two batches: `x_vae` drives the VAE update, `x_disc` supplies the
/// permuted samples for the discriminator.
pub fn factorvae_losses<T: Scalar, R: Rng + ?Sized>(
    vae: &Vae<T>,
    discriminator: &Network<T>,
    x_vae: &Tensor<T>,
    x_disc: &Tensor<T>,
    spec: &ObjectiveSpec,
    rng: &mut R,
) -> Result<FactorVaeStep<T>> {
    let fv = spec
        .factorvae
        .as_ref()
        .ok_or_else(|| config_err!("factorvae_losses needs a FactorVAE objective"))?;
    let k = vae.latent_dim();
    let n = x_vae.dim(1);

    let pass = elbo_forward(vae, x_vae, sample_noise(k, n, rng), spec);
    let (logits, tape) = discriminator.forward_train(pass.z.clone());
    let p_real = real_probabilities(&logits)?;
    let tc = p_real.iter().map(|p| p.ln() - (1.0 - p).ln()).sum::<f64>() / n as f64;
    let mut report = pass.report(spec.beta);
    report.elbo_loss += fv.gamma * tc;
    report.tc_penalty = Some(tc);

    // d(gamma * mean(l0 - l1)) / d logits, zero where the clamp is active
    let mut dlogits = Tensor::zeros(&[2, n]);
    for (i, &p) in p_real.iter().enumerate() {
        if p > PROB_FLOOR && p < 1.0 - PROB_FLOOR {
            let g = T::of(fv.gamma / n as f64);
            dlogits.data_mut()[i] = g;
            dlogits.data_mut()[n + i] = -g;
        }
    }
    let mut scratch = discriminator.zero_grads();
    let dz = discriminator.backward(&tape, dlogits, &mut scratch);
    let vae_grads = elbo_backward(vae, &pass, spec.beta, Some(&dz));

    // discriminator: real samples from the first batch, permuted samples from the second
    let m = x_disc.dim(1);
    let head = vae.encoder.forward(x_disc.clone());
    let noise = sample_noise::<T, R>(k, m, rng);
    let mut z2 = Tensor::zeros(&[k, m]);
    for j in 0..k {
        for i in 0..m {
            let (mu, lv) = (head.data()[j * m + i], head.data()[(k + j) * m + i]);
            z2.data_mut()[j * m + i] = mu + (lv * T::of(0.5)).exp() * noise.data()[j * m + i];
        }
    }
    let z_perm = permute_dims(&z2, rng)?;
    let mut discriminator_grads = discriminator.zero_grads();
    let mut disc_loss = 0.0;
    let mut correct = 0usize;
    for (z, label) in [(pass.z.clone(), 0usize), (z_perm, 1usize)] {
        let count = z.dim(1);
        let (logits, tape) = discriminator.forward_train(z);
        let p = real_probabilities(&logits)?;
        let mut d = Tensor::zeros(&[2, count]);
        for (i, &pr) in p.iter().enumerate() {
            let target = if label == 0 { pr } else { 1.0 - pr };
            disc_loss -= 0.5 * target.ln() / count as f64;
            correct += ((pr > 0.5) == (label == 0)) as usize;
            // softmax cross-entropy gradient, averaged over both halves
            let (t0, t1) = if label == 0 { (1.0, 0.0) } else { (0.0, 1.0) };
            let s = 0.5 / count as f64;
            d.data_mut()[i] = T::of(s * (pr - t0));
            d.data_mut()[count + i] = T::of(s * ((1.0 - pr) - t1));
        }
        discriminator.backward(&tape, d, &mut discriminator_grads);
    }
    report.discriminator_accuracy = Some(correct as f64 / (n + m) as f64);
    check_finite(&report)?;
    if !disc_loss.is_finite() {
        return Err(domain!("non-finite discriminator loss"));
    }
    Ok(FactorVaeStep {
        report,
        vae_grads,
        discriminator_loss: disc_loss,
        discriminator_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Adam, AdamConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn small_disc() -> DiscriminatorSpec {
        DiscriminatorSpec {
            hidden_layers: 2,
            width: 32,
            leaky_slope: 0.2,
        }
    }

    fn accuracy(d: &Network<f64>, real: &Tensor<f64>, fake: &Tensor<f64>) -> f64 {
        let pr = real_probabilities(&d.forward(real.clone())).unwrap();
        let pf = real_probabilities(&d.forward(fake.clone())).unwrap();
        let hits = pr.iter().filter(|&&p| p > 0.5).count() + pf.iter().filter(|&&p| p <= 0.5).count();
        hits as f64 / (pr.len() + pf.len()) as f64
    }

    /// Trains a discriminator to separate samples of `draw` from their permutations.
    fn train_discriminator(draw: impl Fn(&mut ChaCha8Rng, usize) -> Tensor<f64>, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut d = build_discriminator::<f64, _>(2, &small_disc(), &mut rng);
        let mut adam = Adam::new(AdamConfig::with_lr(1e-3), &d.params());
        for _ in 0..400 {
            let real = draw(&mut rng, 64);
            let fake = permute_dims(&draw(&mut rng, 64), &mut rng).unwrap();
            let mut grads = d.zero_grads();
            for (z, label) in [(real, 0), (fake, 1)] {
                let (logits, tape) = d.forward_train(z);
                let p = real_probabilities(&logits).unwrap();
                let n = p.len();
                let mut g = Tensor::zeros(&[2, n]);
                for (i, pr) in p.iter().enumerate() {
                    let t0 = if label == 0 { 1.0 } else { 0.0 };
                    g.data_mut()[i] = (pr - t0) / n as f64;
                    g.data_mut()[n + i] = (t0 - pr) / n as f64;
                }
                d.backward(&tape, g, &mut grads);
            }
            adam.update(d.params_mut(), &grads);
        }
        let real = draw(&mut rng, 10_000);
        let fake = permute_dims(&draw(&mut rng, 10_000), &mut rng).unwrap();
        accuracy(&d, &real, &fake)
    }

    #[test]
    fn factorized_codes_are_indistinguishable_from_permutations() {
        let independent = |rng: &mut ChaCha8Rng, n: usize| {
            let data = (0..2 * n).map(|_| StandardNormal.sample(rng)).collect();
            Tensor::from_vec(&[2, n], data)
        };
        let acc = train_discriminator(independent, 1);
        assert!((acc - 0.5).abs() <= 0.05, "accuracy {acc}");
    }

    #[test]
    fn correlated_codes_are_detected() {
        let correlated = |rng: &mut ChaCha8Rng, n: usize| {
            let a: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            let mut data = a.clone();
            for v in &a {
                let e: f64 = StandardNormal.sample(rng);
                data.push(v + 0.1 * e);
            }
            Tensor::from_vec(&[2, n], data)
        };
        let acc = train_discriminator(correlated, 2);
        assert!(acc > 0.8, "accuracy {acc}");
    }

    #[test]
    fn permute_dims_of_single_column_is_a_permutation() {
        let z = Tensor::from_vec(&[1, 5], vec![1.0f64, 2.0, 3.0, 4.0, 5.0]);
        let p = permute_dims(&z, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut v = p.data().to_vec();
        v.sort_by(f64::total_cmp);
        assert_eq!(v, z.data());
        assert!(permute_dims(&Tensor::<f64>::zeros(&[3, 1]), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn permute_dims_histograms_match_over_many_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 10_000;
        let data: Vec<f64> = (0..3 * n).map(|_| (rng.random::<f64>() * 20.0).floor()).collect();
        let z = Tensor::from_vec(&[3, n], data);
        let p = permute_dims(&z, &mut rng).unwrap();
        for j in 0..3 {
            let hist = |t: &Tensor<f64>| {
                let mut h = [0u32; 20];
                t.data()[j * n..(j + 1) * n].iter().for_each(|&v| h[v as usize] += 1);
                h
            };
            assert_eq!(hist(&z), hist(&p));
        }
        assert_ne!(z, p);
    }

    proptest! {
        #[test]
        fn permute_dims_preserves_column_multisets(k in 1usize..5, b in 2usize..40, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..k * b).map(|_| rng.random()).collect();
            let z = Tensor::from_vec(&[k, b], data);
            let p = permute_dims(&z, &mut rng).unwrap();
            for j in 0..k {
                let mut a = z.data()[j * b..(j + 1) * b].to_vec();
                let mut c = p.data()[j * b..(j + 1) * b].to_vec();
                a.sort_by(f64::total_cmp);
                c.sort_by(f64::total_cmp);
                prop_assert_eq!(a, c);
            }
        }
    }

    mod with_vae {
        use super::*;
        use crate::dataset::{sample_batch, CirclesDataset, DatasetSpec};
        use crate::nn::{ArchitectureSpec, BroadcastSpec, ConvLayerSpec, DecoderSpec, EncoderSpec};
        use crate::objectives::elbo::elbo_loss_with_noise;
        use crate::objectives::FactorVaeSpec;

        fn setup() -> (Vae<f64>, Tensor<f64>, Tensor<f64>) {
            let arch = ArchitectureSpec {
                latent_dim: 3,
                image_size: 8,
                channels: 1,
                encoder: EncoderSpec {
                    conv_layers: vec![
                        ConvLayerSpec {
                            kernel: 4,
                            stride: 2,
                            channels: 4
                        };
                        2
                    ],
                    fc_widths: vec![8],
                },
                decoder: DecoderSpec::Broadcast(BroadcastSpec {
                    conv_depth: 2,
                    kernel: 3,
                    channels: 4,
                    ..Default::default()
                }),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut vae = Vae::new(&arch, &mut rng).unwrap();
            // non-zero biases keep pre-activations of black regions away from the ReLU kink
            for p in vae.params_mut() {
                if p.shape().len() == 1 {
                    for v in p.data_mut() {
                        *v = 0.1 * (rng.random::<f64>() - 0.5);
                    }
                }
            }
            let mut data = DatasetSpec::circles(CirclesDataset::XY, 8);
            data.channels = 1;
            let (a, _) = sample_batch(&data, 6, &mut rng);
            let (b, _) = sample_batch(&data, 6, &mut rng);
            (vae, a.to_tensor(), b.to_tensor())
        }

        fn fv_spec(gamma: f64) -> ObjectiveSpec {
            ObjectiveSpec {
                factorvae: Some(FactorVaeSpec {
                    gamma,
                    discriminator: small_disc(),
                    discriminator_lr: 2e-5,
                }),
                ..Default::default()
            }
        }

        #[test]
        fn half_discriminator_has_zero_penalty() {
            let (vae, a, b) = setup();
            let mut d = build_discriminator::<f64, _>(3, &small_disc(), &mut ChaCha8Rng::seed_from_u64(0));
            // zero output layer: both logits 0, D = 1/2
            let last = d.params_mut().len();
            for p in d.params_mut().into_iter().skip(last - 2) {
                p.fill(0.0);
            }
            let step = factorvae_losses(&vae, &d, &a, &b, &fv_spec(35.0), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            assert_eq!(step.report.tc_penalty, Some(0.0));
            assert_eq!(step.report.elbo_loss, step.report.nll + step.report.kl);
            assert!((step.discriminator_loss - std::f64::consts::LN_2).abs() < 1e-12);
        }

        #[test]
        fn small_gamma_approaches_plain_elbo() {
            let (vae, a, b) = setup();
            let d = build_discriminator::<f64, _>(3, &small_disc(), &mut ChaCha8Rng::seed_from_u64(0));
            let spec = fv_spec(1e-300);
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let step = factorvae_losses(&vae, &d, &a, &b, &spec, &mut rng).unwrap();
            // same noise stream as the first draw of the adversarial step
            let noise = sample_noise(3, 6, &mut ChaCha8Rng::seed_from_u64(7));
            let plain = elbo_loss_with_noise(&vae, &a, &ObjectiveSpec::default(), noise).unwrap();
            assert_eq!(step.report.elbo_loss, plain.report.elbo_loss);
            for (g, p) in step.vae_grads.iter().zip(&plain.grads) {
                for (x, y) in g.data().iter().zip(p.data()) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn tc_gradient_matches_finite_differences() {
            let (mut vae, a, b) = setup();
            let d = build_discriminator::<f64, _>(3, &small_disc(), &mut ChaCha8Rng::seed_from_u64(0));
            let spec = fv_spec(5.0);
            let loss = |vae: &Vae<f64>| {
                factorvae_losses(vae, &d, &a, &b, &spec, &mut ChaCha8Rng::seed_from_u64(2))
                    .unwrap()
                    .report
                    .elbo_loss
            };
            let step = factorvae_losses(&vae, &d, &a, &b, &spec, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
            let h = 1e-5;
            let mut worst: f64 = 0.0;
            for (pi, g) in step.vae_grads.iter().enumerate() {
                for e in (0..g.len()).step_by(7) {
                    let orig = vae.params_mut()[pi].data()[e];
                    vae.params_mut()[pi].data_mut()[e] = orig + h;
                    let up = loss(&vae);
                    vae.params_mut()[pi].data_mut()[e] = orig - h;
                    let down = loss(&vae);
                    vae.params_mut()[pi].data_mut()[e] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let an = g.data()[e];
                    worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-3));
                }
            }
            assert!(worst < 1e-5, "{worst}");
        }

        #[test]
        fn missing_factorvae_block_is_a_config_error() {
            let (vae, a, b) = setup();
            let d = build_discriminator::<f64, _>(3, &small_disc(), &mut ChaCha8Rng::seed_from_u64(0));
            assert!(factorvae_losses(&vae, &d, &a, &b, &ObjectiveSpec::default(), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        }
    }
}
