//! Random factor sampling and dataset streams.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::render::render_sprite;
use super::spec::{DatasetSpec, FactorKind, FactorVector, Sample};
use crate::error::Result;
use crate::images::{Image, ImageBatch};
use crate::rng::stream;

/// Draws one dataset item.
///
/// With probability `blank_fraction` the item is blank. Otherwise every non-constant factor
/// is drawn independently and configurations inside the held-out region are redrawn
/// (unless the spec samples its held-out region for evaluation).
pub fn sample_factors<R: Rng + ?Sized>(spec: &DatasetSpec, rng: &mut R) -> Sample {
    if spec.blank_fraction > 0.0 && rng.random::<f64>() < spec.blank_fraction {
        return Sample::Blank;
    }
    loop {
        let mut fv = FactorVector::new();
        for f in &spec.factors {
            let v = match &f.kind {
                FactorKind::Constant(v) => *v,
                FactorKind::Uniform { lo, hi } => {
                    if hi > lo {
                        rng.random_range(*lo..=*hi)
                    } else {
                        *lo
                    }
                }
                FactorKind::Discrete(vs) => vs[rng.random_range(0..vs.len())],
            };
            fv.set(f.name, v);
        }
        if spec.evaluate_holdout || !spec.in_holdout(&fv) {
            return Sample::Factors(fv);
        }
    }
}

/// Renders a sample; blanks are all-zero images.
pub fn render_sample(sample: &Sample, spec: &DatasetSpec) -> Result<Image> {
    match sample {
        Sample::Blank => Ok(Image::blank(spec.image_size, spec.image_size, spec.channels)),
        Sample::Factors(f) => render_sprite(f, spec),
    }
}

/// Deterministic stream of rendered items for one worker.
pub struct DatasetStream {
    spec: DatasetSpec,
    rng: ChaCha8Rng,
    remaining: Option<u64>,
}

impl DatasetStream {
    /// Stream keyed by `(spec.seed, worker)`; `count = None` is unbounded.
    pub fn new(spec: &DatasetSpec, worker: u64, count: Option<u64>) -> Result<Self> {
        spec.validate()?;
        Ok(DatasetStream {
            spec: spec.clone(),
            rng: stream(spec.seed, &[worker]),
            remaining: count,
        })
    }

    pub fn with_rng(spec: &DatasetSpec, rng: ChaCha8Rng, count: Option<u64>) -> Result<Self> {
        spec.validate()?;
        Ok(DatasetStream {
            spec: spec.clone(),
            rng,
            remaining: count,
        })
    }

    pub fn next_batch(&mut self, n: usize) -> (ImageBatch, Vec<Sample>) {
        let (images, samples): (Vec<Image>, Vec<Sample>) = self.by_ref().take(n).unzip();
        (ImageBatch::from_images(&images), samples)
    }
}

impl Iterator for DatasetStream {
    type Item = (Image, Sample);

    fn next(&mut self) -> Option<Self::Item> {
        if let Some(r) = self.remaining.as_mut() {
            if *r == 0 {
                return None;
            }
            *r -= 1;
        }
        let sample = sample_factors(&self.spec, &mut self.rng);
        let image = render_sample(&sample, &self.spec).expect("sampled factors of a validated spec render");
        Some((image, sample))
    }
}

/// `n` items from the stream keyed by `(spec.seed, worker 0)`.
pub fn build_dataset(spec: &DatasetSpec, n: u64) -> Result<DatasetStream> {
    DatasetStream::new(spec, 0, Some(n))
}

/// Samples and renders a batch with the caller's generator.
pub fn sample_batch<R: Rng + ?Sized>(spec: &DatasetSpec, n: usize, rng: &mut R) -> (ImageBatch, Vec<Sample>) {
    let samples: Vec<Sample> = (0..n).map(|_| sample_factors(spec, rng)).collect();
    let images: Vec<Image> = samples
        .iter()
        .map(|s| render_sample(s, spec).expect("sampled factors of a validated spec render"))
        .collect();
    (ImageBatch::from_images(&images), samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::spec::{CirclesDataset, FactorName, Holdout};
    use rand::SeedableRng;

    fn center_xy(size: usize) -> DatasetSpec {
        DatasetSpec::circles(CirclesDataset::XY, size).with_holdout(Holdout::CenterQuarter {
            factors: [FactorName::X, FactorName::Y],
        })
    }

    #[test]
    fn all_constant_spec_always_returns_the_constant() {
        let spec = DatasetSpec::circles(CirclesDataset::RG, 16);
        let mut spec = spec;
        for f in &mut spec.factors {
            f.kind = FactorKind::Constant(f.range().0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let first = sample_factors(&spec, &mut rng);
        for _ in 0..100 {
            assert_eq!(sample_factors(&spec, &mut rng), first);
        }
    }

    #[test]
    fn center_holdout_is_never_sampled() {
        let spec = center_xy(16);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100_000 {
            let s = sample_factors(&spec, &mut rng);
            let f = s.factors().unwrap();
            let (x, y) = (f.get(FactorName::X).unwrap(), f.get(FactorName::Y).unwrap());
            assert!(!((0.35..=0.65).contains(&x) && (0.35..=0.65).contains(&y)));
        }
    }

    #[test]
    fn blank_fraction_is_binomial() {
        let mut spec = DatasetSpec::circles(CirclesDataset::XY, 16);
        spec.blank_fraction = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let blanks = (0..n)
            .filter(|_| sample_factors(&spec, &mut rng) == Sample::Blank)
            .count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((blanks - 50_000.0).abs() < 3.0 * sigma, "{blanks}");
    }

    #[test]
    fn holdout_leaves_marginal_outside_hole_uniform() {
        // Occupancy of a 4x4 grid over [0.2, 0.8]^2; the central 2x2 cells are the hole.
        let spec = center_xy(16);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = [[0u32; 4]; 4];
        for _ in 0..100_000 {
            let s = sample_factors(&spec, &mut rng);
            let f = s.factors().unwrap();
            let cell = |v: f64| (((v - 0.2) / 0.15) as usize).min(3);
            counts[cell(f.get(FactorName::X).unwrap())][cell(f.get(FactorName::Y).unwrap())] += 1;
        }
        let outside: Vec<f64> = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .filter(|&(i, j)| !((1..3).contains(&i) && (1..3).contains(&j)))
            .map(|(i, j)| counts[i][j] as f64)
            .collect();
        assert_eq!(outside.len(), 12);
        let expected = 100_000.0 / 12.0;
        let chi2: f64 = outside.iter().map(|o| (o - expected).powi(2) / expected).sum();
        // 11 degrees of freedom: P(chi2 > 24.72) = 0.01
        assert!(chi2 < 24.72, "chi2 = {chi2}");
        for i in 1..3 {
            for j in 1..3 {
                assert_eq!(counts[i][j], 0);
            }
        }
    }

    #[test]
    fn streams_are_deterministic_and_bounded() {
        let spec = DatasetSpec::circles(CirclesDataset::XY, 16);
        let a: Vec<_> = build_dataset(&spec, 20).unwrap().collect();
        let b: Vec<_> = build_dataset(&spec, 20).unwrap().collect();
        assert_eq!(a.len(), 20);
        assert_eq!(a, b);
        assert_eq!(build_dataset(&spec, 0).unwrap().count(), 0);
        let other: Vec<_> = DatasetStream::new(&spec, 1, Some(20)).unwrap().collect();
        assert_ne!(a, other);
    }

    #[test]
    fn blank_images_are_exactly_zero_and_pixels_in_range() {
        let mut spec = DatasetSpec::circles(CirclesDataset::XYHSmall, 32);
        spec.blank_fraction = 0.3;
        for (img, s) in build_dataset(&spec, 200).unwrap() {
            assert!(img.data.iter().all(|v| (0.0..=1.0).contains(v)));
            if s == Sample::Blank {
                assert!(img.is_blank());
            } else {
                assert!(!img.is_blank());
            }
        }
    }

    #[test]
    fn small_circles_have_tenth_width_diameter() {
        let spec = DatasetSpec::circles(CirclesDataset::XYHSmall, 64);
        for (img, s) in build_dataset(&spec, 10).unwrap() {
            let f = s.factors().unwrap();
            let (r, g, b) = crate::dataset::hsv_to_rgb(f.get(FactorName::Hue).unwrap(), 1.0, 1.0).unwrap();
            let brightest = r.max(g).max(b);
            // sprite mass in the brightest channel is the covered area times its intensity
            let channel = [r, g, b].iter().position(|&c| c == brightest).unwrap();
            let mass: f64 = img.data.iter().skip(channel).step_by(3).map(|&v| v as f64).sum::<f64>() / brightest;
            let diameter = 2.0 * (mass / std::f64::consts::PI).sqrt();
            assert!((diameter / 64.0 - 0.1).abs() < 0.005, "{diameter}");
        }
    }
}
