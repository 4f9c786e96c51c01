use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::scalar::Scalar;
use super::tensor::Tensor;

/// Truncation point of the weight initializer, in standard deviations.
pub const TRUNCATION: f64 = 2.0;

/// Standard normal draw conditioned on `|x| <= TRUNCATION` (rejection sampling).
pub fn truncated_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let x: f64 = StandardNormal.sample(rng);
        if x.abs() <= TRUNCATION {
            return x;
        }
    }
}

/// Weights drawn from a truncated normal with standard deviation `1 / sqrt(fan_in)`.
pub fn truncated_normal<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let scale = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::of(scale * truncated_standard_normal(rng)))
        .collect();
    Tensor::from_vec(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_respect_truncation_and_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t: Tensor<f64> = truncated_normal(&[100, 100], 16, &mut rng);
        let bound = TRUNCATION / 4.0;
        assert!(t.data().iter().all(|v| v.abs() <= bound));
        let var = t.data().iter().map(|v| v * v).sum::<f64>() / t.len() as f64;
        // variance of a standard normal truncated at +-2 is ~0.774
        assert!((var * 16.0 - 0.774).abs() < 0.03, "{var}");
    }
}
