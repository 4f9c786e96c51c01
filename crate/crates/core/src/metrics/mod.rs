//! Disentanglement metrics over encoded samples with known factors.

pub mod factorvae_metric;
pub mod mi;
pub mod table;

pub use factorvae_metric::{factorvae_metric, FactorVaeMetricConfig, FactorVaeScore};
pub use mi::{discretized_mi, latents_used, mig, mutual_information, quantile_bins, MIMatrix, DEFAULT_BINS};
pub use table::{
    representation_table, sample_configurations, ColumnKind, FactorEncoder, FnEncoder, RenderingEncoder,
    RepresentationTable,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CirclesDataset, DatasetSpec, FactorName, FactorVector};
    use crate::rng::splitmix64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hash_noise(fv: &FactorVector, salt: u64) -> f64 {
        let h = fv
            .0
            .values()
            .fold(splitmix64(salt), |acc, v| splitmix64(acc ^ v.to_bits()));
        (h >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn one_to_one_code_has_high_mig() {
        let spec = DatasetSpec::colored_sprites(32);
        let names: Vec<FactorName> = spec.varying_factors().iter().map(|f| f.name).collect();
        let enc = FnEncoder {
            dim: names.len() + 2,
            std: 0.1,
            f: |fv: &FactorVector| {
                let mut z: Vec<f64> = names.iter().map(|&n| fv.get(n).unwrap()).collect();
                z.push(hash_noise(fv, 1));
                z.push(hash_noise(fv, 2));
                z
            },
        };
        let table = representation_table(&enc, &spec, 100_000, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let score = mig(&discretized_mi(&table, DEFAULT_BINS).unwrap()).unwrap();
        assert!(score >= 0.95, "{score}");
        assert_eq!(latents_used(&table.latent_stds), names.len() + 2);
    }

    #[test]
    fn rotated_code_has_low_mig() {
        let spec = DatasetSpec::circles(CirclesDataset::XY, 32);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let enc = FnEncoder {
            dim: 3,
            std: 0.1,
            f: |fv: &FactorVector| {
                let (x, y) = (fv.get(FactorName::X).unwrap() - 0.5, fv.get(FactorName::Y).unwrap() - 0.5);
                vec![s * (x + y), s * (x - y), hash_noise(fv, 3)]
            },
        };
        let table = representation_table(&enc, &spec, 100_000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let score = mig(&discretized_mi(&table, DEFAULT_BINS).unwrap()).unwrap();
        assert!(score <= 0.1, "{score}");
    }
}
