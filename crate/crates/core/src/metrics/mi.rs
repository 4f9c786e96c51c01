use std::collections::BTreeMap;

use super::table::{ColumnKind, RepresentationTable};
use crate::error::{domain, Error, Result};

pub const DEFAULT_BINS: usize = 20;

/// Mutual information between every latent mean and every factor, in nats.
#[derive(Clone, Debug, PartialEq)]
pub struct MIMatrix {
    /// `k x F`
    pub values: Vec<Vec<f64>>,
    pub factor_entropies: Vec<f64>,
}

/// Equal-count bins: the value of rank `r` (ties share the rank of their first member)
/// lands in bin `floor(r * bins / N)`.
pub fn quantile_bins(column: &[f64], bins: usize) -> Vec<usize> {
    let n = column.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]));
    let mut out = vec![0; n];
    let mut rank = 0;
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 && column[i] != column[order[pos - 1]] {
            rank = pos;
        }
        out[i] = rank * bins / n;
    }
    out
}

/// One label per distinct value, in increasing order.
pub fn category_labels(column: &[f64]) -> Vec<usize> {
    let mut ids = BTreeMap::new();
    let mut sorted: Vec<f64> = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    for v in sorted {
        let next = ids.len();
        ids.entry(v.to_bits()).or_insert(next);
    }
    column.iter().map(|v| ids[&v.to_bits()]).collect()
}

pub fn entropy(labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    let mut counts = BTreeMap::new();
    labels.iter().for_each(|&l| *counts.entry(l).or_insert(0usize) += 1);
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Plug-in mutual information of two label sequences.
pub fn mutual_information(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mut joint = BTreeMap::new();
    let mut pa = BTreeMap::new();
    let mut pb = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_insert(0usize) += 1;
        *pa.entry(x).or_insert(0usize) += 1;
        *pb.entry(y).or_insert(0usize) += 1;
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c as f64 / n;
            pxy * (pxy * n * n / (pa[&x] as f64 * pb[&y] as f64)).ln()
        })
        .sum();
    mi.max(0.0)
}

fn factor_labels(table: &RepresentationTable, j: usize, bins: usize) -> Vec<usize> {
    let col = table.factor_column(j);
    match table.factor_kinds[j] {
        ColumnKind::Continuous => quantile_bins(&col, bins),
        ColumnKind::Discrete => category_labels(&col),
    }
}

pub fn discretized_mi(table: &RepresentationTable, bins: usize) -> Result<MIMatrix> {
    if bins < 2 {
        return Err(domain!("need at least 2 bins, got {bins}"));
    }
    if table.rows() < bins * bins {
        return Err(domain!("{} rows is fewer than bins^2 = {}", table.rows(), bins * bins));
    }
    let factor_labels: Vec<Vec<usize>> = (0..table.factor_names.len())
        .map(|j| factor_labels(table, j, bins))
        .collect();
    let factor_entropies = factor_labels.iter().map(|l| entropy(l)).collect();
    let values = (0..table.latent_dim())
        .map(|i| {
            let z = quantile_bins(&table.latent_column(i), bins);
            factor_labels.iter().map(|f| mutual_information(&z, f)).collect()
        })
        .collect();
    Ok(MIMatrix {
        values,
        factor_entropies,
    })
}

/// Mean over factors of the entropy-normalized gap between the two most informative latents.
pub fn mig(mi: &MIMatrix) -> Result<f64> {
    let k = mi.values.len();
    if k < 2 {
        return Err(domain!("MIG needs at least 2 latents, got {k}"));
    }
    let mut gaps = Vec::new();
    for (j, &h) in mi.factor_entropies.iter().enumerate() {
        if h <= 0.0 {
            continue;
        }
        let mut col: Vec<f64> = mi.values.iter().map(|r| r[j]).collect();
        col.sort_by(|a, b| b.total_cmp(a));
        gaps.push((col[0] - col[1]) / h);
    }
    if gaps.is_empty() {
        return Err(Error::UndefinedMetric("every factor has zero entropy".into()));
    }
    Ok(gaps.iter().sum::<f64>() / gaps.len() as f64)
}

/// Latents whose posterior std, averaged over samples, is below 0.5.
pub fn latents_used(latent_stds: &[Vec<f64>]) -> usize {
    let n = latent_stds.len();
    let k = latent_stds.first().map_or(0, Vec::len);
    (0..k)
        .filter(|&i| latent_stds.iter().map(|r| r[i]).sum::<f64>() / (n as f64) < 0.5)
        .count()
}
