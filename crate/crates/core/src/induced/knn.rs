use std::cmp::Ordering;

use rayon::prelude::*;

use crate::corpus::NoisyDataset;
use crate::error::{Error, Result};
use crate::zeroshot::ClassProbabilities;

pub const DEFAULT_MAX_K: usize = 50;

/// `min(50, smallest noisy-label class count)`, at least 1.
pub fn default_k(ds: &NoisyDataset) -> usize {
    let smallest = ds
        .noisy_labels()
        .histogram(ds.num_classes())
        .into_iter()
        .min()
        .unwrap_or(1);
    DEFAULT_MAX_K.min(smallest).clamp(1, ds.len().saturating_sub(1).max(1))
}

/// Neighbour-vote class probabilities: each sample's `k` most cosine-similar
/// other samples vote with their noisy labels. Equal similarities prefer the
/// lower sample index.
pub fn knn_probabilities(ds: &NoisyDataset, k: usize) -> Result<ClassProbabilities> {
    let n = ds.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "k must satisfy 1 <= k < N ({n}), got {k}"
        )));
    }
    let d = ds.dim();
    let mut unit = Vec::with_capacity(n * d);
    for (i, row) in ds.embeddings().iter_rows().enumerate() {
        let norm = row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNorm { row: i });
        }
        unit.extend(row.iter().map(|&v| v as f64 / norm));
    }
    let labels = ds.noisy_labels().as_slice();
    let classes = ds.num_classes();

    let data: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let xi = &unit[i * d..(i + 1) * d];
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let xj = &unit[j * d..(j + 1) * d];
                    (xi.iter().zip(xj).map(|(a, b)| a * b).sum::<f64>(), j)
                })
                .collect();
            let order = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
                b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
            };
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, order);
            }
            let mut counts = vec![0usize; classes];
            for &(_, j) in &cand[..k] {
                counts[labels[j]] += 1;
            }
            counts.into_iter().map(move |c| c as f64 / k as f64)
        })
        .collect();
    ClassProbabilities::new(n, classes, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EmbeddingMatrix, LabelVector};

    fn dataset(rows: Vec<Vec<f64>>, labels: Vec<usize>, k: usize) -> NoisyDataset {
        NoisyDataset::new(
            EmbeddingMatrix::from_rows(&rows).unwrap(),
            LabelVector::new(labels),
            None,
            k,
            NoisyDataset::default_class_names(k),
        )
        .unwrap()
    }

    #[test]
    fn twins_vote_for_own_label() {
        let base = [[1.0, 0.1], [0.2, 1.0], [-1.0, 0.3], [0.4, -1.0]];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (i, r) in base.iter().enumerate() {
            rows.push(r.to_vec());
            rows.push(r.to_vec());
            labels.extend([i % 3, i % 3]);
        }
        let ds = dataset(rows, labels.clone(), 3);
        let p = knn_probabilities(&ds, 1).unwrap();
        for (row, &l) in p.iter_rows().zip(&labels) {
            assert_eq!(row[l], 1.0);
        }
    }

    #[test]
    fn all_neighbours_give_histogram_without_self() {
        let rows: Vec<Vec<f64>> = (0..9).map(|i| vec![(i as f64).cos() + 1.5, (i as f64).sin()]).collect();
        let labels = vec![0, 1, 2, 2, 1, 0, 0, 0, 1];
        let ds = dataset(rows, labels.clone(), 3);
        let p = knn_probabilities(&ds, 8).unwrap();
        for (i, row) in p.iter_rows().enumerate() {
            let mut counts = [0.0; 3];
            for (j, &l) in labels.iter().enumerate() {
                if j != i {
                    counts[l] += 1.0;
                }
            }
            let expected: Vec<f64> = counts.iter().map(|c| c / 8.0).collect();
            assert_eq!(row, expected.as_slice());
        }
    }

    #[test]
    fn outlier_never_votes_for_itself() {
        let ds = dataset(
            vec![vec![1.0, 0.0], vec![0.99, 0.1], vec![0.98, 0.15], vec![-1.0, 0.0]],
            vec![0, 0, 0, 1],
            2,
        );
        let p = knn_probabilities(&ds, 1).unwrap();
        assert_eq!(p.row(3), &[1.0, 0.0]);
    }

    #[test]
    fn ties_prefer_lower_index() {
        // samples 1 and 2 are equally similar to sample 0
        let ds = dataset(
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
            vec![0, 1, 0],
            2,
        );
        assert_eq!(knn_probabilities(&ds, 1).unwrap().row(0), &[0.0, 1.0]);
    }

    #[test]
    fn k_bounds_checked() {
        let ds = dataset(vec![vec![1.0], vec![2.0]], vec![0, 1], 2);
        assert!(knn_probabilities(&ds, 0).is_err());
        assert!(knn_probabilities(&ds, 2).is_err());
        assert!(knn_probabilities(&ds, 1).is_ok());
    }

    #[test]
    fn default_k_caps_at_smallest_class() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![1.0, i as f64]).collect();
        let labels: Vec<usize> = (0..30).map(|i| usize::from(i < 7)).collect();
        assert_eq!(default_k(&dataset(rows, labels, 2)), 7);
    }
}
