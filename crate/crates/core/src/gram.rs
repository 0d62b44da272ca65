//! Hellinger distance, affinity, the Gram matrix of affinities, and the
//! root embedding whose Gram product reproduces it.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dot, SymmetricMatrix};
use crate::measures::ProbabilityMeasure;

fn check_dims(m1: &ProbabilityMeasure, m2: &ProbabilityMeasure) -> Result<()> {
    if m1.dim() != m2.dim() {
        return Err(Error::DimensionMismatch {
            expected: m1.dim(),
            actual: m2.dim(),
        });
    }
    Ok(())
}

/// `Σ √(μ₁α μ₂α)`, clamped to `[0, 1]`.
pub fn affinity(m1: &ProbabilityMeasure, m2: &ProbabilityMeasure) -> Result<f64> {
    check_dims(m1, m2)?;
    let s: f64 = m1.weights().iter().zip(m2.weights()).map(|(a, b)| (a * b).sqrt()).sum();
    Ok(s.clamp(0.0, 1.0))
}

/// Squared Hellinger distance `½ Σ (√μ₁α − √μ₂α)²`.
pub fn hellinger_distance_sq(m1: &ProbabilityMeasure, m2: &ProbabilityMeasure) -> Result<f64> {
    check_dims(m1, m2)?;
    let s: f64 = m1
        .weights()
        .iter()
        .zip(m2.weights())
        .map(|(a, b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum();
    Ok((0.5 * s).clamp(0.0, 1.0))
}

/// The `N×K` matrix whose column `j` is the entrywise square root of measure `j`.
///
/// Stored column-major: each column is contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct RootMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RootMatrix {
    /// Event-space dimension `N`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of measures `K`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn get(&self, alpha: usize, j: usize) -> f64 {
        self.data[j * self.rows + alpha]
    }

    /// `γ_k = Σ_α √μ_kα`, one entry per measure.
    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.cols).map(|j| self.column(j).iter().sum()).collect()
    }

    /// `AᵀA` computed by plain pairwise dot products, diagonal included.
    pub fn gram_product(&self) -> SymmetricMatrix {
        SymmetricMatrix::from_upper_fn(self.cols, |i, j| dot(self.column(i), self.column(j)))
    }
}

/// Stacks the square-root embeddings of `measures` as columns.
pub fn root_embedding(measures: &[ProbabilityMeasure]) -> Result<RootMatrix> {
    let first = measures.first().ok_or(Error::Empty("measures"))?;
    let rows = first.dim();
    let mut data = Vec::with_capacity(rows * measures.len());
    for m in measures {
        if m.dim() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                actual: m.dim(),
            });
        }
        data.extend(m.weights().iter().map(|w| w.sqrt()));
    }
    Ok(RootMatrix {
        rows,
        cols: measures.len(),
        data,
    })
}

/// Symmetric matrix of pairwise affinities with unit diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    matrix: SymmetricMatrix,
    source_dim: usize,
}

impl GramMatrix {
    /// Wraps an arbitrary matrix after checking the structural invariants
    /// (unit diagonal, entries in `[0, 1]`). Positive semi-definiteness is
    /// checked when the spectrum is computed.
    pub fn from_matrix(matrix: SymmetricMatrix, source_dim: usize) -> Result<Self> {
        let k = matrix.order();
        if k == 0 {
            return Err(Error::Empty("Gram matrix"));
        }
        for i in 0..k {
            if matrix.get(i, i) != 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "diagonal entry {i} is {}",
                    matrix.get(i, i)
                )));
            }
            for j in i + 1..k {
                let v = matrix.get(i, j);
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidArgument(format!("entry ({i}, {j}) = {v} outside [0, 1]")));
                }
            }
        }
        Ok(GramMatrix { matrix, source_dim })
    }

    /// Order `K`.
    pub fn order(&self) -> usize {
        self.matrix.order()
    }

    /// Event-space dimension `N` of the measures it was built from.
    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn matrix(&self) -> &SymmetricMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

/// Builds the Gram matrix of `measures`. Rows are computed in parallel; each
/// entry is a single dot product of precomputed square roots, so the result
/// does not depend on the thread count.
pub fn gram_matrix(measures: &[ProbabilityMeasure]) -> Result<GramMatrix> {
    let roots = root_embedding(measures)?;
    Ok(gram_from_roots(&roots))
}

/// Gram matrix from an existing root embedding.
pub fn gram_from_roots(roots: &RootMatrix) -> GramMatrix {
    let k = roots.cols();
    let upper: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let ci = roots.column(i);
            (i + 1..k).map(|j| dot(ci, roots.column(j)).clamp(0.0, 1.0)).collect()
        })
        .collect();
    let mut data = vec![0.0; k * k];
    for (i, row) in upper.iter().enumerate() {
        data[i * k + i] = 1.0;
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            data[i * k + j] = v;
            data[j * k + i] = v;
        }
    }
    GramMatrix {
        matrix: SymmetricMatrix::from_mirrored(k, data),
        source_dim: roots.rows(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::sample_uniform_measure;
    use crate::stream::Stream;

    fn pm(w: &[f64]) -> ProbabilityMeasure {
        ProbabilityMeasure::new(w.to_vec()).unwrap()
    }

    #[test]
    fn distance_examples() {
        let a = pm(&[0.3, 0.7]);
        assert_eq!(hellinger_distance_sq(&a, &a).unwrap(), 0.0);
        assert_eq!(hellinger_distance_sq(&pm(&[1.0, 0.0]), &pm(&[0.0, 1.0])).unwrap(), 1.0);
        let d = hellinger_distance_sq(&pm(&[0.5, 0.5]), &pm(&[1.0, 0.0])).unwrap();
        assert!((d - (1.0 - 0.5f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn affinity_examples() {
        let q = pm(&[0.25; 4]);
        assert!((affinity(&q, &q).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(affinity(&pm(&[1.0, 0.0, 0.0]), &pm(&[0.0, 1.0, 0.0])).unwrap(), 0.0);
        let a = affinity(&pm(&[0.5, 0.5]), &pm(&[1.0, 0.0])).unwrap();
        assert!((a - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mismatched_dimensions() {
        let a = pm(&[0.5, 0.5]);
        let b = pm(&[1.0]);
        assert!(affinity(&a, &b).is_err());
        assert!(hellinger_distance_sq(&a, &b).is_err());
        assert!(root_embedding(&[a.clone(), b.clone()]).is_err());
        assert!(gram_matrix(&[a, b]).is_err());
        assert!(matches!(gram_matrix(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn distance_plus_affinity_is_one() {
        let mut s = Stream::new(2);
        for _ in 0..200 {
            let a = sample_uniform_measure(13, &mut s).unwrap();
            let b = sample_uniform_measure(13, &mut s).unwrap();
            let sum = hellinger_distance_sq(&a, &b).unwrap() + affinity(&a, &b).unwrap();
            assert!((sum - 1.0).abs() < 1e-12);
            assert_eq!(affinity(&a, &b).unwrap(), affinity(&b, &a).unwrap());
        }
    }

    #[test]
    fn root_embedding_columns() {
        let r = root_embedding(&[pm(&[1.0, 0.0])]).unwrap();
        assert_eq!(r.column(0), &[1.0, 0.0]);
        let mut s = Stream::new(5);
        let ms: Vec<_> = (0..6).map(|_| sample_uniform_measure(9, &mut s).unwrap()).collect();
        let r = root_embedding(&ms).unwrap();
        for j in 0..6 {
            let norm: f64 = r.column(j).iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gram_matches_double_loop_oracle() {
        let mut s = Stream::new(17);
        let ms: Vec<_> = (0..4).map(|_| sample_uniform_measure(5, &mut s).unwrap()).collect();
        let g = gram_matrix(&ms).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mut oracle = 0.0;
                for a in 0..5 {
                    oracle += (ms[i].weights()[a] * ms[j].weights()[a]).sqrt();
                }
                assert!((g.get(i, j) - oracle).abs() < 1e-14);
            }
        }
        assert_eq!(g.trace(), 4.0);
        assert_eq!(g.source_dim(), 5);
    }

    #[test]
    fn identical_and_disjoint_degenerate_sets() {
        let same: Vec<_> = (0..3).map(|_| ProbabilityMeasure::degenerate(4, 1).unwrap()).collect();
        let g = gram_matrix(&same).unwrap();
        assert!(g.matrix().as_slice().iter().all(|x| *x == 1.0));
        let distinct: Vec<_> = (0..3).map(|i| ProbabilityMeasure::degenerate(4, i).unwrap()).collect();
        assert_eq!(gram_matrix(&distinct).unwrap().matrix(), &SymmetricMatrix::identity(3));
    }

    #[test]
    fn from_matrix_validates() {
        assert!(GramMatrix::from_matrix(SymmetricMatrix::identity(2), 2).is_ok());
        assert!(GramMatrix::from_matrix(SymmetricMatrix::filled(2, 0.5), 2).is_err());
        let bad = SymmetricMatrix::from_upper_fn(2, |i, j| if i == j { 1.0 } else { 1.5 });
        assert!(GramMatrix::from_matrix(bad, 2).is_err());
    }
}
