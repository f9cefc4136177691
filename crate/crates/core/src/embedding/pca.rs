use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eigen::SymmetricEigen;
use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// Principal component basis fitted on a training matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel<T> {
    pub mean: Vec<T>,
    /// `k` orthonormal rows of length `dim`.
    pub components: Vec<Vec<T>>,
    /// Per-component variance, non-increasing.
    pub explained_variance: Vec<T>,
    /// Trace of the training covariance.
    pub total_variance: T,
}

impl<T: Scalar> PcaModel<T> {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn explained_variance_ratio(&self) -> Vec<T> {
        self.explained_variance
            .iter()
            .map(|&v| if self.total_variance > T::zero() { v / self.total_variance } else { T::zero() })
            .collect()
    }

    /// Projects `x - mean` onto the components.
    pub fn transform(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dim() {
            return Err(Error::DimError { expected: self.dim(), found: x.len() });
        }
        let centered: Vec<T> = x.iter().zip(&self.mean).map(|(&a, &m)| a - m).collect();
        Ok(self.components.iter().map(|c| dot(c, &centered)).collect())
    }

    pub fn transform_many(&self, xs: &[&[T]]) -> Result<Vec<Vec<T>>> {
        xs.par_iter().map(|x| self.transform(x)).collect()
    }

    /// Maps component scores back to the input space.
    pub fn reconstruct(&self, z: &[T]) -> Result<Vec<T>> {
        if z.len() != self.k() {
            return Err(Error::DimError { expected: self.k(), found: z.len() });
        }
        let mut x = self.mean.clone();
        for (c, &s) in self.components.iter().zip(z) {
            for (xi, &ci) in x.iter_mut().zip(c) {
                *xi = *xi + s * ci;
            }
        }
        Ok(x)
    }
}

/// Fits `k` components on the rows of `data`.
///
/// The eigenproblem is solved on whichever of the sample Gram matrix or the
/// feature covariance is smaller. Each component is sign-normalized so its
/// largest-magnitude coordinate is positive.
pub fn pca_fit<T: Scalar>(data: &[&[T]], k: usize) -> Result<PcaModel<T>> {
    let n = data.len();
    let d = data.first().map_or(0, |r| r.len());
    if k == 0 || k > n.min(d) {
        return Err(Error::RankError { k, samples: n, features: d });
    }
    if let Some(bad) = data.iter().find(|r| r.len() != d) {
        return Err(Error::DimError { expected: d, found: bad.len() });
    }

    let inv_n = T::one() / T::of(n as f64);
    let mut mean = vec![T::zero(); d];
    for row in data {
        for (m, &v) in mean.iter_mut().zip(row.iter()) {
            *m = *m + v;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m * inv_n);
    let centered: Vec<Vec<T>> = data
        .par_iter()
        .map(|row| row.iter().zip(&mean).map(|(&v, &m)| v - m).collect())
        .collect();
    let dof = T::of((n.max(2) - 1) as f64);
    let total_variance = centered.iter().map(|r| dot(r, r)).sum::<T>() / dof;

    let (eigenvalues, mut components) = if n <= d {
        gram_route(&centered, k)
    } else {
        covariance_route(&centered, k)
    };
    orthonormalize(&mut components, d);
    for c in components.iter_mut() {
        canonical_sign(c);
    }
    let explained_variance = eigenvalues.iter().map(|&l| l.max(T::zero()) / dof).collect();
    Ok(PcaModel { mean, components, explained_variance, total_variance })
}

/// Eigenvectors of `X X^T` lifted to feature space by `X^T u / sigma`.
fn gram_route<T: Scalar>(x: &[Vec<T>], k: usize) -> (Vec<T>, Vec<Vec<T>>) {
    let n = x.len();
    let d = x[0].len();
    let rows: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| if j < i { T::zero() } else { dot(&x[i], &x[j]) }).collect())
        .collect();
    let mut gram = vec![T::zero(); n * n];
    for i in 0..n {
        for j in i..n {
            gram[i * n + j] = rows[i][j];
            gram[j * n + i] = rows[i][j];
        }
    }
    let eig = SymmetricEigen::new(&gram, n);
    let top = eig.values[n - 1].max(T::zero());
    let tol = top * T::epsilon() * T::of((n * 16) as f64);

    let picked: Vec<usize> = (n - k..n).rev().collect();
    let values = picked.iter().map(|&i| eig.values[i]).collect();
    let comps = picked
        .par_iter()
        .map(|&idx| {
            let lambda = eig.values[idx];
            let mut comp = vec![T::zero(); d];
            if lambda <= tol {
                // null direction, filled in by orthonormalize
                return comp;
            }
            let inv_sigma = T::one() / lambda.sqrt();
            for (row, &ui) in x.iter().zip(eig.vector(idx)) {
                let w = ui * inv_sigma;
                for (c, &v) in comp.iter_mut().zip(row) {
                    *c = *c + w * v;
                }
            }
            comp
        })
        .collect();
    (values, comps)
}

fn covariance_route<T: Scalar>(x: &[Vec<T>], k: usize) -> (Vec<T>, Vec<Vec<T>>) {
    let d = x[0].len();
    let rows: Vec<Vec<T>> = (0..d)
        .into_par_iter()
        .map(|a| {
            (0..d)
                .map(|b| {
                    if b < a {
                        T::zero()
                    } else {
                        x.iter().fold(T::zero(), |acc, r| acc + r[a] * r[b])
                    }
                })
                .collect()
        })
        .collect();
    let mut cov = vec![T::zero(); d * d];
    for a in 0..d {
        for b in a..d {
            cov[a * d + b] = rows[a][b];
            cov[b * d + a] = rows[a][b];
        }
    }
    let eig = SymmetricEigen::new(&cov, d);
    let values = (d - k..d).rev().map(|i| eig.values[i]).collect();
    let comps = (d - k..d).rev().map(|i| eig.vector(i).to_vec()).collect();
    (values, comps)
}

/// Modified Gram-Schmidt; zero or dependent rows are replaced with the next
/// standard basis vector outside the current span.
fn orthonormalize<T: Scalar>(rows: &mut [Vec<T>], d: usize) {
    let mut basis_cursor = 0;
    let tol = T::of(1e-6);
    for i in 0..rows.len() {
        let (done, rest) = rows.split_at_mut(i);
        let row = &mut rest[0];
        let mut norm = project_out(row, done);
        while norm <= tol && basis_cursor < d {
            row.iter_mut().for_each(|v| *v = T::zero());
            row[basis_cursor] = T::one();
            basis_cursor += 1;
            norm = project_out(row, done);
        }
        let inv = T::one() / norm;
        row.iter_mut().for_each(|v| *v = *v * inv);
    }
}

fn project_out<T: Scalar>(row: &mut [T], basis: &[Vec<T>]) -> T {
    let before = dot(row, row).sqrt();
    for b in basis {
        let p = dot(row, b);
        for (r, &bv) in row.iter_mut().zip(b) {
            *r = *r - p * bv;
        }
    }
    let after = dot(row, row).sqrt();
    if before > T::zero() {
        // relative norm guards against near-dependent rows
        if after / before <= T::of(1e-6) {
            return T::zero();
        }
    }
    after
}

fn canonical_sign<T: Scalar>(c: &mut [T]) {
    let mut best = 0;
    for (i, v) in c.iter().enumerate() {
        if v.abs() > c[best].abs() {
            best = i;
        }
    }
    if c.get(best).is_some_and(|&v| v < T::zero()) {
        c.iter_mut().for_each(|v| *v = -*v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| rng.random::<f64>() - 0.5).collect()).collect()
    }

    fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(|r| r.as_slice()).collect()
    }

    #[test]
    fn collinear_data_has_one_component() {
        let dir: Vec<f64> = (0..40).map(|i| ((i as f64) * 0.37).sin()).collect();
        let data: Vec<Vec<f64>> = (0..12)
            .map(|s| dir.iter().map(|v| v * (s as f64 - 4.5) + 2.0).collect())
            .collect();
        let m = pca_fit(&refs(&data), 1).unwrap();
        assert!((m.explained_variance_ratio()[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn full_rank_reconstruction() {
        let data = random(15, 30, 3);
        let m = pca_fit(&refs(&data), 14).unwrap();
        for row in &data {
            let z = m.transform(row).unwrap();
            let back = m.reconstruct(&z).unwrap();
            for (a, b) in back.iter().zip(row) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rank_error_and_dim_error() {
        let data = random(5, 8, 1);
        assert!(matches!(pca_fit(&refs(&data), 6), Err(Error::RankError { .. })));
        let m = pca_fit(&refs(&data), 3).unwrap();
        assert!(matches!(m.transform(&[0.0; 7]), Err(Error::DimError { expected: 8, found: 7 })));
    }

    #[test]
    fn k_equal_to_sample_count_completes_basis() {
        let data = random(6, 10, 9);
        let m = pca_fit(&refs(&data), 6).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let d = dot(&m.components[i], &m.components[j]);
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
        assert!(m.explained_variance[5] < 1e-12);
    }

    #[test]
    fn covariance_route_used_for_tall_data() {
        let data = random(40, 5, 4);
        let m = pca_fit(&refs(&data), 5).unwrap();
        assert!(m.explained_variance.windows(2).all(|w| w[0] >= w[1]));
        let total: f64 = m.explained_variance.iter().sum();
        assert!((total - m.total_variance).abs() < 1e-10);
    }

    #[test]
    fn mean_maps_to_origin() {
        let data = random(20, 12, 5);
        let m = pca_fit(&refs(&data), 4).unwrap();
        let z = m.transform(&m.mean).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn sign_is_canonical() {
        let data = random(20, 12, 6);
        let m = pca_fit(&refs(&data), 4).unwrap();
        for c in &m.components {
            let big = c.iter().cloned().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(big > 0.0);
        }
    }
}
