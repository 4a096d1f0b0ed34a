use hypertune_core::linalg::{symmetric_eigen, Matrix};
use hypertune_core::Scalar;

use super::FeatureError;

/// ZCA whitening fitted to a set of patches:
/// `x ↦ (x - μ) U (Λ + εI)^{-1/2} Uᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZcaTransform<T> {
    mean: Vec<T>,
    eigvecs: Matrix<T>,
    eigvals: Vec<T>,
    eps: T,
    whitener: Matrix<T>,
}

/// Sample covariance with 1/(N-1) normalization.
pub fn covariance<T: Scalar>(rows: &[Vec<T>]) -> (Vec<T>, Matrix<T>) {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let nf = T::from_usize_lossy(n);
    let mut mean = vec![T::zero(); d];
    for r in rows {
        for (m, &x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= nf;
    }
    let mut cov = Matrix::zeros(d, d);
    for r in rows {
        let c: Vec<T> = r.iter().zip(&mean).map(|(&x, &m)| x - m).collect();
        for i in 0..d {
            for j in 0..=i {
                cov[(i, j)] += c[i] * c[j];
            }
        }
    }
    let denom = nf - T::one();
    for i in 0..d {
        for j in 0..=i {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov)
}

pub fn fit_zca<T: Scalar>(patches: &[Vec<T>], eps: T) -> Result<ZcaTransform<T>, FeatureError> {
    if patches.len() < 2 {
        return Err(FeatureError::TooFewSamples {
            need: 2,
            got: patches.len(),
        });
    }
    if eps < T::zero() || !eps.is_finite() {
        return Err(FeatureError::InvalidConfig("ZCA epsilon must be finite and >= 0".into()));
    }
    let (mean, cov) = covariance(patches);
    let (mut eigvals, eigvecs) = symmetric_eigen(&cov);
    for v in &mut eigvals {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    let d = mean.len();
    let scale: Vec<T> = eigvals
        .iter()
        .map(|&l| {
            let s = l + eps;
            if s > T::zero() {
                T::one() / s.sqrt()
            } else {
                T::zero()
            }
        })
        .collect();
    let whitener = Matrix::from_fn(d, d, |i, j| (0..d).map(|k| eigvecs[(i, k)] * scale[k] * eigvecs[(j, k)]).sum());
    Ok(ZcaTransform {
        mean,
        eigvecs,
        eigvals,
        eps,
        whitener,
    })
}

impl<T: Scalar> ZcaTransform<T> {
    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigvals
    }

    pub fn eigenvectors(&self) -> &Matrix<T> {
        &self.eigvecs
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    pub fn apply_one(&self, patch: &[T]) -> Vec<T> {
        let centered: Vec<T> = patch.iter().zip(&self.mean).map(|(&x, &m)| x - m).collect();
        // whitener is symmetric, so row i · centered is column i of (x-μ)W
        self.whitener.matvec(&centered)
    }

    pub fn apply(&self, patches: &[Vec<T>]) -> Vec<Vec<T>> {
        patches.iter().map(|p| self.apply_one(p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hypertune_core::seeded_rng;
    use rand::Rng;

    fn random_patches(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = seeded_rng(seed);
        // correlated columns: x_j = z_j + 0.5 z_{j-1}
        (0..n)
            .map(|_| {
                let z: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                (0..d).map(|j| z[j] + if j > 0 { 0.5 * z[j - 1] } else { 0.0 }).collect()
            })
            .collect()
    }

    #[test]
    fn eigenvectors_orthonormal() {
        let z = fit_zca(&random_patches(60, 9, 1), 0.0).unwrap();
        let u = z.eigenvectors();
        let utu = u.transpose().matmul(u);
        assert!(utu.sub(&Matrix::identity(9)).frobenius() < 1e-8);
        assert!(z.eigenvalues().iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn whitened_covariance_is_identity() {
        let p = random_patches(50, 16, 2);
        let z = fit_zca(&p, 0.0).unwrap();
        let (mean, cov) = covariance(&z.apply(&p));
        assert!(cov.sub(&Matrix::identity(16)).frobenius() < 1e-6);
        assert!(mean.iter().all(|m| m.abs() < 1e-10));
    }

    #[test]
    fn identity_covariance_is_a_fixed_point() {
        // ±1 sign patterns with zero mean and identity covariance
        let d = 2;
        let p = vec![vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]];
        // covariance is (4/3) I; rescale so it is exactly I
        let s = (3.0f64 / 4.0).sqrt();
        let p: Vec<Vec<f64>> = p.iter().map(|r| r.iter().map(|x| x * s).collect()).collect();
        let z = fit_zca(&p, 0.0).unwrap();
        for (a, b) in z.apply(&p).iter().zip(&p) {
            for k in 0..d {
                assert!((a[k] - b[k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn huge_eps_shrinks_to_zero() {
        let p = random_patches(30, 4, 3);
        let z = fit_zca(&p, 1e12).unwrap();
        let out = z.apply(&p);
        assert!(out.iter().flatten().all(|x| x.abs() < 1e-5));
    }

    #[test]
    fn needs_two_patches() {
        assert!(fit_zca(&[vec![1.0, 2.0]], 0.1).is_err());
    }
}
