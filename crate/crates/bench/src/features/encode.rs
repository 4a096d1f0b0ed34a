use hypertune_core::evalstat::percentile;
use hypertune_core::linalg::Matrix;
use hypertune_core::Scalar;

use super::images::extract_patches;
use super::kmeans::Codebook;
use super::pipeline::UnsupConfig;
use super::zca::ZcaTransform;
use super::FeatureError;

/// Quadrants per image (pool_r = 2).
pub const POOL_CELLS: usize = 4;

/// Distances to every centroid, with those above the `sparse_p`-th
/// percentile (linear interpolation) set to zero.
pub fn encode_sparse<T: Scalar>(patch: &[T], codebook: &Codebook<T>, sparse_p: T) -> Vec<T> {
    let d = codebook.distances(patch);
    sparsify(d, sparse_p)
}

pub(crate) fn sparsify<T: Scalar>(mut d: Vec<T>, sparse_p: T) -> Vec<T> {
    let t = percentile(&d, sparse_p);
    for v in &mut d {
        if *v > t {
            *v = T::zero();
        }
    }
    d
}

/// Encode every patch, sum encodings within each of the four quadrants of
/// the patch grid (first half gets ⌈g/2⌉ rows/cols), concatenate row-major.
pub fn featurize_image<T: Scalar>(
    image: &Matrix<T>,
    cfg: &UnsupConfig,
    zca: &ZcaTransform<T>,
    codebook: &Codebook<T>,
) -> Result<Vec<T>, FeatureError> {
    let grid = extract_patches(image, cfg.w, cfg.effective_stride())?;
    let sparse_p = T::lit(cfg.sparse_p);
    let encoded: Vec<Vec<T>> = grid
        .patches
        .iter()
        .map(|p| encode_sparse(&zca.apply_one(p), codebook, sparse_p))
        .collect();
    Ok(pool_quadrants(&encoded, grid.g, codebook.k()))
}

pub(crate) fn pool_quadrants<T: Scalar>(encoded: &[Vec<T>], g: usize, k: usize) -> Vec<T> {
    let h = g.div_ceil(2);
    let mut out = vec![T::zero(); POOL_CELLS * k];
    for (idx, e) in encoded.iter().enumerate() {
        let (r, c) = (idx / g, idx % g);
        let q = usize::from(r >= h) * 2 + usize::from(c >= h);
        for (o, &v) in out[q * k..(q + 1) * k].iter_mut().zip(e) {
            *o += v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig7_example() {
        assert_eq!(sparsify(vec![1.0, 2.0, 3.0, 4.0], 50.0), vec![1.0, 2.0, 0.0, 0.0]);
        assert_eq!(sparsify(vec![4.0, 1.0, 3.0, 2.0], 50.0), vec![0.0, 1.0, 0.0, 2.0]);
    }

    #[test]
    fn full_percentile_keeps_everything() {
        let d = vec![0.3, 2.0, 1.1, 0.9, 5.0];
        assert_eq!(sparsify(d.clone(), 100.0), d);
    }

    #[test]
    fn equal_distances_all_kept() {
        assert_eq!(sparsify(vec![2.0; 5], 50.0), vec![2.0; 5]);
    }

    #[test]
    fn encode_uses_codebook_distances() {
        let cb = Codebook::new(vec![vec![0.0, 0.0], vec![3.0, 4.0], vec![0.0, 1.0]]).unwrap();
        let e = encode_sparse(&[0.0, 0.0], &cb, 50.0);
        assert_eq!(e, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn single_patch_fills_first_quadrant() {
        let out = pool_quadrants(&[vec![1.0, 2.0]], 1, 2);
        assert_eq!(out, vec![1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn odd_grid_split() {
        // g = 3: rows/cols {0,1} | {2}
        let enc: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64]).collect();
        let out = pool_quadrants(&enc, 3, 1);
        assert_eq!(out, vec![0.0 + 1.0 + 3.0 + 4.0, 2.0 + 5.0, 6.0 + 7.0, 8.0]);
    }

    #[test]
    fn pooling_preserves_total() {
        let enc: Vec<Vec<f64>> = (0..16).map(|i| vec![i as f64, 0.5 * i as f64, 1.0]).collect();
        let out = pool_quadrants(&enc, 4, 3);
        assert_eq!(out.len(), 12);
        let total: f64 = enc.iter().flatten().sum();
        assert!((out.iter().sum::<f64>() - total).abs() < 1e-12);
    }

    #[test]
    fn zero_encodings_zero_features() {
        let enc = vec![vec![0.0; 4]; 9];
        assert!(pool_quadrants(&enc, 3, 4).iter().all(|&v| v == 0.0));
    }
}
