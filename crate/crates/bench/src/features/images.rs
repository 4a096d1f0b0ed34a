use std::io::{BufRead, Write};

use hypertune_core::linalg::Matrix;
use hypertune_core::{seeded_rng, Scalar};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::FeatureError;

/// Square grayscale images with labels in {-1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet<T> {
    images: Vec<Matrix<T>>,
    labels: Vec<i8>,
    n: usize,
}

impl<T: Scalar> ImageSet<T> {
    pub fn new(images: Vec<Matrix<T>>, labels: Vec<i8>) -> Result<Self, FeatureError> {
        if images.len() != labels.len() {
            return Err(FeatureError::InvalidConfig(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        let n = images.first().map_or(0, Matrix::rows);
        if images.iter().any(|m| m.rows() != n || m.cols() != n) {
            return Err(FeatureError::InvalidConfig("images must be square and equally sized".into()));
        }
        if labels.iter().any(|&l| l != 1 && l != -1) {
            return Err(FeatureError::InvalidConfig("labels must be -1 or 1".into()));
        }
        Ok(Self { images, labels, n })
    }

    pub fn images(&self) -> &[Matrix<T>] {
        &self.images
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn with_labels(&self, labels: Vec<i8>) -> Result<Self, FeatureError> {
        Self::new(self.images.clone(), labels)
    }

    /// CSV with header `label,p0,...,p{n²-1}`, pixels row-major.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), FeatureError> {
        let cols: Vec<String> = (0..self.n * self.n).map(|i| format!("p{i}")).collect();
        writeln!(w, "label,{}", cols.join(","))?;
        for (img, label) in self.images.iter().zip(&self.labels) {
            let px: Vec<String> = img.as_slice().iter().map(|p| format!("{p}")).collect();
            writeln!(w, "{label},{}", px.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self, FeatureError> {
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines.next().ok_or(FeatureError::Format {
            line: 1,
            msg: "missing header".into(),
        })?;
        let header = header?;
        let n_px = header.split(',').count().saturating_sub(1);
        let n = (n_px as f64).sqrt().round() as usize;
        if n * n != n_px || !header.starts_with("label,") {
            return Err(FeatureError::Format {
                line: 1,
                msg: "header must be label,p0,...,p{n*n-1}".into(),
            });
        }
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: String| FeatureError::Format { line: i + 1, msg };
            let mut fields = line.split(',');
            let label: i8 = fields
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| bad("bad label".into()))?;
            let px = fields
                .map(|s| s.trim().parse::<f64>().map(T::lit))
                .collect::<Result<Vec<T>, _>>()
                .map_err(|e| bad(e.to_string()))?;
            if px.len() != n_px {
                return Err(bad(format!("expected {n_px} pixels, got {}", px.len())));
            }
            images.push(Matrix::from_vec(n, n, px));
            labels.push(label);
        }
        Self::new(images, labels)
    }
}

/// Patches of one image laid out on a `g × g` grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid<T> {
    pub g: usize,
    pub w: usize,
    pub patches: Vec<Vec<T>>,
}

/// `w × w` patches at stride `s`, flattened row-major; `⌊(n-w)/s⌋ + 1` per axis.
pub fn extract_patches<T: Scalar>(image: &Matrix<T>, w: usize, s: usize) -> Result<PatchGrid<T>, FeatureError> {
    let n = image.rows();
    if w > n {
        return Err(FeatureError::PatchTooWide { w, n });
    }
    if w == 0 || s == 0 {
        return Err(FeatureError::InvalidConfig("patch width and stride must be >= 1".into()));
    }
    let g = (n - w) / s + 1;
    let mut patches = Vec::with_capacity(g * g);
    for gr in 0..g {
        for gc in 0..g {
            let (r0, c0) = (gr * s, gc * s);
            let mut p = Vec::with_capacity(w * w);
            for r in r0..r0 + w {
                p.extend_from_slice(&image.row(r)[c0..c0 + w]);
            }
            patches.push(p);
        }
    }
    Ok(PatchGrid { g, w, patches })
}

/// Two classes tiled with 2×2 motifs (checkerboard vs. horizontal stripes)
/// at a random phase, plus N(0, 0.15²) pixel noise, clamped to [0,1].
/// `contrast` scales the motif amplitude; 0 leaves pure noise.
pub fn make_synthetic_images(seed: u64, count: usize, n: usize, contrast: f64) -> ImageSet<f64> {
    let mut rng = seeded_rng(seed);
    let noise = Normal::new(0.0, 0.15).expect("valid sd");
    let checker = [[1.0, 0.0], [0.0, 1.0]];
    let stripes = [[1.0, 1.0], [0.0, 0.0]];
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label: i8 = if i % 2 == 0 { 1 } else { -1 };
        let motif = if label == 1 { &checker } else { &stripes };
        let (dr, dc) = (rng.random_range(0..2usize), rng.random_range(0..2usize));
        let img = Matrix::from_fn(n, n, |r, c| {
            let m: f64 = motif[(r + dr) % 2][(c + dc) % 2];
            (0.5 + contrast * 0.25 * (2.0 * m - 1.0) + noise.sample(&mut rng)).clamp(0.0, 1.0)
        });
        images.push(img);
        labels.push(label);
    }
    ImageSet::new(images, labels).expect("synthetic images are well formed")
}
