use hypertune_core::{seeded_rng, Scalar};
use rand::Rng;

use super::FeatureError;

/// K centroids in whitened patch space.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    centroids: Vec<Vec<T>>,
}

impl<T: Scalar> Codebook<T> {
    pub fn new(centroids: Vec<Vec<T>>) -> Result<Self, FeatureError> {
        if centroids.len() < 2 {
            return Err(FeatureError::InvalidConfig("codebook needs K >= 2".into()));
        }
        Ok(Self { centroids })
    }

    pub fn centroids(&self) -> &[Vec<T>] {
        &self.centroids
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Euclidean distance from `x` to every centroid.
    pub fn distances(&self, x: &[T]) -> Vec<T> {
        self.centroids.iter().map(|c| sq_dist(c, x).sqrt()).collect()
    }

    /// Sum of squared distances of points to their nearest centroid.
    pub fn inertia(&self, points: &[Vec<T>]) -> T {
        points.iter().map(|p| nearest(&self.centroids, p).1).sum()
    }
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn nearest<T: Scalar>(centroids: &[Vec<T>], p: &[T]) -> (usize, T) {
    let mut best = (0, sq_dist(&centroids[0], p));
    for (k, c) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(c, p);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

pub const DEFAULT_ITERS: usize = 50;

pub fn kmeans_fit<T: Scalar>(points: &[Vec<T>], k: usize, iters: usize, seed: u64) -> Result<Codebook<T>, FeatureError> {
    kmeans_fit_traced(points, k, iters, seed).map(|(c, _)| c)
}

/// k-means++ seeding then Lloyd iterations until the assignment stops
/// changing or `iters` is reached. Empty clusters are re-seeded at the point
/// farthest from its centroid. Also returns the SSE after each assignment.
pub fn kmeans_fit_traced<T: Scalar>(points: &[Vec<T>], k: usize, iters: usize, seed: u64) -> Result<(Codebook<T>, Vec<T>), FeatureError> {
    if k < 2 {
        return Err(FeatureError::InvalidConfig("K must be >= 2".into()));
    }
    if points.len() < k {
        return Err(FeatureError::TooFewSamples { need: k, got: points.len() });
    }
    let mut rng = seeded_rng(seed);
    let mut centroids: Vec<Vec<T>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())].clone());
    let mut d2: Vec<T> = points.iter().map(|p| sq_dist(&centroids[0], p)).collect();
    while centroids.len() < k {
        let total: T = d2.iter().copied().sum();
        let pick = if total > T::zero() {
            let u = T::lit(rng.random::<f64>()) * total;
            let mut acc = T::zero();
            let mut chosen = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > u && w > T::zero() {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            let nd = sq_dist(centroids.last().expect("non-empty"), p);
            if nd < *d {
                *d = nd;
            }
        }
    }

    let dim = points[0].len();
    let mut assign: Vec<usize> = vec![usize::MAX; points.len()];
    let mut sse_history = Vec::new();
    for _ in 0..iters.max(1) {
        let mut changed = false;
        let mut sse = T::zero();
        let mut dists = Vec::with_capacity(points.len());
        for (a, p) in assign.iter_mut().zip(points) {
            let (c, d) = nearest(&centroids, p);
            if *a != c {
                *a = c;
                changed = true;
            }
            sse += d;
            dists.push(d);
        }
        sse_history.push(sse);
        if !changed {
            break;
        }
        let mut sums = vec![vec![T::zero(); dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assign.iter().zip(points) {
            counts[a] += 1;
            for (s, &x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let n = T::from_usize_lossy(counts[c]);
                centroids[c] = sums[c].iter().map(|&s| s / n).collect();
            } else {
                let far = dists
                    .iter()
                    .enumerate()
                    .fold(0, |best, (i, &d)| if d > dists[best] { i } else { best });
                centroids[c] = points[far].clone();
                dists[far] = T::zero();
            }
        }
    }
    Ok((Codebook { centroids }, sse_history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn k_equals_n_recovers_points() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 3.0], vec![5.0, 5.0]];
        let cb = kmeans_fit(&pts, 4, 10, 1).unwrap();
        let mut got = cb.centroids().to_vec();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want = pts.clone();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
        assert_eq!(cb.inertia(&pts), 0.0);
    }

    fn blobs() -> (Vec<Vec<f64>>, [Vec<f64>; 2]) {
        let mut rng = seeded_rng(5);
        let n = Normal::new(0.0, 0.2).unwrap();
        let mut pts = Vec::new();
        for (cx, cy) in [(0.0, 0.0), (5.0, 5.0)] {
            for _ in 0..50 {
                pts.push(vec![cx + n.sample(&mut rng), cy + n.sample(&mut rng)]);
            }
        }
        let mean = |s: &[Vec<f64>]| vec![s.iter().map(|p| p[0]).sum::<f64>() / 50.0, s.iter().map(|p| p[1]).sum::<f64>() / 50.0];
        let m = [mean(&pts[..50]), mean(&pts[50..])];
        (pts, m)
    }

    #[test]
    fn separated_blobs() {
        let (pts, means) = blobs();
        let cb = kmeans_fit(&pts, 2, 50, 3).unwrap();
        for m in &means {
            let closest = cb
                .centroids()
                .iter()
                .map(|c| sq_dist(c, m).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(closest < 0.1);
        }
    }

    #[test]
    fn sse_never_increases() {
        let mut rng = seeded_rng(8);
        let pts: Vec<Vec<f64>> = (0..200).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let (_, sse) = kmeans_fit_traced(&pts, 6, 50, 2).unwrap();
        assert!(sse.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{sse:?}");
    }

    #[test]
    fn deterministic_per_seed() {
        let (pts, _) = blobs();
        assert_eq!(kmeans_fit(&pts, 3, 20, 4).unwrap(), kmeans_fit(&pts, 3, 20, 4).unwrap());
    }

    #[test]
    fn too_few_points() {
        assert!(kmeans_fit(&[vec![1.0], vec![2.0]], 3, 10, 0).is_err());
    }
}
