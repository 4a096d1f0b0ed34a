use hypertune_core::Scalar;

#[derive(Debug, Clone, PartialEq)]
enum Node<T> {
    Leaf(T),
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
}

/// Least-squares regression tree; `x[feature] <= threshold` goes left.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> RegressionTree<T> {
    /// A tree that predicts `value` everywhere.
    pub fn constant(value: T) -> Self {
        Self {
            nodes: vec![Node::Leaf(value)],
        }
    }

    /// Greedy variance-reduction splits over midpoints of sorted unique
    /// feature values. Ties go to the lowest feature, then lowest threshold.
    pub fn fit(features: &[Vec<T>], targets: &[T], max_depth: usize, min_leaf: usize) -> Self {
        assert_eq!(features.len(), targets.len(), "features/targets length mismatch");
        assert!(!targets.is_empty(), "cannot fit a tree to no data");
        let mut tree = Self { nodes: Vec::new() };
        let idx: Vec<usize> = (0..targets.len()).collect();
        tree.grow(features, targets, idx, 0, max_depth, min_leaf.max(1));
        tree
    }

    fn grow(&mut self, x: &[Vec<T>], y: &[T], idx: Vec<usize>, depth: usize, max_depth: usize, min_leaf: usize) -> usize {
        let n = T::from_usize_lossy(idx.len());
        let sum: T = idx.iter().map(|&i| y[i]).sum();
        let mean = sum / n;
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf(mean));
        if depth >= max_depth || idx.len() < 2 * min_leaf {
            return me;
        }
        let Some((feature, threshold)) = best_split(x, y, &idx, min_leaf) else {
            return me;
        };
        let (li, ri): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][feature] <= threshold);
        let left = self.grow(x, y, li, depth + 1, max_depth, min_leaf);
        let right = self.grow(x, y, ri, depth + 1, max_depth, min_leaf);
        self.nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }

    pub fn predict(&self, x: &[T]) -> T {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[Node<T>], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    /// (feature, threshold) of the root split, if any.
    pub fn root_split(&self) -> Option<(usize, T)> {
        match self.nodes[0] {
            Node::Split { feature, threshold, .. } => Some((feature, threshold)),
            Node::Leaf(_) => None,
        }
    }

    pub fn leaf_values(&self) -> Vec<T> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf(v) => Some(*v),
                Node::Split { .. } => None,
            })
            .collect()
    }
}

/// Maximizes `S_L²/n_L + S_R²/n_R`, equivalent to minimizing child SSE.
fn best_split<T: Scalar>(x: &[Vec<T>], y: &[T], idx: &[usize], min_leaf: usize) -> Option<(usize, T)> {
    let n = idx.len();
    let total: T = idx.iter().map(|&i| y[i]).sum();
    let sumsq: T = idx.iter().map(|&i| y[i] * y[i]).sum();
    let parent = total * total / T::from_usize_lossy(n);
    let tol = T::epsilon() * T::lit(64.0) * (sumsq + T::one());
    let mut best: Option<(usize, T, T)> = None;
    let mut order = idx.to_vec();
    for f in 0..x[idx[0]].len() {
        order.sort_by(|&a, &b| x[a][f].partial_cmp(&x[b][f]).expect("finite features"));
        let mut left = T::zero();
        for pos in 1..n {
            left += y[order[pos - 1]];
            let (lo, hi) = (x[order[pos - 1]][f], x[order[pos]][f]);
            if pos < min_leaf || n - pos < min_leaf || !(lo < hi) {
                continue;
            }
            let (nl, nr) = (T::from_usize_lossy(pos), T::from_usize_lossy(n - pos));
            let right = total - left;
            let gain = left * left / nl + right * right / nr - parent;
            if gain > tol && best.is_none_or(|(_, _, g)| gain > g) {
                best = Some((f, (lo + hi) / T::lit(2.0), gain));
            }
        }
    }
    best.map(|(f, t, _)| (f, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_zero_is_mean() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let t = RegressionTree::fit(&x, &[1.0, 2.0, 6.0], 0, 1);
        assert_eq!(t.n_leaves(), 1);
        assert_eq!(t.predict(&[5.0]), 3.0);
    }

    /// Hand scan of every split position on sorted 1-D data.
    fn oracle_best_threshold(xs: &[f64], ys: &[f64]) -> f64 {
        let sse = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|y| (y - m).powi(2)).sum::<f64>()
        };
        let mut best = (f64::INFINITY, 0.0);
        for k in 1..xs.len() {
            let s = sse(&ys[..k]) + sse(&ys[k..]);
            if s < best.0 - 1e-12 {
                best = (s, (xs[k - 1] + xs[k]) / 2.0);
            }
        }
        best.1
    }

    #[test]
    fn step_function_split() {
        let xs = [0.0, 0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9];
        let ys: Vec<f64> = xs.iter().map(|&x| if x < 0.5 { 0.0 } else { 1.0 }).collect();
        let feats: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let t = RegressionTree::fit(&feats, &ys, 1, 1);
        let (f, thr) = t.root_split().unwrap();
        assert_eq!(f, 0);
        assert!((thr - oracle_best_threshold(&xs, &ys)).abs() < 1e-12);
        assert!((thr - 0.5).abs() < 1e-12);
        assert_eq!(t.leaf_values(), vec![0.0, 1.0]);
    }

    #[test]
    fn constant_targets_no_split() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let t = RegressionTree::fit(&x, &[0.7; 10], 4, 1);
        assert_eq!(t.n_leaves(), 1);
    }

    #[test]
    fn tie_prefers_lowest_feature() {
        // both features separate the targets identically
        let x = vec![vec![0.0, 10.0], vec![1.0, 11.0], vec![2.0, 12.0], vec![3.0, 13.0]];
        let t = RegressionTree::fit(&x, &[0.0, 0.0, 1.0, 1.0], 1, 1);
        assert_eq!(t.root_split(), Some((0, 1.5)));
    }

    #[test]
    fn respects_depth_and_min_leaf() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64).sin(), (i as f64 * 0.37).cos()]).collect();
        let y: Vec<f64> = (0..40).map(|i| ((i * 7) % 11) as f64).collect();
        let t = RegressionTree::fit(&x, &y, 3, 5);
        assert!(t.depth() <= 3);
        // count training samples per leaf by routing
        let mut counts = std::collections::HashMap::new();
        for xi in &x {
            *counts.entry(t.predict(xi).to_bits()).or_insert(0usize) += 1;
        }
        assert!(counts.values().all(|&c| c >= 5), "{counts:?}");
    }
}
