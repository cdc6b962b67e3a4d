//! Greedy CART regression trees with an MSE split criterion.
//!
//! Fitting keeps one presorted index array per feature and partitions them
//! stably down the tree, so each node costs O(features x rows) instead of a
//! per-node sort. Split ties are broken toward the lowest feature index and
//! then the lowest threshold, which makes fits reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::trees::check_matrix;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Per-tree fitting constraints. `max_features` is already resolved to a
/// count here; ensemble settings decide the rule.
#[derive(Debug, Clone, Copy)]
pub struct CartSettings {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: usize,
}

impl CartSettings {
    pub fn unlimited() -> Self {
        CartSettings {
            max_depth: usize::MAX,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: usize::MAX,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CartTree {
    nodes: Vec<Node>,
}

impl CartTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { value } => *value,
            Node::Split { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    /// Index of the leaf node the row is routed to.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub(crate) fn scale_leaves(&mut self, factor: f64) {
        for node in &mut self.nodes {
            if let Node::Leaf { value } = node {
                *value *= factor;
            }
        }
    }
}

/// Fits a CART tree on `rows` (dataset row ids, with multiplicity when
/// bootstrapped). `leaf_value` maps the training rows reaching a leaf to its
/// prediction: the plain mean for regression, a Newton step for boosting.
/// Returns the tree and the un-normalized impurity decrease per feature.
pub(crate) fn fit_rows<F>(
    x: &[f64],
    n_features: usize,
    y: &[f64],
    rows: &[u32],
    settings: &CartSettings,
    rng: &mut ChaCha8Rng,
    leaf_value: &F,
) -> (CartTree, Vec<f64>)
where
    F: Fn(&[u32]) -> f64,
{
    let mut order: Vec<Vec<u32>> = (0..n_features)
        .map(|f| {
            let mut idx = rows.to_vec();
            idx.sort_by(|&a, &b| {
                let (va, vb) = (x[a as usize * n_features + f], x[b as usize * n_features + f]);
                va.partial_cmp(&vb).unwrap().then(a.cmp(&b))
            });
            idx
        })
        .collect();
    // Canonical row list, sorted by row id. Node statistics and leaf values
    // are accumulated in this order so their floating-point results do not
    // depend on how the feature columns are arranged.
    let mut canon = rows.to_vec();
    canon.sort_unstable();

    let mut builder = Builder {
        x,
        n_features,
        y,
        canon,
        scratch: vec![0u32; rows.len()],
        goes_left: vec![false; y.len()],
        nodes: Vec::new(),
        importance: vec![0.0; n_features],
        feature_pool: (0..n_features).collect(),
        settings: *settings,
        rng,
        leaf_value,
    };
    builder.build(&mut order, 0, rows.len(), 0);
    (
        CartTree {
            nodes: builder.nodes,
        },
        builder.importance,
    )
}

/// Standalone CART fit over all rows (no bootstrap, mean leaves).
pub fn cart_fit(x: &[f64], n_features: usize, y: &[f64], settings: &CartSettings) -> Result<CartTree> {
    let n = check_matrix(x, n_features, y)?;
    let rows: Vec<u32> = (0..n as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mean = |rows: &[u32]| {
        rows.iter().map(|&r| y[r as usize]).sum::<f64>() / rows.len() as f64
    };
    let (tree, _) = fit_rows(x, n_features, y, &rows, settings, &mut rng, &mean);
    Ok(tree)
}

struct Builder<'a, F> {
    x: &'a [f64],
    n_features: usize,
    y: &'a [f64],
    canon: Vec<u32>,
    scratch: Vec<u32>,
    goes_left: Vec<bool>,
    nodes: Vec<Node>,
    importance: Vec<f64>,
    feature_pool: Vec<usize>,
    settings: CartSettings,
    rng: &'a mut ChaCha8Rng,
    leaf_value: &'a F,
}

impl<F: Fn(&[u32]) -> f64> Builder<'_, F> {
    fn build(&mut self, order: &mut [Vec<u32>], lo: usize, hi: usize, depth: usize) -> usize {
        let count = hi - lo;
        let (sum, sum_sq) = self.canon[lo..hi].iter().fold((0.0, 0.0), |(s, q), &r| {
            let v = self.y[r as usize];
            (s + v, q + v * v)
        });
        let node_sse = (sum_sq - sum * sum / count as f64).max(0.0);

        let stop = depth >= self.settings.max_depth
            || count < self.settings.min_samples_split
            || count < 2 * self.settings.min_samples_leaf
            || node_sse <= 1e-12;
        if !stop {
            if let Some(split) = self.best_split(order, lo, hi, sum, sum_sq, node_sse) {
                return self.split_node(order, lo, hi, depth, split);
            }
        }
        let value = (self.leaf_value)(&self.canon[lo..hi]);
        self.nodes.push(Node::Leaf { value });
        self.nodes.len() - 1
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let k = self.settings.max_features.min(self.n_features);
        if k >= self.n_features {
            return self.feature_pool.clone();
        }
        // Partial Fisher-Yates draw of k distinct features, then ascending
        // order so the lowest-index tie rule is preserved.
        let n = self.feature_pool.len();
        for i in 0..k {
            let j = self.rng.gen_range(i..n);
            self.feature_pool.swap(i, j);
        }
        let mut picked = self.feature_pool[..k].to_vec();
        picked.sort_unstable();
        picked
    }

    fn best_split(
        &mut self,
        order: &[Vec<u32>],
        lo: usize,
        hi: usize,
        sum: f64,
        sum_sq: f64,
        node_sse: f64,
    ) -> Option<Split> {
        let count = hi - lo;
        let min_leaf = self.settings.min_samples_leaf;
        // A split only wins on gain if it clears a round-off floor relative
        // to the node impurity; otherwise clamp noise creates exact 0.0 ties
        // whose resolution would depend on column order. Flat nodes (every
        // candidate at zero gain, e.g. XOR targets) fall back to the first
        // valid split point so boosting can still make progress.
        let floor = node_sse * 1e-12;
        let mut best: Option<Split> = None;
        let mut fallback: Option<Split> = None;
        for f in self.candidate_features() {
            let seg = &order[f][lo..hi];
            let mut left_sum = 0.0;
            let mut left_sq = 0.0;
            for i in 0..count - 1 {
                let r = seg[i] as usize;
                let v = self.y[r];
                left_sum += v;
                left_sq += v * v;
                let x_here = self.x[r * self.n_features + f];
                let x_next = self.x[seg[i + 1] as usize * self.n_features + f];
                if x_here == x_next {
                    continue;
                }
                let n_left = i + 1;
                let n_right = count - n_left;
                if n_left < min_leaf || n_right < min_leaf {
                    continue;
                }
                let sse_left = (left_sq - left_sum * left_sum / n_left as f64).max(0.0);
                let right_sum = sum - left_sum;
                let right_sq = sum_sq - left_sq;
                let sse_right = (right_sq - right_sum * right_sum / n_right as f64).max(0.0);
                let gain = (node_sse - sse_left - sse_right).max(0.0);
                if fallback.is_none() {
                    fallback = Some(Split {
                        feature: f,
                        threshold: 0.5 * (x_here + x_next),
                        gain: 0.0,
                    });
                }
                if gain > best.as_ref().map_or(floor, |b| b.gain) {
                    best = Some(Split {
                        feature: f,
                        threshold: 0.5 * (x_here + x_next),
                        gain,
                    });
                }
            }
        }
        best.or(fallback)
    }

    fn split_node(
        &mut self,
        order: &mut [Vec<u32>],
        lo: usize,
        hi: usize,
        depth: usize,
        split: Split,
    ) -> usize {
        let nf = self.n_features;
        let mut n_left = 0usize;
        for &r in &order[split.feature][lo..hi] {
            let left = self.x[r as usize * nf + split.feature] <= split.threshold;
            self.goes_left[r as usize] = left;
            n_left += usize::from(left);
        }
        let goes_left = &self.goes_left;
        let scratch = &mut self.scratch;
        let mut partition = |seg: &mut [u32]| {
            let (mut l, mut r) = (0usize, n_left);
            for &row in seg.iter() {
                if goes_left[row as usize] {
                    scratch[l] = row;
                    l += 1;
                } else {
                    scratch[r] = row;
                    r += 1;
                }
            }
            seg.copy_from_slice(&scratch[..seg.len()]);
        };
        for feature_order in order.iter_mut() {
            partition(&mut feature_order[lo..hi]);
        }
        partition(&mut self.canon[lo..hi]);
        self.importance[split.feature] += split.gain;

        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 }); // placeholder
        let left = self.build(order, lo, lo + n_left, depth + 1);
        let right = self.build(order, lo + n_left, hi, depth + 1);
        self.nodes[idx] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        idx
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}
