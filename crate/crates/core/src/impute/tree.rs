use crate::error::{Error, Result};
use crate::math::{Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features drawn per split; `None` means ⌈√p⌉.
    pub mtry: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_leaf: 5,
            mtry: None,
        }
    }
}

impl TreeParams {
    pub(crate) fn resolved_mtry(&self, features: usize) -> usize {
        let m = self
            .mtry
            .unwrap_or_else(|| (features as f64).sqrt().ceil() as usize);
        m.clamp(1, features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
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

/// CART regression tree grown by greedy variance reduction. A sample goes
/// left when `x[feature] <= threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    n_features: usize,
    depth: usize,
}

#[derive(Debug, Clone, Copy)]
struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    params: TreeParams,
    mtry: usize,
    nodes: Vec<Node>,
    depth: usize,
}

impl RegressionTree {
    pub fn fit(x: &Matrix, y: &[f64], params: &TreeParams, rng: &mut Rng) -> Result<Self> {
        let idx: Vec<usize> = (0..x.rows()).collect();
        Self::fit_rows(x, y, idx, params, rng)
    }

    /// Fits on the given row indices (repeats allowed, as in a bootstrap).
    pub(crate) fn fit_rows(
        x: &Matrix,
        y: &[f64],
        mut idx: Vec<usize>,
        params: &TreeParams,
        rng: &mut Rng,
    ) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} targets",
                x.rows(),
                y.len()
            )));
        }
        if idx.is_empty() {
            return Err(Error::Argument("cannot fit a tree on zero rows".into()));
        }
        if params.min_samples_leaf == 0 {
            return Err(Error::Argument(
                "min_samples_leaf must be at least 1".into(),
            ));
        }
        let mut b = Builder {
            x,
            y,
            params: *params,
            mtry: params.resolved_mtry(x.cols()),
            nodes: Vec::new(),
            depth: 0,
        };
        b.grow(&mut idx, 0, rng);
        Ok(RegressionTree {
            nodes: b.nodes,
            n_features: x.cols(),
            depth: b.depth,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Feature and threshold of the root split, if the root is not a leaf.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes.first()? {
            Node::Split {
                feature, threshold, ..
            } => Some((*feature, *threshold)),
            Node::Leaf { .. } => None,
        }
    }

    pub fn predict_one(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.n_features {
            return Err(Error::Shape(format!(
                "tree expects {} features, got {}",
                self.n_features,
                x.cols()
            )));
        }
        Ok((0..x.rows()).map(|r| self.predict_one(x.row(r))).collect())
    }
}

impl Builder<'_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut Rng) -> usize {
        self.depth = self.depth.max(depth);
        let at = self.nodes.len();
        let n = idx.len();
        let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / n as f64;
        self.nodes.push(Node::Leaf { value: mean });

        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        let first = self.y[idx[0]];
        let constant = idx.iter().all(|&i| self.y[i] == first);
        if !depth_ok || constant || n < 2 * self.params.min_samples_leaf {
            return at;
        }
        let Some(split) = self.best_split(idx, rng) else {
            return at;
        };

        let (x, f, t) = (self.x, split.feature, split.threshold);
        let mut k = 0;
        for j in 0..n {
            if x.get(idx[j], f) <= t {
                idx.swap(j, k);
                k += 1;
            }
        }
        let (l, r) = idx.split_at_mut(k);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[at] = Node::Split {
            feature: f,
            threshold: t,
            left,
            right,
        };
        at
    }

    /// Exhaustive search over the sampled features. Strict improvement keeps
    /// the lowest feature index, then the lowest threshold, on ties.
    fn best_split(&self, idx: &[usize], rng: &mut Rng) -> Option<Split> {
        let p = self.x.cols();
        let features: Vec<usize> = if self.mtry >= p {
            (0..p).collect()
        } else {
            rng.sample_indices(p, self.mtry)
        };
        let n = idx.len();
        let leaf = self.params.min_samples_leaf;
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let base = total * total / n as f64;
        let sse: f64 = {
            let m = total / n as f64;
            idx.iter().map(|&i| (self.y[i] - m).powi(2)).sum()
        };
        let min_gain = sse * 1e-12;

        let mut best: Option<Split> = None;
        let mut order = idx.to_vec();
        for &f in &features {
            order.sort_by(|&a, &b| {
                self.x
                    .get(a, f)
                    .total_cmp(&self.x.get(b, f))
                    .then(a.cmp(&b))
            });
            let mut left_sum = 0.0;
            for k in 1..n {
                left_sum += self.y[order[k - 1]];
                if k < leaf || n - k < leaf {
                    continue;
                }
                let lo = self.x.get(order[k - 1], f);
                let hi = self.x.get(order[k], f);
                if lo >= hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain =
                    left_sum * left_sum / k as f64 + right_sum * right_sum / (n - k) as f64 - base;
                if gain > min_gain && best.is_none_or(|b| gain > b.gain) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(Split {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }
}
