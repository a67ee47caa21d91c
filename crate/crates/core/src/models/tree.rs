// SPDX-License-Identifier: Apache-2.0

//! CART regression tree grown greedily on squared-error reduction.

use serde::{Deserialize, Serialize};

use super::scaler::check_matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        n_samples: usize,
    },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub params: TreeParams,
    pub dim: usize,
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    params: TreeParams,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let slot = self.nodes.len();
        let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(Node::Leaf {
            value: mean,
            n_samples: idx.len(),
        });
        if self.params.max_depth.is_some_and(|d| depth >= d) {
            return slot;
        }
        let Some(best) = self.best_split(&idx, mean) else {
            return slot;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][best.feature] <= best.threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[slot] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        slot
    }

    fn best_split(&self, idx: &[usize], mean: f64) -> Option<BestSplit> {
        let n = idx.len();
        let min_leaf = self.params.min_samples_leaf.max(1);
        if n < 2 * min_leaf {
            return None;
        }
        // Centred targets keep the gain formula well conditioned.
        let sse: f64 = idx.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        if sse <= 0.0 {
            return None;
        }
        let tol = 1e-12 * sse.max(1.0);
        let mut best: Option<BestSplit> = None;
        let mut order = idx.to_vec();
        for f in 0..self.x[idx[0]].len() {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let total: f64 = order.iter().map(|&i| self.y[i] - mean).sum();
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.y[order[k]] - mean;
                let (a, b) = (self.x[order[k]][f], self.x[order[k + 1]][f]);
                let n_left = k + 1;
                if a == b || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / n_left as f64 + right_sum * right_sum / (n - n_left) as f64
                    - total * total / n as f64;
                if gain > tol && best.as_ref().is_none_or(|b| gain > b.gain + tol) {
                    best = Some(BestSplit {
                        feature: f,
                        threshold: a + (b - a) / 2.0,
                        gain,
                    });
                }
            }
        }
        best
    }
}

pub fn dt_train(x: &[Vec<f64>], y: &[f64], params: TreeParams) -> Result<TreeModel> {
    let dim = check_matrix(x)?;
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let mut b = Builder {
        x,
        y,
        params,
        nodes: Vec::new(),
    };
    b.grow((0..x.len()).collect(), 0);
    Ok(TreeModel {
        params,
        dim,
        nodes: b.nodes,
    })
}

impl TreeModel {
    pub fn predict_one(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value, .. } => return Ok(*value),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        x.iter().map(|r| self.predict_one(r)).collect()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}
