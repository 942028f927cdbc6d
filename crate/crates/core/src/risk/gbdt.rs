//! Gradient-boosted regression trees on the logistic loss.
//!
//! Each round fits a depth-limited tree to first/second-order statistics of
//! the loss, growing level by level with exact greedy splits. Candidate
//! thresholds are midpoints between consecutive distinct feature values.
//! A split is kept only when its loss reduction exceeds `gamma`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Hyperparams;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Direction for missing (NaN) values.
        default_left: bool,
    },
    Leaf {
        weight: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { weight } => return *weight,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    default_left,
                } => {
                    let v = x[*feature];
                    let go_left = if v.is_nan() { *default_left } else { v < *threshold };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Features used by any split.
    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub format_version: u32,
    /// Log-odds intercept.
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    /// SHA-256 over the ordered column names.
    pub column_fingerprint: String,
    pub trees: Vec<Tree>,
}

pub fn column_fingerprint(columns: &[String]) -> String {
    let mut h = Sha256::new();
    for c in columns {
        h.update(c.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl GbdtModel {
    /// Raw margin: `base_score + learning_rate * sum of leaf values`.
    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::invalid(format!(
                "feature vector has width {}, model expects {}",
                x.len(),
                self.n_features
            )));
        }
        let sum: f64 = self.trees.iter().map(|t| t.leaf_value(x)).sum();
        Ok(self.base_score + self.learning_rate * sum)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.margin(x).map(sigmoid)
    }

    pub fn predict_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.predict(r)).collect()
    }

    /// Scores `dataset`, checking its columns match the training columns.
    pub fn predict_dataset(&self, dataset: &LabeledDataset) -> Result<Vec<f64>> {
        if column_fingerprint(&dataset.columns) != self.column_fingerprint {
            return Err(Error::invalid("dataset columns differ from the model's training columns"));
        }
        self.predict_batch(&dataset.rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: GbdtModel = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model format version {}",
                m.format_version
            )));
        }
        Ok(m)
    }
}

#[derive(Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
}

impl Stats {
    fn add(&mut self, g: f64, h: f64) {
        self.g += g;
        self.h += h;
    }

    fn score(self, lambda: f64) -> f64 {
        self.g * self.g / (self.h + lambda)
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    left: Stats,
}

struct Frontier {
    node: usize,
    total: Stats,
    best: Option<Candidate>,
    // scan state, reset per feature
    running: Stats,
    last: f64,
    seen: bool,
}

/// Trains on `dataset` with logistic loss. Positive rows get gradient and
/// hessian weight `scale_pos_weight`. The intercept is the weighted prior
/// log-odds of the labels.
pub fn train_gbdt(dataset: &LabeledDataset, hyper: &Hyperparams) -> Result<GbdtModel> {
    hyper.validate()?;
    let n = dataset.len();
    let d = dataset.columns.len();
    let pos = dataset.positives();
    if pos == 0 || pos == n {
        return Err(Error::invalid("training labels must contain both classes"));
    }
    for (i, row) in dataset.rows.iter().enumerate() {
        if row.len() != d {
            return Err(Error::invalid(format!("row {i} has width {}, expected {d}", row.len())));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value in row {i}, column `{}`",
                dataset.columns[j]
            )));
        }
    }

    let x = &dataset.rows;
    let y: Vec<f64> = dataset.labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let w: Vec<f64> = dataset
        .labels
        .iter()
        .map(|&l| if l { hyper.scale_pos_weight } else { 1.0 })
        .collect();
    let weighted_pos = hyper.scale_pos_weight * pos as f64;
    let prior = weighted_pos / (weighted_pos + (n - pos) as f64);
    let base_score = (prior / (1.0 - prior)).ln();

    let sorted: Vec<Vec<usize>> = (0..d)
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
            idx
        })
        .collect();

    let mut margin = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(hyper.n_estimators);
    let lambda = hyper.l2_leaf_penalty;

    for _ in 0..hyper.n_estimators {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            grad[i] = w[i] * (p - y[i]);
            hess[i] = w[i] * p * (1.0 - p);
        }
        let (tree, leaf_of) = grow_tree(x, &sorted, &grad, &hess, hyper.max_depth, lambda, hyper.gamma);
        for i in 0..n {
            if let Node::Leaf { weight } = tree.nodes[leaf_of[i]] {
                margin[i] += hyper.learning_rate * weight;
            }
        }
        trees.push(tree);
    }

    Ok(GbdtModel {
        format_version: MODEL_FORMAT_VERSION,
        base_score,
        learning_rate: hyper.learning_rate,
        n_features: d,
        column_fingerprint: column_fingerprint(&dataset.columns),
        trees,
    })
}

/// Grows one tree; returns it with the leaf index of every training row.
fn grow_tree(
    x: &[Vec<f64>],
    sorted: &[Vec<usize>],
    grad: &[f64],
    hess: &[f64],
    max_depth: usize,
    lambda: f64,
    gamma: f64,
) -> (Tree, Vec<usize>) {
    let n = x.len();
    let mut node_of = vec![0usize; n];
    let mut root = Stats::default();
    for i in 0..n {
        root.add(grad[i], hess[i]);
    }
    // placeholder leaves, finalized below
    let mut nodes = vec![Node::Leaf { weight: 0.0 }];
    let mut totals = vec![root];
    let mut frontier: Vec<Frontier> = vec![Frontier {
        node: 0,
        total: root,
        best: None,
        running: Stats::default(),
        last: 0.0,
        seen: false,
    }];
    // node index -> frontier slot
    let mut slot_of: Vec<Option<usize>> = vec![Some(0)];

    for _ in 0..max_depth {
        if frontier.is_empty() {
            break;
        }
        for (f, order) in sorted.iter().enumerate() {
            for s in frontier.iter_mut() {
                s.running = Stats::default();
                s.seen = false;
            }
            for &r in order {
                let Some(k) = slot_of[node_of[r]] else { continue };
                let s = &mut frontier[k];
                let v = x[r][f];
                if s.seen && v > s.last {
                    let left = s.running;
                    let right = Stats {
                        g: s.total.g - left.g,
                        h: s.total.h - left.h,
                    };
                    let gain = 0.5 * (left.score(lambda) + right.score(lambda) - s.total.score(lambda));
                    if gain > gamma && s.best.is_none_or(|b| gain > b.gain) {
                        let mut threshold = 0.5 * (s.last + v);
                        if threshold <= s.last {
                            threshold = v;
                        }
                        s.best = Some(Candidate {
                            gain,
                            feature: f,
                            threshold,
                            left,
                        });
                    }
                }
                s.running.add(grad[r], hess[r]);
                s.last = v;
                s.seen = true;
            }
        }

        let mut next = Vec::new();
        let mut split_at: Vec<Option<(usize, f64, usize, usize)>> = vec![None; nodes.len()];
        for s in &frontier {
            slot_of[s.node] = None;
            let Some(best) = s.best else { continue };
            let right = Stats {
                g: s.total.g - best.left.g,
                h: s.total.h - best.left.h,
            };
            let (l, r) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node::Leaf { weight: 0.0 });
            nodes.push(Node::Leaf { weight: 0.0 });
            totals.push(best.left);
            totals.push(right);
            nodes[s.node] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                left: l,
                right: r,
                default_left: best.left.h >= right.h,
            };
            split_at[s.node] = Some((best.feature, best.threshold, l, r));
            for (child, st) in [(l, best.left), (r, right)] {
                next.push(Frontier {
                    node: child,
                    total: st,
                    best: None,
                    running: Stats::default(),
                    last: 0.0,
                    seen: false,
                });
            }
        }
        slot_of.resize(nodes.len(), None);
        for (k, s) in next.iter().enumerate() {
            slot_of[s.node] = Some(k);
        }
        for r in 0..n {
            if let Some(Some((f, t, l, rr))) = split_at.get(node_of[r]) {
                node_of[r] = if x[r][*f] < *t { *l } else { *rr };
            }
        }
        frontier = next;
    }

    for (i, node) in nodes.iter_mut().enumerate() {
        if let Node::Leaf { weight } = node {
            *weight = -totals[i].g / (totals[i].h + lambda);
        }
    }
    (Tree { nodes }, node_of)
}
