//! Gradient-boosted regression trees for squared loss.
//!
//! Second-order boosting with unit hessians: leaf weight `-G/(H+lambda)`,
//! split gain `0.5*(GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l))`, exact greedy
//! search over midpoints of consecutive distinct feature values. No row or
//! column subsampling unless explicitly requested.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub learning_rate: f64,
    pub n_trees: usize,
    pub max_depth: usize,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum raw gain a split must exceed.
    pub min_split_gain: f64,
    pub min_samples_leaf: usize,
    /// Optional per-tree row subsampling fraction in (0,1].
    pub subsample: Option<f64>,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            learning_rate: 0.02,
            n_trees: 1000,
            max_depth: 3,
            lambda: 1.0,
            min_split_gain: 0.0,
            min_samples_leaf: 2,
            subsample: None,
            seed: 0,
        }
    }
}

impl GbtParams {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::validation("learning rate must be in (0, 1]"));
        }
        if self.n_trees < 1 {
            return Err(Error::validation("tree count must be >= 1"));
        }
        if self.lambda < 0.0 || self.min_split_gain < 0.0 {
            return Err(Error::validation("penalties must be >= 0"));
        }
        if let Some(f) = self.subsample {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::validation("subsample fraction must be in (0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
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
    /// Raw tree output for a row; `< threshold` goes left, ties go right.
    pub fn value(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { weight } => return *weight,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    at = if row[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GbtModel {
    pub base_score: f64,
    pub trees: Vec<Tree>,
    /// Total split gain accumulated per feature.
    pub feature_gain: Vec<f64>,
    pub params: GbtParams,
}

struct SplitCandidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    left_rows: Vec<usize>,
    right_rows: Vec<usize>,
}

fn best_split(
    x: &[Vec<f64>],
    grad: &[f64],
    rows: &[usize],
    params: &GbtParams,
) -> Option<SplitCandidate> {
    let n_features = x[0].len();
    let g_total: f64 = rows.iter().map(|&i| grad[i]).sum();
    let h_total = rows.len() as f64;
    let parent_score = g_total * g_total / (h_total + params.lambda);

    let mut best: Option<SplitCandidate> = None;
    for feature in 0..n_features {
        let mut order: Vec<usize> = rows.to_vec();
        order.sort_by(|&a, &b| {
            x[a][feature]
                .partial_cmp(&x[b][feature])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut g_left = 0.0;
        for k in 0..order.len() - 1 {
            g_left += grad[order[k]];
            let v_here = x[order[k]][feature];
            let v_next = x[order[k + 1]][feature];
            if v_here == v_next {
                continue;
            }
            let left_n = k + 1;
            let right_n = order.len() - left_n;
            if left_n < params.min_samples_leaf || right_n < params.min_samples_leaf {
                continue;
            }
            let g_right = g_total - g_left;
            let gain = 0.5
                * (g_left * g_left / (left_n as f64 + params.lambda)
                    + g_right * g_right / (right_n as f64 + params.lambda)
                    - parent_score);
            if gain - params.min_split_gain <= 0.0 {
                continue;
            }
            let threshold = 0.5 * (v_here + v_next);
            let better = match &best {
                None => true,
                Some(b) => {
                    gain > b.gain
                        || (gain == b.gain
                            && (feature, threshold) < (b.feature, b.threshold))
                }
            };
            if better {
                best = Some(SplitCandidate {
                    gain,
                    feature,
                    threshold,
                    left_rows: order[..left_n].to_vec(),
                    right_rows: order[left_n..].to_vec(),
                });
            }
        }
    }
    best
}

fn grow(
    x: &[Vec<f64>],
    grad: &[f64],
    rows: Vec<usize>,
    depth: usize,
    params: &GbtParams,
    nodes: &mut Vec<Node>,
    feature_gain: &mut [f64],
) -> usize {
    let g: f64 = rows.iter().map(|&i| grad[i]).sum();
    let h = rows.len() as f64;
    let leaf = |nodes: &mut Vec<Node>| {
        nodes.push(Node::Leaf {
            weight: -g / (h + params.lambda),
        });
        nodes.len() - 1
    };
    if depth == 0 || rows.len() < 2 * params.min_samples_leaf {
        return leaf(nodes);
    }
    match best_split(x, grad, &rows, params) {
        None => leaf(nodes),
        Some(split) => {
            feature_gain[split.feature] += split.gain;
            let at = nodes.len();
            nodes.push(Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                gain: split.gain,
                left: 0,
                right: 0,
            });
            let left = grow(x, grad, split.left_rows, depth - 1, params, nodes, feature_gain);
            let right = grow(x, grad, split.right_rows, depth - 1, params, nodes, feature_gain);
            if let Node::Split { left: l, right: r, .. } = &mut nodes[at] {
                *l = left;
                *r = right;
            }
            at
        }
    }
}

pub fn fit(x: &[Vec<f64>], y: &[f64], params: &GbtParams) -> Result<GbtModel> {
    params.validate()?;
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::validation(format!(
            "boosting needs >= 2 matching rows, got {} rows and {} targets",
            x.len(),
            y.len()
        )));
    }
    let n_features = x[0].len();
    if x.iter().any(|r| r.len() != n_features) {
        return Err(Error::validation("feature rows have inconsistent widths"));
    }

    let base_score = y.iter().sum::<f64>() / y.len() as f64;
    let mut prediction = vec![base_score; y.len()];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut feature_gain = vec![0.0; n_features];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    for _ in 0..params.n_trees {
        let grad: Vec<f64> = prediction.iter().zip(y).map(|(p, t)| p - t).collect();
        let rows: Vec<usize> = match params.subsample {
            None => (0..x.len()).collect(),
            Some(frac) => {
                let take = ((frac * x.len() as f64).ceil() as usize).clamp(1, x.len());
                let mut all: Vec<usize> = (0..x.len()).collect();
                all.shuffle(&mut rng);
                let mut sampled = all[..take].to_vec();
                sampled.sort_unstable();
                sampled
            }
        };
        let mut nodes = Vec::new();
        grow(x, &grad, rows, params.max_depth, params, &mut nodes, &mut feature_gain);
        let tree = Tree { nodes };
        for (p, row) in prediction.iter_mut().zip(x) {
            *p += params.learning_rate * tree.value(row);
        }
        trees.push(tree);
    }

    Ok(GbtModel {
        base_score,
        trees,
        feature_gain,
        params: params.clone(),
    })
}

/// Prediction using only the first `n_trees` trees.
pub fn predict_prefix(model: &GbtModel, row: &[f64], n_trees: usize) -> f64 {
    model.base_score
        + model.params.learning_rate
            * model
                .trees
                .iter()
                .take(n_trees)
                .map(|t| t.value(row))
                .sum::<f64>()
}

pub fn predict(model: &GbtModel, row: &[f64]) -> f64 {
    predict_prefix(model, row, model.trees.len())
}

/// Total split gain attributed to each feature; unsplit features score 0.
pub fn importance(model: &GbtModel) -> Vec<f64> {
    model.feature_gain.clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64 / 99.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| if r[0] > 0.5 { 1.0 } else { 0.0 }).collect();
        (x, y)
    }

    #[test]
    fn single_leaf_predicts_mean_exactly() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        let y = vec![1.0, 2.0, 4.0, 9.0];
        let params = GbtParams {
            n_trees: 1,
            max_depth: 0,
            learning_rate: 1.0,
            lambda: 0.0,
            ..GbtParams::default()
        };
        let model = fit(&x, &y, &params).unwrap();
        let mean = 16.0 / 4.0;
        assert!((predict(&model, &[100.0]) - mean).abs() <= 1e-12);
    }

    #[test]
    fn step_function_split_is_recovered() {
        let (x, y) = step_data();
        let params = GbtParams {
            n_trees: 1,
            max_depth: 1,
            learning_rate: 1.0,
            lambda: 0.0,
            ..GbtParams::default()
        };
        let model = fit(&x, &y, &params).unwrap();
        let max_below = x.iter().map(|r| r[0]).filter(|&v| v <= 0.5).fold(0.0, f64::max);
        let min_above = x
            .iter()
            .map(|r| r[0])
            .filter(|&v| v > 0.5)
            .fold(f64::INFINITY, f64::min);
        match &model.trees[0].nodes[0] {
            Node::Split { threshold, .. } => {
                assert!(
                    *threshold > max_below && *threshold < min_above,
                    "threshold {threshold} outside ({max_below}, {min_above})"
                );
            }
            other => panic!("expected a split at the root, got {other:?}"),
        }
        assert!((predict(&model, &[0.0]) - 0.0).abs() <= 1e-12);
        assert!((predict(&model, &[1.0]) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn step_function_gain_matches_hand_computation() {
        let (x, y) = step_data();
        let params = GbtParams {
            n_trees: 1,
            max_depth: 1,
            learning_rate: 1.0,
            lambda: 0.0,
            ..GbtParams::default()
        };
        let model = fit(&x, &y, &params).unwrap();
        // 50 zeros, 50 ones, base 0.5: G_L = 25, G_R = -25, G = 0
        let expected = 0.5 * (25.0 * 25.0 / 50.0 + 25.0 * 25.0 / 50.0);
        let imp = importance(&model);
        assert!((imp[0] - expected).abs() <= 1e-9, "{imp:?}");
    }

    #[test]
    fn constant_features_fall_back_to_base() {
        let x = vec![vec![3.0, 3.0]; 10];
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let model = fit(&x, &y, &GbtParams { n_trees: 5, ..GbtParams::default() }).unwrap();
        assert!((predict(&model, &[3.0, 3.0]) - 4.5).abs() <= 1e-12);
        assert!(importance(&model).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn exact_threshold_routes_right() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = vec![0.0, 1.0];
        let params = GbtParams {
            n_trees: 1,
            max_depth: 1,
            learning_rate: 1.0,
            lambda: 0.0,
            min_samples_leaf: 1,
            ..GbtParams::default()
        };
        let model = fit(&x, &y, &params).unwrap();
        // threshold is 0.5; a probe exactly at it follows the right branch
        assert!((predict(&model, &[0.5]) - 1.0).abs() <= 1e-12);
        assert!((predict(&model, &[0.4999]) - 0.0).abs() <= 1e-12);
    }

    #[test]
    fn training_rmse_is_non_increasing_over_trees() {
        let x: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![(i % 12) as f64, (i / 12) as f64])
            .collect();
        let y: Vec<f64> = x.iter().map(|r| (r[0] * 0.7).sin() + 0.1 * r[1]).collect();
        let params = GbtParams { n_trees: 200, ..GbtParams::default() };
        let model = fit(&x, &y, &params).unwrap();
        let rmse_at = |k: usize| {
            (x.iter()
                .zip(&y)
                .map(|(r, &t)| (predict_prefix(&model, r, k) - t).powi(2))
                .sum::<f64>()
                / y.len() as f64)
                .sqrt()
        };
        let mut prev = rmse_at(0);
        for k in 1..=200 {
            let cur = rmse_at(k);
            assert!(cur <= prev + 1e-12, "rmse rose at tree {k}: {prev} -> {cur}");
            prev = cur;
        }
    }

    #[test]
    fn lambda_shrinks_leaf_weights() {
        let (x, y) = step_data();
        let mk = |lambda: f64| GbtParams {
            n_trees: 1,
            max_depth: 1,
            learning_rate: 1.0,
            lambda,
            ..GbtParams::default()
        };
        let loose = fit(&x, &y, &mk(0.0)).unwrap();
        let tight = fit(&x, &y, &mk(10.0)).unwrap();
        let leaf_mag = |m: &GbtModel| {
            m.trees[0]
                .nodes
                .iter()
                .filter_map(|n| match n {
                    Node::Leaf { weight } => Some(weight.abs()),
                    _ => None,
                })
                .fold(0.0, f64::max)
        };
        assert!(leaf_mag(&tight) < leaf_mag(&loose));
    }

    #[test]
    fn deterministic_without_subsampling() {
        let (x, y) = step_data();
        let params = GbtParams { n_trees: 20, ..GbtParams::default() };
        let a = fit(&x, &y, &params).unwrap();
        let b = fit(&x, &y, &params).unwrap();
        assert_eq!(a.trees, b.trees);
    }

    #[test]
    fn seeded_subsampling_is_deterministic() {
        let (x, y) = step_data();
        let params = GbtParams {
            n_trees: 10,
            subsample: Some(0.7),
            seed: 5,
            ..GbtParams::default()
        };
        let a = fit(&x, &y, &params).unwrap();
        let b = fit(&x, &y, &params).unwrap();
        assert_eq!(a.trees, b.trees);
    }

    #[test]
    fn invariant_to_order_preserving_feature_transform() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37).sin()]).collect();
        let y: Vec<f64> = (0..40).map(|i| ((i * 7) % 13) as f64).collect();
        // rank transform: strictly monotone in the feature values
        let mut order: Vec<usize> = (0..40).collect();
        order.sort_by(|&a, &b| x[a][0].partial_cmp(&x[b][0]).unwrap());
        let mut rank = vec![0.0; 40];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r as f64;
        }
        let x_rank: Vec<Vec<f64>> = rank.iter().map(|&r| vec![r]).collect();
        let params = GbtParams { n_trees: 50, ..GbtParams::default() };
        let a = fit(&x, &y, &params).unwrap();
        let b = fit(&x_rank, &y, &params).unwrap();
        for i in 0..40 {
            let pa = predict(&a, &x[i]);
            let pb = predict(&b, &x_rank[i]);
            assert!((pa - pb).abs() <= 1e-9, "row {i}: {pa} vs {pb}");
        }
    }
}
