use std::cmp::Ordering;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{argmax_lowest, check_input, Classifier, Dataset};
use crate::error::{Error, Result};
use crate::rng::DetRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartParams {
    /// `None` grows the tree until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for CartParams {
    fn default() -> Self {
        CartParams { max_depth: None, min_samples_split: 2 }
    }
}

impl CartParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_split < 2 {
            return Err(Error::InvalidParameter(format!(
                "min_samples_split must be at least 2, got {}",
                self.min_samples_split
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Split {
        feature_index: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        class_id: usize,
        class_histogram: Vec<usize>,
    },
}

impl TreeNode {
    /// Route `x` to a leaf; values equal to a threshold go left.
    pub fn leaf_class(&self, x: &[f64]) -> usize {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { class_id, .. } => return *class_id,
                TreeNode::Split { feature_index, threshold, left, right } => {
                    node = if x[*feature_index] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartModel {
    pub params: CartParams,
    pub feature_count: usize,
    pub class_count: usize,
    pub root: TreeNode,
}

impl Classifier for CartModel {
    fn feature_count(&self) -> usize {
        self.feature_count
    }

    fn class_count(&self) -> usize {
        self.class_count
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        check_input(x, self.feature_count)?;
        Ok(self.root.leaf_class(x))
    }
}

pub fn train_cart(data: &Dataset, params: &CartParams) -> Result<CartModel> {
    params.validate()?;
    let idx: Vec<usize> = (0..data.len()).collect();
    let root = grow_tree(data, idx, params, None);
    Ok(CartModel {
        params: params.clone(),
        feature_count: data.feature_count(),
        class_count: data.class_count(),
        root,
    })
}

/// Random feature subsetting for forest trees.
pub(crate) struct FeatureSampler<'a> {
    pub rng: &'a mut DetRng,
    pub mtry: usize,
}

/// Weighted-Gini score `S_L/n_L + S_R/n_R` (with `S = Σ count²`) kept as an
/// exact fraction; larger is purer.
#[derive(Clone, Copy)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn of(sl: u128, nl: u128, sr: u128, nr: u128) -> Self {
        Score { num: sl * nr + sr * nl, den: nl * nr }
    }

    fn cmp(&self, other: &Score) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

struct Best {
    score: Score,
    feature: usize,
    threshold: f64,
}

fn leaf(hist: Vec<usize>) -> TreeNode {
    TreeNode::Leaf { class_id: argmax_lowest(&hist), class_histogram: hist }
}

/// Threshold between two consecutive distinct sorted values `a < b`, chosen so
/// that `a <= t < b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}

pub(crate) fn grow_tree(
    data: &Dataset,
    idx: Vec<usize>,
    params: &CartParams,
    mut sampler: Option<FeatureSampler<'_>>,
) -> TreeNode {
    grow(data, idx, params, 0, &mut sampler)
}

fn grow(
    data: &Dataset,
    idx: Vec<usize>,
    params: &CartParams,
    depth: usize,
    sampler: &mut Option<FeatureSampler<'_>>,
) -> TreeNode {
    let hist = data.class_histogram(&idx);
    let pure = hist.iter().filter(|&&c| c > 0).count() <= 1;
    let depth_hit = params.max_depth.is_some_and(|d| depth >= d);
    if pure || depth_hit || idx.len() < params.min_samples_split {
        return leaf(hist);
    }
    let features: Vec<usize> = match sampler {
        Some(s) if s.mtry < data.feature_count() => {
            let mut f = index::sample(s.rng, data.feature_count(), s.mtry).into_vec();
            f.sort_unstable();
            f
        }
        _ => (0..data.feature_count()).collect(),
    };
    let Some(best) = best_split(data, &idx, &hist, &features) else {
        return leaf(hist);
    };
    let (left, right): (Vec<usize>, Vec<usize>) = idx
        .into_iter()
        .partition(|&i| data.value(i, best.feature) <= best.threshold);
    TreeNode::Split {
        feature_index: best.feature,
        threshold: best.threshold,
        left: Box::new(grow(data, left, params, depth + 1, sampler)),
        right: Box::new(grow(data, right, params, depth + 1, sampler)),
    }
}

/// Best split over `features` (ascending), keeping the first of equal scores so
/// ties go to the lowest feature and then the lowest threshold. A split is
/// taken whenever any threshold exists.
fn best_split(data: &Dataset, idx: &[usize], hist: &[usize], features: &[usize]) -> Option<Best> {
    let n = idx.len();
    let mut best: Option<Best> = None;
    let mut order: Vec<usize> = idx.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| data.value(a, f).total_cmp(&data.value(b, f)));
        let mut left = vec![0usize; hist.len()];
        let mut sl: u128 = 0;
        let mut sr: u128 = hist.iter().map(|&c| (c as u128).pow(2)).sum();
        for k in 0..n - 1 {
            let c = data.label(order[k]);
            let r = (hist[c] - left[c]) as u128;
            // Moving one sample of class c from right to left.
            sr = sr + 1 - 2 * r;
            sl = sl + 2 * left[c] as u128 + 1;
            left[c] += 1;
            let (a, b) = (data.value(order[k], f), data.value(order[k + 1], f));
            if a == b {
                continue;
            }
            let nl = (k + 1) as u128;
            let score = Score::of(sl, nl, sr, n as u128 - nl);
            if best.as_ref().is_none_or(|b| score.cmp(&b.score) == Ordering::Greater) {
                best = Some(Best { score, feature: f, threshold: midpoint(a, b) });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_d(xs: &[f64], ys: &[usize], k: usize) -> Dataset {
        Dataset::new(xs.to_vec(), 1, ys.to_vec(), k).unwrap()
    }

    #[test]
    fn four_point_example() {
        let d = one_d(&[-1.0, -2.0, 1.0, 2.0], &[0, 0, 1, 1], 2);
        let m = train_cart(&d, &CartParams::default()).unwrap();
        match &m.root {
            TreeNode::Split { feature_index, threshold, .. } => {
                assert_eq!(*feature_index, 0);
                assert_eq!(*threshold, 0.0);
            }
            other => panic!("expected a split, got {other:?}"),
        }
        for i in 0..4 {
            assert_eq!(m.predict(d.row(i)).unwrap(), d.label(i));
        }
        assert_eq!(m.predict(&[3.0]).unwrap(), 1);
        assert_eq!(m.predict(&[0.0]).unwrap(), 0);
        assert!(m.predict(&[f64::NAN]).is_err());
        assert!(m.predict(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn single_class_is_one_leaf() {
        let d = one_d(&[1.0, 2.0, 3.0], &[2, 2, 2], 3);
        let m = train_cart(&d, &CartParams::default()).unwrap();
        assert_eq!(m.root, TreeNode::Leaf { class_id: 2, class_histogram: vec![0, 0, 3] });
        assert_eq!(m.predict(&[-100.0]).unwrap(), 2);
    }

    #[test]
    fn leaf_majority_tie_goes_low() {
        // Identical feature values cannot be split.
        let d = one_d(&[1.0, 1.0, 1.0, 1.0], &[2, 1, 2, 1], 3);
        let m = train_cart(&d, &CartParams::default()).unwrap();
        assert_eq!(m.predict(&[1.0]).unwrap(), 1);
    }

    #[test]
    fn equal_gini_prefers_lowest_feature_and_threshold() {
        // Both features separate perfectly; feature 0 wins.
        let d = Dataset::new(vec![0.0, 5.0, 1.0, 6.0, 2.0, 7.0, 3.0, 8.0], 2, vec![0, 0, 1, 1], 2).unwrap();
        let m = train_cart(&d, &CartParams::default()).unwrap();
        assert!(matches!(m.root, TreeNode::Split { feature_index: 0, threshold, .. } if threshold == 1.5));
        // Labels A B A: thresholds 0.5 and 1.5 score equally; the lower wins.
        let d = one_d(&[0.0, 1.0, 2.0], &[0, 1, 0], 2);
        let m = train_cart(&d, &CartParams::default()).unwrap();
        assert!(matches!(m.root, TreeNode::Split { threshold, .. } if threshold == 0.5));
    }

    #[test]
    fn depth_and_min_samples_limits() {
        let xs: Vec<f64> = (0..8).map(f64::from).collect();
        let ys = [0, 1, 0, 1, 0, 1, 0, 1];
        let d = one_d(&xs, &ys, 2);
        let m = train_cart(&d, &CartParams { max_depth: Some(1), min_samples_split: 2 }).unwrap();
        assert_eq!(m.root.depth(), 1);
        let m = train_cart(&d, &CartParams { max_depth: None, min_samples_split: 9 }).unwrap();
        assert_eq!(m.root.depth(), 0);
        assert!(train_cart(&d, &CartParams { max_depth: None, min_samples_split: 1 }).is_err());
    }

    #[test]
    fn midpoint_stays_below_upper() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let t = midpoint(a, b);
        assert!(a <= t && t < b);
        assert_eq!(midpoint(-1.0, 1.0), 0.0);
    }

    fn check_histograms(node: &TreeNode) -> usize {
        match node {
            TreeNode::Leaf { class_histogram, class_id } => {
                let n: usize = class_histogram.iter().sum();
                assert!(n > 0);
                assert_eq!(*class_id, argmax_lowest(class_histogram));
                n
            }
            TreeNode::Split { left, right, .. } => check_histograms(left) + check_histograms(right),
        }
    }

    proptest! {
        #[test]
        fn distinct_vectors_fit_perfectly(
            rows in prop::collection::vec((prop::collection::vec(-4i32..4, 3), 0usize..3), 1..40)
        ) {
            let mut seen = std::collections::BTreeSet::new();
            let rows: Vec<_> = rows.into_iter().filter(|(x, _)| seen.insert(x.clone())).collect();
            let feats: Vec<Vec<f64>> = rows.iter().map(|(x, _)| x.iter().map(|&v| v as f64).collect()).collect();
            let labels: Vec<usize> = rows.iter().map(|r| r.1).collect();
            let d = Dataset::from_rows(&feats, labels, 3).unwrap();
            let m = train_cart(&d, &CartParams::default()).unwrap();
            prop_assert_eq!(check_histograms(&m.root), d.len());
            for i in 0..d.len() {
                prop_assert_eq!(m.predict(d.row(i)).unwrap(), d.label(i));
            }
        }

        #[test]
        fn label_permutation_is_equivariant(
            rows in prop::collection::vec((prop::collection::vec(-4i32..4, 2), 0usize..3), 1..30),
            probe in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 10),
        ) {
            // Distinct vectors give pure leaves, so no majority ties arise.
            let mut seen = std::collections::BTreeSet::new();
            let rows: Vec<_> = rows.into_iter().filter(|(x, _)| seen.insert(x.clone())).collect();
            let feats: Vec<Vec<f64>> = rows.iter().map(|(x, _)| x.iter().map(|&v| v as f64).collect()).collect();
            let perm = [2usize, 0, 1];
            let a = Dataset::from_rows(&feats, rows.iter().map(|r| r.1).collect(), 3).unwrap();
            let b = Dataset::from_rows(&feats, rows.iter().map(|r| perm[r.1]).collect(), 3).unwrap();
            let ma = train_cart(&a, &CartParams::default()).unwrap();
            let mb = train_cart(&b, &CartParams::default()).unwrap();
            for x in &probe {
                prop_assert_eq!(perm[ma.predict(x).unwrap()], mb.predict(x).unwrap());
            }
        }
    }
}
