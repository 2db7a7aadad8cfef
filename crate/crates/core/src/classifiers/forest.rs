use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cart::{grow_tree, CartParams, FeatureSampler, TreeNode};
use super::{argmax_lowest, check_input, Classifier, Dataset};
use crate::error::{Error, Result};
use crate::rng::{mix, rng_from};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfParams {
    pub tree_count: usize,
    /// Features tried per split; `None` means `floor(sqrt(F))`.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for RfParams {
    fn default() -> Self {
        RfParams {
            tree_count: 100,
            mtry: None,
            bootstrap: true,
            max_depth: None,
            min_samples_split: 2,
            seed: 0,
        }
    }
}

impl RfParams {
    pub fn resolved_mtry(&self, feature_count: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| ((feature_count as f64).sqrt().floor() as usize).max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub tree_count: usize,
    pub mtry: usize,
    pub bootstrap: bool,
    pub seed: u64,
    pub tree_seeds: Vec<u64>,
    pub feature_count: usize,
    pub class_count: usize,
    pub trees: Vec<TreeNode>,
}

impl ForestModel {
    /// Majority vote over tree predictions; ties go to the lowest class id.
    pub fn vote(&self, x: &[f64]) -> usize {
        let mut votes = vec![0usize; self.class_count];
        for t in &self.trees {
            votes[t.leaf_class(x)] += 1;
        }
        argmax_lowest(&votes)
    }
}

impl Classifier for ForestModel {
    fn feature_count(&self) -> usize {
        self.feature_count
    }

    fn class_count(&self) -> usize {
        self.class_count
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        check_input(x, self.feature_count)?;
        Ok(self.vote(x))
    }
}

pub fn train_rf(data: &Dataset, params: &RfParams) -> Result<ForestModel> {
    let f = data.feature_count();
    let mtry = params.resolved_mtry(f);
    if params.tree_count == 0 {
        return Err(Error::InvalidParameter("tree_count must be at least 1".into()));
    }
    if mtry == 0 || mtry > f {
        return Err(Error::InvalidParameter(format!("mtry must lie in [1, {f}], got {mtry}")));
    }
    let cart = CartParams {
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
    };
    cart.validate()?;
    let tree_seeds: Vec<u64> = (0..params.tree_count as u64).map(|t| mix(params.seed, t)).collect();
    let n = data.len();
    let trees = tree_seeds
        .par_iter()
        .map(|&s| {
            let mut rng = rng_from(s);
            let idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree(data, idx, &cart, Some(FeatureSampler { rng: &mut rng, mtry }))
        })
        .collect();
    Ok(ForestModel {
        tree_count: params.tree_count,
        mtry,
        bootstrap: params.bootstrap,
        seed: params.seed,
        tree_seeds,
        feature_count: f,
        class_count: data.class_count(),
        trees,
    })
}
