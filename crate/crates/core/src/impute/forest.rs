use crate::error::{Error, Result};
use crate::math::{Matrix, Rng};

use super::tree::{RegressionTree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    /// Draw each tree's rows with replacement.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            tree: TreeParams::default(),
            bootstrap: true,
        }
    }
}

/// Bagged regression trees; prediction is the mean over trees.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    trees: Vec<RegressionTree>,
    n_features: usize,
}

impl RandomForest {
    /// Each tree gets its own generator seeded from `rng` in tree order, so
    /// the forest depends only on the incoming seed.
    pub fn fit(x: &Matrix, y: &[f64], params: &ForestParams, rng: &mut Rng) -> Result<Self> {
        if params.n_trees == 0 {
            return Err(Error::Argument("a forest needs at least one tree".into()));
        }
        if x.rows() == 0 {
            return Err(Error::Argument("cannot fit a forest on zero rows".into()));
        }
        let seeds: Vec<u64> = (0..params.n_trees).map(|_| rng.next_u64()).collect();
        let n = x.rows();
        let trees = seeds
            .into_iter()
            .map(|seed| {
                let mut tree_rng = Rng::new(seed);
                let idx = if params.bootstrap {
                    (0..n).map(|_| tree_rng.index(n)).collect()
                } else {
                    (0..n).collect()
                };
                RegressionTree::fit_rows(x, y, idx, &params.tree, &mut tree_rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RandomForest {
            trees,
            n_features: x.cols(),
        })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.n_features {
            return Err(Error::Shape(format!(
                "forest expects {} features, got {}",
                self.n_features,
                x.cols()
            )));
        }
        let k = self.trees.len() as f64;
        Ok((0..x.rows())
            .map(|r| {
                let row = x.row(r);
                self.trees.iter().map(|t| t.predict_one(row)).sum::<f64>() / k
            })
            .collect())
    }
}
