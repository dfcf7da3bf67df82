use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper { n_estimators: 300, max_depth: 6, learning_rate: 0.02, subsample: 0.9 }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::domain(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::domain(format!("subsample must lie in (0, 1], got {}", self.subsample)));
        }
        if self.max_depth == 0 {
            return Err(Error::domain("max_depth must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Leaf(f64),
    /// `x[feature] <= threshold` goes to `left`.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Regression tree stored as a node list; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    k = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], k: usize) -> usize {
            match nodes[k] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub base: f64,
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbtModel {
    pub hyper: Hyper,
    pub n_features: usize,
    /// One ensemble per target column.
    pub ensembles: Vec<Ensemble>,
}

/// Row-major copy of a feature matrix.
fn rows_of(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|r| x.row(r).iter().copied().collect()).collect()
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    /// Sample indices sorted by each feature, computed once per fit.
    order: &'a [Vec<usize>],
    max_depth: usize,
}

impl Builder<'_> {
    fn build(&self, residual: &[f64], sample: &[bool]) -> Tree {
        let mut nodes = Vec::new();
        let idx: Vec<usize> = (0..residual.len()).filter(|&i| sample[i]).collect();
        self.grow(&mut nodes, residual, &idx, 0);
        Tree { nodes }
    }

    fn grow(&self, nodes: &mut Vec<Node>, r: &[f64], idx: &[usize], depth: usize) -> usize {
        let me = nodes.len();
        let n = idx.len() as f64;
        let sum: f64 = idx.iter().map(|&i| r[i]).sum();
        nodes.push(Node::Leaf(if idx.is_empty() { 0.0 } else { sum / n }));
        if depth >= self.max_depth || idx.len() < 2 {
            return me;
        }
        let Some((feature, threshold)) = self.best_split(r, idx, sum) else {
            return me;
        };
        let (l, rr): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.grow(nodes, r, &l, depth + 1);
        let right = self.grow(nodes, r, &rr, depth + 1);
        nodes[me] = Node::Split { feature, threshold, left, right };
        me
    }

    /// Exact scan over every feature and every gap between distinct values,
    /// maximising the reduction in squared error `S_L²/n_L + S_R²/n_R − S²/n`.
    fn best_split(&self, r: &[f64], idx: &[usize], total: f64) -> Option<(usize, f64)> {
        let n = idx.len();
        let mut member = vec![false; r.len()];
        for &i in idx {
            member[i] = true;
        }
        let parent = total * total / n as f64;
        let mut best: Option<(usize, f64)> = None;
        let mut best_gain = 1e-12 * (1.0 + parent.abs());
        let mut sorted = Vec::with_capacity(n);
        for (f, ord) in self.order.iter().enumerate() {
            sorted.clear();
            sorted.extend(ord.iter().copied().filter(|&i| member[i]));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                let i = sorted[k];
                left_sum += r[i];
                let (a, b) = (self.x[i][f], self.x[sorted[k + 1]][f]);
                if a == b {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = (n - k - 1) as f64;
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl + right_sum * right_sum / nr - parent;
                if gain > best_gain {
                    best_gain = gain;
                    let mid = 0.5 * (a + b);
                    // Guard against the midpoint rounding onto the right value.
                    best = Some((f, if mid < b { mid } else { a }));
                }
            }
        }
        best
    }
}

fn fit_one(x: &[Vec<f64>], order: &[Vec<usize>], y: &[f64], hyper: &Hyper, seed: u64) -> Ensemble {
    let m = y.len();
    let base = y.iter().sum::<f64>() / m as f64;
    let mut pred = vec![base; m];
    let builder = Builder { x, order, max_depth: hyper.max_depth };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = ((hyper.subsample * m as f64).floor() as usize).clamp(1, m);
    let mut trees = Vec::with_capacity(hyper.n_estimators);
    let mut residual = vec![0.0; m];
    for _ in 0..hyper.n_estimators {
        for i in 0..m {
            residual[i] = y[i] - pred[i];
        }
        let mut sample = vec![take == m; m];
        if take < m {
            for i in rand::seq::index::sample(&mut rng, m, take) {
                sample[i] = true;
            }
        }
        let tree = builder.build(&residual, &sample);
        for i in 0..m {
            pred[i] += hyper.learning_rate * tree.predict_row(&x[i]);
        }
        trees.push(tree);
    }
    Ensemble { base, trees }
}

/// Squared-error gradient boosting with one independent ensemble per target column.
///
/// Each round fits a depth-limited tree to the current residuals on a seeded
/// subsample (drawn without replacement) and adds `learning_rate ×` its output.
/// Target `j` draws its subsamples from a ChaCha8 stream seeded with `seed + j`,
/// so results do not depend on thread scheduling.
pub fn gbt_fit(x: &DMatrix<f64>, y: &DMatrix<f64>, hyper: &Hyper, seed: u64) -> Result<GbtModel> {
    hyper.validate()?;
    if x.nrows() < 2 {
        return Err(Error::domain("gradient boosting needs at least two rows"));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::domain(format!("{} feature rows but {} target rows", x.nrows(), y.nrows())));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::domain("training data contains non-finite values"));
    }
    let rows = rows_of(x);
    let order: Vec<Vec<usize>> = (0..x.ncols())
        .map(|f| {
            let mut o: Vec<usize> = (0..x.nrows()).collect();
            o.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]));
            o
        })
        .collect();
    let ensembles = (0..y.ncols())
        .into_par_iter()
        .map(|j| {
            let col: Vec<f64> = y.column(j).iter().copied().collect();
            fit_one(&rows, &order, &col, hyper, seed.wrapping_add(j as u64))
        })
        .collect();
    Ok(GbtModel { hyper: *hyper, n_features: x.ncols(), ensembles })
}

/// `base + Σ learning_rate · tree(x)` per target.
pub fn gbt_predict(model: &GbtModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != model.n_features {
        return Err(Error::domain(format!(
            "input has {} features, model expects {}",
            x.ncols(),
            model.n_features
        )));
    }
    let rows = rows_of(x);
    let lr = model.hyper.learning_rate;
    Ok(DMatrix::from_fn(x.nrows(), model.ensembles.len(), |r, j| {
        let e = &model.ensembles[j];
        e.base + e.trees.iter().map(|t| lr * t.predict_row(&rows[r])).sum::<f64>()
    }))
}
