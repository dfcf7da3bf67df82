//! PCA compression and gradient-boosted regression from spectral fingerprints
//! to bath parameters.

mod gbt;
mod pca;
mod persist;

pub use gbt::{gbt_fit, gbt_predict, Ensemble, GbtModel, Hyper, Node, Tree};
pub use pca::{pca_fit, pca_inverse, pca_transform, total_variance, PcaModel, RANK_TOL};
pub use persist::{load_model, parse_model, save_model, write_model, MODEL_SCHEMA};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Regression targets, in column order.
pub const TARGET_NAMES: [&str; 7] = ["J_L12", "gamma_L1", "gamma_L2", "J_sb", "backflow_rate", "log_deps", "dominant_freq"];

pub const DEFAULT_COMPONENTS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub run_ids: Vec<usize>,
    pub features: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub target_names: Vec<String>,
}

impl Dataset {
    pub fn new(run_ids: Vec<usize>, features: DMatrix<f64>, targets: DMatrix<f64>, target_names: Vec<String>) -> Result<Self> {
        if features.nrows() != targets.nrows() || run_ids.len() != features.nrows() {
            return Err(Error::validation(format!(
                "{} run ids, {} feature rows, {} target rows",
                run_ids.len(),
                features.nrows(),
                targets.nrows()
            )));
        }
        if target_names.len() != targets.ncols() {
            return Err(Error::validation("target names do not match target columns"));
        }
        if let Some(k) = features.iter().chain(targets.iter()).position(|v| !v.is_finite()) {
            return Err(Error::validation(format!("dataset has a non-finite value (flat index {k})")));
        }
        Ok(Dataset { run_ids, features, targets, target_names })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn target_index(&self, name: &str) -> Option<usize> {
        self.target_names.iter().position(|n| n == name)
    }

    /// Rows in the given order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            run_ids: rows.iter().map(|&r| self.run_ids[r]).collect(),
            features: self.features.select_rows(rows),
            targets: self.targets.select_rows(rows),
            target_names: self.target_names.clone(),
        }
    }
}

/// Seeded permutation; the first `⌊fraction·m⌋` rows train, the rest test.
pub fn train_test_split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::domain(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    let mut perm: Vec<usize> = (0..ds.len()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (train_fraction * ds.len() as f64).floor() as usize;
    Ok((ds.select(&perm[..cut]), ds.select(&perm[cut..])))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    /// `None` when the truth column has zero variance.
    pub r2: Option<f64>,
}

/// Per-column MSE and `R² = 1 − SS_res/SS_tot`.
pub fn evaluate(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<Vec<Metrics>> {
    if pred.shape() != truth.shape() {
        return Err(Error::domain(format!("prediction shape {:?} differs from truth {:?}", pred.shape(), truth.shape())));
    }
    if truth.nrows() == 0 {
        return Err(Error::domain("cannot evaluate an empty set"));
    }
    let m = truth.nrows() as f64;
    Ok((0..truth.ncols())
        .map(|j| {
            let t = truth.column(j);
            let p = pred.column(j);
            let mean = t.sum() / m;
            let ss_res: f64 = t.iter().zip(p.iter()).map(|(a, b)| (a - b).powi(2)).sum();
            let ss_tot: f64 = t.iter().map(|a| (a - mean).powi(2)).sum();
            Metrics { mse: ss_res / m, r2: (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot) }
        })
        .collect())
}

/// PCA projection followed by one boosted ensemble per target.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceModel {
    pub pca: PcaModel,
    pub gbt: GbtModel,
    pub target_names: Vec<String>,
}

impl InferenceModel {
    pub fn fit(train: &Dataset, n_components: usize, hyper: &Hyper, seed: u64) -> Result<Self> {
        let pca = pca_fit(&train.features, n_components)?;
        let z = pca_transform(&pca, &train.features)?;
        let gbt = gbt_fit(&z, &train.targets, hyper, seed)?;
        Ok(InferenceModel { pca, gbt, target_names: train.target_names.clone() })
    }

    pub fn predict(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        gbt_predict(&self.gbt, &pca_transform(&self.pca, features)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy(m: usize) -> Dataset {
        let f = DMatrix::from_fn(m, 3, |r, c| (r * 7 + c) as f64);
        let t = DMatrix::from_fn(m, 1, |r, _| r as f64);
        Dataset::new((0..m).collect(), f, t, vec!["y".into()]).unwrap()
    }

    #[test]
    fn split_sizes_and_partition() {
        let ds = toy(100);
        let (a, b) = train_test_split(&ds, 0.8, 7).unwrap();
        assert_eq!((a.len(), b.len()), (80, 20));
        let mut all: Vec<usize> = a.run_ids.iter().chain(&b.run_ids).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let (a2, b2) = train_test_split(&ds, 0.8, 7).unwrap();
        assert_eq!((a, b), (a2, b2));
        assert!(train_test_split(&ds, 1.0, 0).is_err());
    }

    #[test]
    fn evaluate_cases() {
        let truth = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 6.0]);
        let perfect = evaluate(&truth, &truth).unwrap()[0];
        assert_eq!(perfect, Metrics { mse: 0.0, r2: Some(1.0) });
        let mean = DMatrix::from_element(4, 1, 3.0);
        assert!(evaluate(&mean, &truth).unwrap()[0].r2.unwrap().abs() < 1e-15);
        let shifted = truth.add_scalar(2.0);
        assert_eq!(evaluate(&shifted, &truth).unwrap()[0].mse, 4.0);
        let flat = DMatrix::from_element(4, 1, 1.0);
        assert_eq!(evaluate(&truth, &flat).unwrap()[0].r2, None);
        assert!(evaluate(&truth, &DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn dataset_rejects_non_finite() {
        let f = DMatrix::from_element(2, 1, f64::NAN);
        assert!(Dataset::new(vec![0, 1], f, DMatrix::zeros(2, 1), vec!["y".into()]).is_err());
    }

    #[test]
    fn linear_in_one_bin_is_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = 200;
        let p = 30;
        let f = DMatrix::from_fn(m, p, |_, _| rng.gen_range(0.0..1.0));
        let t = DMatrix::from_fn(m, 1, |r, _| 3.0 * f[(r, 5)] - 1.0);
        let ds = Dataset::new((0..m).collect(), f, t, vec!["y".into()]).unwrap();
        let (train, test) = train_test_split(&ds, 0.8, 1).unwrap();
        let model = gbt_fit(&train.features, &train.targets, &Hyper::default(), 2).unwrap();
        let r2 = evaluate(&gbt_predict(&model, &test.features).unwrap(), &test.targets).unwrap()[0].r2.unwrap();
        assert!(r2 > 0.99, "R² = {r2}");
    }
}
