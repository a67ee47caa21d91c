// SPDX-License-Identifier: Apache-2.0

//! Grid search with k-fold cross-validation, and per-fold evaluation reports.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::{average_fold_models, AveragedModel, Estimator, Pipeline};
use super::metrics::{classification_metrics, regression_metrics, ClassificationMetrics, RegressionMetrics};
use super::scaler::Scaler;
use super::svm::{svm_train, svr_train, Kernel, SvmParams, SvrParams};
use super::tree::{dt_train, TreeParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[serde(rename = "clf")]
    Classification,
    #[serde(rename = "reg")]
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelFamily {
    #[serde(rename = "svm")]
    Svm,
    #[serde(rename = "svr")]
    Svr,
    #[serde(rename = "dt")]
    Tree,
}

impl ModelFamily {
    pub fn check_task(self, task: Task) -> Result<()> {
        match (task, self) {
            (Task::Classification, ModelFamily::Svm) | (Task::Regression, ModelFamily::Svr | ModelFamily::Tree) => {
                Ok(())
            }
            _ => Err(Error::InvalidConfig(format!("model {self:?} does not support task {task:?}"))),
        }
    }
}

/// How the deployed model is obtained once hyperparameters are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalModel {
    /// Merge the k fold refits with [`average_fold_models`].
    #[default]
    FoldAverage,
    /// Fit once more on every row.
    Refit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub c: Vec<f64>,
    pub kernels: Vec<KernelKind>,
    pub gamma: Vec<f64>,
    /// Adds `gamma = 1 / D` to the rbf grid.
    pub gamma_inverse_dim: bool,
    pub epsilon: Vec<f64>,
    pub max_depth: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            c: vec![0.1, 1.0, 10.0, 100.0],
            kernels: vec![KernelKind::Linear, KernelKind::Rbf],
            gamma: vec![0.01, 0.1],
            gamma_inverse_dim: true,
            epsilon: vec![0.1, 1.0],
            max_depth: (2..=8).collect(),
            min_samples_leaf: vec![1, 3, 5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum HyperParams {
    Svm(SvmParams),
    Svr(SvrParams),
    Tree(TreeParams),
}

fn sorted(mut v: Vec<f64>, descending: bool) -> Vec<f64> {
    v.sort_by(|a, b| if descending { b.total_cmp(a) } else { a.total_cmp(b) });
    v.dedup();
    v
}

impl GridConfig {
    fn kernels(&self, dim: usize) -> Vec<Kernel> {
        let mut out = Vec::new();
        if self.kernels.contains(&KernelKind::Linear) {
            out.push(Kernel::Linear);
        }
        if self.kernels.contains(&KernelKind::Rbf) {
            let mut g = self.gamma.clone();
            if self.gamma_inverse_dim {
                g.push(1.0 / dim.max(1) as f64);
            }
            out.extend(sorted(g, false).into_iter().map(|gamma| Kernel::Rbf { gamma }));
        }
        out
    }

    /// Candidates in tie-break preference order: smaller C, larger epsilon,
    /// linear before rbf, smaller gamma, shallower tree, larger leaves.
    pub fn candidates(&self, family: ModelFamily, dim: usize) -> Vec<HyperParams> {
        let cs = sorted(self.c.clone(), false);
        match family {
            ModelFamily::Svm => cs
                .iter()
                .flat_map(|&c| self.kernels(dim).into_iter().map(move |kernel| HyperParams::Svm(SvmParams { c, kernel })))
                .collect(),
            ModelFamily::Svr => {
                let eps = sorted(self.epsilon.clone(), true);
                let mut out = Vec::new();
                for &c in &cs {
                    for &epsilon in &eps {
                        for kernel in self.kernels(dim) {
                            out.push(HyperParams::Svr(SvrParams { c, epsilon, kernel }));
                        }
                    }
                }
                out
            }
            ModelFamily::Tree => {
                let mut depths = self.max_depth.clone();
                depths.sort_unstable();
                depths.dedup();
                let mut leaves = self.min_samples_leaf.clone();
                leaves.sort_unstable_by(|a, b| b.cmp(a));
                leaves.dedup();
                depths
                    .iter()
                    .flat_map(|&d| {
                        leaves.iter().map(move |&l| {
                            HyperParams::Tree(TreeParams {
                                max_depth: Some(d),
                                min_samples_leaf: l,
                            })
                        })
                    })
                    .collect()
            }
        }
    }
}

/// Fits the scaler on `x` and trains the estimator on the standardized rows.
pub fn fit_pipeline(x: &[Vec<f64>], y: &[f64], hyper: &HyperParams) -> Result<Pipeline> {
    let scaler = Scaler::fit(x)?;
    let z = scaler.transform(x)?;
    let estimator = match *hyper {
        HyperParams::Svm(p) => Estimator::Svm(svm_train(&z, y, p)?),
        HyperParams::Svr(p) => Estimator::Svr(svr_train(&z, y, p)?),
        HyperParams::Tree(p) => Estimator::Tree(dt_train(&z, y, p)?),
    };
    Ok(Pipeline { scaler, estimator })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricSet {
    Classification(ClassificationMetrics),
    Regression(RegressionMetrics),
}

impl MetricSet {
    pub fn compute(task: Task, y_true: &[f64], scores: &[f64]) -> Result<Self> {
        Ok(match task {
            Task::Classification => {
                let labels: Vec<f64> = scores.iter().map(|&s| if s >= 0.0 { 1.0 } else { -1.0 }).collect();
                MetricSet::Classification(classification_metrics(y_true, &labels)?)
            }
            Task::Regression => MetricSet::Regression(regression_metrics(y_true, scores)?),
        })
    }

    /// Model-selection score; larger is better.
    fn selection_score(&self) -> f64 {
        match self {
            MetricSet::Classification(m) => m.accuracy,
            MetricSet::Regression(m) => -m.rmse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_dev: usize,
    pub metrics: MetricSet,
}

/// Metrics on held-out data: pooled `summary` plus one entry per fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub n: usize,
    pub summary: MetricSet,
    pub folds: Vec<FoldReport>,
}

fn fmt_metrics(m: &MetricSet) -> String {
    match m {
        MetricSet::Classification(c) => format!("accuracy {:6.2}%  F1 {:6.2}%", 100.0 * c.accuracy, 100.0 * c.f1),
        MetricSet::Regression(r) => match r.pearson_rho {
            Some(rho) => format!("RMSE {:8.4}  rho {:7.4}", r.rmse, rho),
            None => format!("RMSE {:8.4}  rho     n/a", r.rmse),
        },
    }
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for f in &self.folds {
            let _ = writeln!(
                s,
                "fold {:>2}  train {:>4}  dev {:>4}  {}",
                f.fold,
                f.n_train,
                f.n_dev,
                fmt_metrics(&f.metrics)
            );
        }
        let _ = writeln!(s, "overall   n {:>4}             {}", self.n, fmt_metrics(&self.summary));
        s
    }
}

/// Train/dev index lists for one fold.
pub type FoldIndices = (Vec<usize>, Vec<usize>);

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub fold_models: Vec<Pipeline>,
    pub report: EvalReport,
    /// Mean of per-fold selection scores (accuracy, or negated RMSE).
    pub mean_score: f64,
}

fn pick(x: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| x[i].clone()).collect()
}

pub fn cross_validate(
    x: &[Vec<f64>],
    y: &[f64],
    folds: &[FoldIndices],
    hyper: &HyperParams,
    task: Task,
) -> Result<CvOutcome> {
    let mut fold_models = Vec::with_capacity(folds.len());
    let mut reports = Vec::with_capacity(folds.len());
    let mut pooled_true = Vec::new();
    let mut pooled_score = Vec::new();
    let mut score_sum = 0.0;
    for (k, (train, dev)) in folds.iter().enumerate() {
        let xt = pick(x, train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let model = fit_pipeline(&xt, &yt, hyper)?;
        let yd: Vec<f64> = dev.iter().map(|&i| y[i]).collect();
        let sd = dev.iter().map(|&i| model.score(&x[i])).collect::<Result<Vec<_>>>()?;
        let metrics = MetricSet::compute(task, &yd, &sd)?;
        score_sum += metrics.selection_score();
        reports.push(FoldReport {
            fold: k,
            n_train: train.len(),
            n_dev: dev.len(),
            metrics,
        });
        pooled_true.extend(yd);
        pooled_score.extend(sd);
        fold_models.push(model);
    }
    let summary = MetricSet::compute(task, &pooled_true, &pooled_score)?;
    Ok(CvOutcome {
        fold_models,
        report: EvalReport {
            task,
            n: pooled_true.len(),
            summary,
            folds: reports,
        },
        mean_score: score_sum / folds.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub params: HyperParams,
    pub mean_score: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: HyperParams,
    pub grid: Vec<GridPoint>,
    pub report: EvalReport,
    pub model: AveragedModel,
}

/// Evaluates every grid point with `folds`, keeps the best mean score
/// (earliest candidate on ties), and builds the final model.
pub fn grid_search(
    x: &[Vec<f64>],
    y: &[f64],
    task: Task,
    family: ModelFamily,
    folds: &[FoldIndices],
    grid: &GridConfig,
    final_model: FinalModel,
) -> Result<SearchOutcome> {
    family.check_task(task)?;
    let dim = super::scaler::check_matrix(x)?;
    let candidates = grid.candidates(family, dim);
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("empty hyperparameter grid".into()));
    }
    let outcomes: Vec<CvOutcome> = candidates
        .par_iter()
        .map(|h| cross_validate(x, y, folds, h, task))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, o) in outcomes.iter().enumerate() {
        if o.mean_score > outcomes[best].mean_score + 1e-12 {
            best = i;
        }
    }
    let grid_points = candidates
        .iter()
        .zip(&outcomes)
        .map(|(p, o)| GridPoint {
            params: *p,
            mean_score: o.mean_score,
        })
        .collect();
    let chosen = outcomes.into_iter().nth(best).expect("best index in range");
    let model = match final_model {
        FinalModel::FoldAverage => average_fold_models(&chosen.fold_models)?,
        FinalModel::Refit => AveragedModel::Refit {
            model: fit_pipeline(x, y, &candidates[best])?,
        },
    };
    Ok(SearchOutcome {
        best: candidates[best],
        grid: grid_points,
        report: chosen.report,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes_and_order() {
        let g = GridConfig::default();
        let svm = g.candidates(ModelFamily::Svm, 30);
        assert_eq!(svm.len(), 4 * 4);
        assert!(matches!(svm[0], HyperParams::Svm(SvmParams { c, kernel: Kernel::Linear }) if c == 0.1));
        assert!(matches!(svm[1], HyperParams::Svm(SvmParams { kernel: Kernel::Rbf { gamma }, .. }) if gamma == 0.01));
        assert!(matches!(svm[2], HyperParams::Svm(SvmParams { kernel: Kernel::Rbf { gamma }, .. }) if (gamma - 1.0 / 30.0).abs() < 1e-15));
        let svr = g.candidates(ModelFamily::Svr, 30);
        assert_eq!(svr.len(), 4 * 2 * 4);
        assert!(matches!(svr[0], HyperParams::Svr(SvrParams { epsilon, .. }) if epsilon == 1.0));
        let dt = g.candidates(ModelFamily::Tree, 30);
        assert_eq!(dt.len(), 21);
        assert!(matches!(dt[0], HyperParams::Tree(TreeParams { max_depth: Some(2), min_samples_leaf: 5 })));
    }

    #[test]
    fn task_model_pairs() {
        assert!(ModelFamily::Svm.check_task(Task::Classification).is_ok());
        assert!(ModelFamily::Tree.check_task(Task::Classification).is_err());
        assert!(ModelFamily::Svm.check_task(Task::Regression).is_err());
    }

    fn folds(n: usize, k: usize) -> Vec<FoldIndices> {
        (0..k)
            .map(|f| {
                let dev: Vec<usize> = (0..n).filter(|i| i % k == f).collect();
                let train: Vec<usize> = (0..n).filter(|i| i % k != f).collect();
                (train, dev)
            })
            .collect()
    }

    #[test]
    fn search_separable_problem() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, ((i * 7) % 5) as f64]).collect();
        let y: Vec<f64> = (0..30).map(|i| if i >= 15 { 1.0 } else { -1.0 }).collect();
        let out = grid_search(&x, &y, Task::Classification, ModelFamily::Svm, &folds(30, 5), &GridConfig::default(), FinalModel::FoldAverage).unwrap();
        assert_eq!(out.report.folds.len(), 5);
        match &out.report.summary {
            MetricSet::Classification(m) => assert!(m.accuracy >= 0.9),
            _ => panic!(),
        }
        assert!(out.grid.iter().all(|g| g.mean_score <= out.grid.iter().map(|g| g.mean_score).fold(f64::MIN, f64::max)));
    }

    #[test]
    fn search_regression() {
        let x: Vec<Vec<f64>> = (0..25).map(|i| vec![i as f64 / 5.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 3.0 * r[0] + 2.0).collect();
        for fam in [ModelFamily::Svr, ModelFamily::Tree] {
            let out = grid_search(&x, &y, Task::Regression, fam, &folds(25, 5), &GridConfig::default(), FinalModel::FoldAverage).unwrap();
            match &out.report.summary {
                MetricSet::Regression(m) => assert!(m.pearson_rho.unwrap() > 0.95, "{fam:?} {m:?}"),
                _ => panic!(),
            }
        }
    }

    #[test]
    fn refit_memorizes_with_deep_tree() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![(i * 7 % 20) as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| ((i * 13) % 11) as f64).collect();
        let grid = GridConfig {
            max_depth: vec![32],
            min_samples_leaf: vec![1],
            ..GridConfig::default()
        };
        let out = grid_search(&x, &y, Task::Regression, ModelFamily::Tree, &folds(20, 5), &grid, FinalModel::Refit).unwrap();
        assert_eq!(out.model.path(), super::super::AveragingPath::Refit);
        assert_eq!(out.model.scores(&x).unwrap(), y);
    }

    #[test]
    fn table_has_one_line_per_fold() {
        let r = EvalReport {
            task: Task::Regression,
            n: 4,
            summary: MetricSet::Regression(RegressionMetrics { rmse: 1.0, pearson_rho: None }),
            folds: vec![],
        };
        assert!(r.to_table().contains("n/a"));
    }
}
