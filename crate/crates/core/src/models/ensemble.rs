// SPDX-License-Identifier: Apache-2.0

//! Scaler + estimator pipelines, and collapsing per-fold pipelines into one
//! inference model.
//!
//! Linear SVM/SVR folds are merged by averaging their primal weights in raw
//! feature space (each fold's scaler is folded into its weights first).
//! Kernel machines and trees have no shared parameter space, so they are
//! merged into a score-averaging ensemble.

use serde::{Deserialize, Serialize};

use super::scaler::Scaler;
use super::svm::{DecisionFunction, Kernel, SvmModel, SvrModel};
use super::tree::TreeModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case")]
pub enum Estimator {
    Svm(SvmModel),
    Svr(SvrModel),
    Tree(TreeModel),
}

impl Estimator {
    fn name(&self) -> &'static str {
        match self {
            Estimator::Svm(_) => "svm",
            Estimator::Svr(_) => "svr",
            Estimator::Tree(_) => "tree",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Estimator::Svm(m) => m.dim,
            Estimator::Svr(m) => m.dim,
            Estimator::Tree(m) => m.dim,
        }
    }

    /// Decision value (SVM) or regression output.
    pub fn score(&self, z: &[f64]) -> Result<f64> {
        match self {
            Estimator::Svm(m) => m.decision(z),
            Estimator::Svr(m) => m.predict_one(z),
            Estimator::Tree(m) => m.predict_one(z),
        }
    }

    fn hyperparameters_json(&self) -> String {
        let v = match self {
            Estimator::Svm(m) => serde_json::to_string(&m.params),
            Estimator::Svr(m) => serde_json::to_string(&m.params),
            Estimator::Tree(m) => serde_json::to_string(&m.params),
        };
        v.unwrap_or_default()
    }

    fn primal(&self) -> Option<(&[f64], f64)> {
        let f = match self {
            Estimator::Svm(m) if m.params.kernel == Kernel::Linear => &m.function,
            Estimator::Svr(m) if m.params.kernel == Kernel::Linear => &m.function,
            _ => return None,
        };
        match f {
            DecisionFunction::Primal { weights, bias } => Some((weights, *bias)),
            DecisionFunction::Dual { .. } => None,
        }
    }

    fn with_primal(&self, weights: Vec<f64>, bias: f64) -> Self {
        let function = DecisionFunction::Primal { weights, bias };
        match self {
            Estimator::Svm(m) => Estimator::Svm(SvmModel {
                function,
                ..m.clone()
            }),
            Estimator::Svr(m) => Estimator::Svr(SvrModel {
                function,
                ..m.clone()
            }),
            Estimator::Tree(_) => unreachable!("trees have no primal form"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub scaler: Scaler,
    pub estimator: Estimator,
}

impl Pipeline {
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.estimator.score(&self.scaler.transform_row(x)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingPath {
    PrimalMean,
    ScoreEnsemble,
    /// One model refit on all rows; fold models only drove selection.
    Refit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "path", rename_all = "snake_case")]
pub enum AveragedModel {
    PrimalMean { model: Pipeline },
    ScoreEnsemble { members: Vec<Pipeline> },
    Refit { model: Pipeline },
}

impl AveragedModel {
    pub fn path(&self) -> AveragingPath {
        match self {
            AveragedModel::PrimalMean { .. } => AveragingPath::PrimalMean,
            AveragedModel::ScoreEnsemble { .. } => AveragingPath::ScoreEnsemble,
            AveragedModel::Refit { .. } => AveragingPath::Refit,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            AveragedModel::PrimalMean { model } | AveragedModel::Refit { model } => model.scaler.dim(),
            AveragedModel::ScoreEnsemble { members } => members[0].scaler.dim(),
        }
    }

    /// Mean decision value / regression output of the merged model.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        match self {
            AveragedModel::PrimalMean { model } | AveragedModel::Refit { model } => model.score(x),
            AveragedModel::ScoreEnsemble { members } => {
                let mut s = 0.0;
                for m in members {
                    s += m.score(x)?;
                }
                Ok(s / members.len() as f64)
            }
        }
    }

    pub fn scores(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        x.iter().map(|r| self.score(r)).collect()
    }

    /// Sign of the mean decision value, 0 resolving to +1.
    pub fn predict_labels(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self
            .scores(x)?
            .into_iter()
            .map(|s| if s >= 0.0 { 1.0 } else { -1.0 })
            .collect())
    }
}

pub fn average_fold_models(models: &[Pipeline]) -> Result<AveragedModel> {
    let first = models
        .first()
        .ok_or_else(|| Error::HeterogeneousModels("no models to average".into()))?;
    let kind = first.estimator.name();
    let hyper = first.estimator.hyperparameters_json();
    let dim = first.estimator.dim();
    for m in &models[1..] {
        if m.estimator.name() != kind {
            return Err(Error::HeterogeneousModels(format!(
                "{} mixed with {}",
                kind,
                m.estimator.name()
            )));
        }
        if m.estimator.hyperparameters_json() != hyper {
            return Err(Error::HeterogeneousModels("hyperparameters differ".into()));
        }
        if m.estimator.dim() != dim || m.scaler.dim() != dim {
            return Err(Error::HeterogeneousModels("feature dimensions differ".into()));
        }
    }

    if models.iter().all(|m| m.estimator.primal().is_some()) {
        let mut weights = vec![0.0; dim];
        let mut bias = 0.0;
        for m in models {
            let (w, b) = m.estimator.primal().expect("checked above");
            // w'((x - mu) / sd) + b  ==  (w / sd)'x + (b - sum w mu / sd)
            let mut raw_bias = b;
            for j in 0..dim {
                let wr = w[j] / m.scaler.stds[j];
                weights[j] += wr;
                raw_bias -= wr * m.scaler.means[j];
            }
            bias += raw_bias;
        }
        let k = models.len() as f64;
        weights.iter_mut().for_each(|w| *w /= k);
        bias /= k;
        return Ok(AveragedModel::PrimalMean {
            model: Pipeline {
                scaler: Scaler::identity(dim),
                estimator: first.estimator.with_primal(weights, bias),
            },
        });
    }
    Ok(AveragedModel::ScoreEnsemble {
        members: models.to_vec(),
    })
}
