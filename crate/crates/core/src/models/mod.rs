// SPDX-License-Identifier: Apache-2.0

//! Small in-house learners: SMO-trained SVM/SVR, CART regression trees,
//! z-standardization, fold averaging and evaluation metrics.

pub mod ensemble;
pub mod metrics;
pub mod scaler;
pub mod selection;
pub mod smo;
pub mod svm;
pub mod tree;

pub use ensemble::{average_fold_models, AveragedModel, AveragingPath, Estimator, Pipeline};
pub use metrics::{classification_metrics, pearson, regression_metrics, rmse, ClassificationMetrics, RegressionMetrics};
pub use scaler::Scaler;
pub use selection::{
    cross_validate, fit_pipeline, grid_search, EvalReport, FinalModel, FoldIndices, FoldReport, GridConfig, GridPoint, HyperParams, KernelKind,
    MetricSet, ModelFamily, SearchOutcome, Task,
};
pub use svm::{svm_train, svr_train, DecisionFunction, Kernel, SvmModel, SvmParams, SvrModel, SvrParams};
pub use tree::{dt_train, Node, TreeModel, TreeParams};
