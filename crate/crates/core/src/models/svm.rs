// SPDX-License-Identifier: Apache-2.0

//! C-SVC and epsilon-SVR trained with [`smo`](super::smo).

use serde::{Deserialize, Serialize};

use super::scaler::check_matrix;
use super::smo::{self, Problem, Solution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Rbf { gamma } if !(gamma > 0.0) => {
                Err(Error::InvalidConfig(format!("rbf gamma {gamma} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// `f(x) = w'x + b` or `f(x) = sum_i coef_i K(sv_i, x) + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum DecisionFunction {
    Primal {
        weights: Vec<f64>,
        bias: f64,
    },
    Dual {
        kernel: Kernel,
        support_vectors: Vec<Vec<f64>>,
        coef: Vec<f64>,
        bias: f64,
    },
}

impl DecisionFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            DecisionFunction::Primal { weights, bias } => {
                weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias
            }
            DecisionFunction::Dual {
                kernel,
                support_vectors,
                coef,
                bias,
            } => {
                support_vectors
                    .iter()
                    .zip(coef)
                    .map(|(sv, c)| c * kernel.eval(sv, x))
                    .sum::<f64>()
                    + bias
            }
        }
    }

    fn from_duals(kernel: Kernel, x: &[Vec<f64>], coef: &[f64], bias: f64) -> Self {
        match kernel {
            Kernel::Linear => {
                let mut weights = vec![0.0; x[0].len()];
                for (row, &c) in x.iter().zip(coef) {
                    if c != 0.0 {
                        for (w, v) in weights.iter_mut().zip(row) {
                            *w += c * v;
                        }
                    }
                }
                DecisionFunction::Primal { weights, bias }
            }
            Kernel::Rbf { .. } => {
                let (support_vectors, coef): (Vec<_>, Vec<_>) = x
                    .iter()
                    .zip(coef)
                    .filter(|(_, &c)| c != 0.0)
                    .map(|(r, &c)| (r.clone(), c))
                    .unzip();
                DecisionFunction::Dual {
                    kernel,
                    support_vectors,
                    coef,
                    bias,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub params: SvmParams,
    pub dim: usize,
    pub function: DecisionFunction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub kernel: Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub params: SvrParams,
    pub dim: usize,
    pub function: DecisionFunction,
}

fn kernel_matrix(kernel: Kernel, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(&x[i], &x[j]);
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    k
}

fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: x.len() });
    }
    Ok(())
}

/// Trains a C-SVC on labels in {-1, +1}; also returns the raw dual solution.
pub fn svm_train_with_solution(x: &[Vec<f64>], y: &[f64], params: SvmParams) -> Result<(SvmModel, Solution)> {
    let dim = check_matrix(x)?;
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::TooFewSamples(format!("{} training samples", x.len())));
    }
    if let Some(bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidConfig(format!("SVM label {bad} not in {{-1, +1}}")));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::SingleClass);
    }
    if !(params.c > 0.0) {
        return Err(Error::InvalidConfig(format!("C {} must be positive", params.c)));
    }
    params.kernel.validate()?;
    let k = kernel_matrix(params.kernel, x);
    let q: Vec<Vec<f64>> = (0..x.len())
        .map(|i| (0..x.len()).map(|j| y[i] * y[j] * k[i][j]).collect())
        .collect();
    let p = vec![-1.0; x.len()];
    let sol = smo::solve(&Problem { q: &q, p: &p, y, c: params.c }, false);
    let coef: Vec<f64> = sol.alpha.iter().zip(y).map(|(a, l)| a * l).collect();
    let function = DecisionFunction::from_duals(params.kernel, x, &coef, -sol.rho);
    Ok((SvmModel { params, dim, function }, sol))
}

pub fn svm_train(x: &[Vec<f64>], y: &[f64], params: SvmParams) -> Result<SvmModel> {
    svm_train_with_solution(x, y, params).map(|(m, _)| m)
}

impl SvmModel {
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x)?;
        Ok(self.function.eval(x))
    }

    /// Labels in {-1, +1}; a decision value of exactly 0 maps to +1.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = x.iter().map(|r| self.decision(r)).collect::<Result<Vec<_>>>()?;
        let labels = d.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
        Ok((labels, d))
    }
}

/// Trains an epsilon-SVR; the returned solution has `2n` variables
/// (`alpha` then `alpha*`).
pub fn svr_train_with_solution(x: &[Vec<f64>], y: &[f64], params: SvrParams) -> Result<(SvrModel, Solution)> {
    let dim = check_matrix(x)?;
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if !(params.c > 0.0) || !(params.epsilon >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "SVR needs C > 0 and epsilon >= 0, got C={} epsilon={}",
            params.c, params.epsilon
        )));
    }
    params.kernel.validate()?;
    let n = x.len();
    let k = kernel_matrix(params.kernel, x);
    let signs: Vec<f64> = (0..2 * n).map(|t| if t < n { 1.0 } else { -1.0 }).collect();
    let q: Vec<Vec<f64>> = (0..2 * n)
        .map(|s| (0..2 * n).map(|t| signs[s] * signs[t] * k[s % n][t % n]).collect())
        .collect();
    let p: Vec<f64> = (0..2 * n)
        .map(|t| if t < n { params.epsilon - y[t] } else { params.epsilon + y[t - n] })
        .collect();
    let sol = smo::solve(
        &Problem {
            q: &q,
            p: &p,
            y: &signs,
            c: params.c,
        },
        false,
    );
    let coef: Vec<f64> = (0..n).map(|i| sol.alpha[i] - sol.alpha[i + n]).collect();
    let function = DecisionFunction::from_duals(params.kernel, x, &coef, -sol.rho);
    Ok((SvrModel { params, dim, function }, sol))
}

pub fn svr_train(x: &[Vec<f64>], y: &[f64], params: SvrParams) -> Result<SvrModel> {
    svr_train_with_solution(x, y, params).map(|(m, _)| m)
}

impl SvrModel {
    pub fn predict_one(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x)?;
        Ok(self.function.eval(x))
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        x.iter().map(|r| self.predict_one(r)).collect()
    }
}
