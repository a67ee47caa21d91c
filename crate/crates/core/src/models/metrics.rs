// SPDX-License-Identifier: Apache-2.0

//! Accuracy, positive-class F1, RMSE and Pearson correlation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    /// F1 of the positive (+1, dementia) class; 0 when there are no true positives.
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub rmse: f64,
    /// `None` when either side has zero variance.
    pub pearson_rho: Option<f64>,
}

fn check_lengths(a: usize, b: usize, min: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, got: b });
    }
    if a < min {
        return Err(Error::TooFewSamples(format!("{a} values, need {min}")));
    }
    Ok(())
}

/// Labels are compared by sign: `>= 0` is the positive class.
pub fn classification_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<ClassificationMetrics> {
    check_lengths(y_true.len(), y_pred.len(), 1)?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t >= 0.0, p >= 0.0) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let accuracy = (tp + tn) as f64 / y_true.len() as f64;
    let f1 = if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    };
    Ok(ClassificationMetrics {
        accuracy,
        f1,
        tp,
        fp,
        fn_,
        tn,
    })
}

pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_lengths(y_true.len(), y_pred.len(), 1)?;
    let mse = y_true.iter().zip(y_pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y_true.len() as f64;
    Ok(mse.sqrt())
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a.len(), b.len(), 2)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub fn regression_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<RegressionMetrics> {
    let rmse = rmse(y_true, y_pred)?;
    let pearson_rho = match pearson(y_true, y_pred) {
        Ok(r) => Some(r),
        Err(Error::ZeroVariance) | Err(Error::TooFewSamples(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(RegressionMetrics { rmse, pearson_rho })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_fixture() {
        // TP=2, FP=1, FN=1, TN=1
        let t = [1.0, 1.0, -1.0, 1.0, -1.0];
        let p = [1.0, 1.0, 1.0, -1.0, -1.0];
        let m = classification_metrics(&t, &p).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (2, 1, 1, 1));
        assert!((m.accuracy - 0.6).abs() < 1e-12);
        assert!((m.f1 - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_regression() {
        let y = [1.0, 4.0, 2.0, 8.0];
        let m = regression_metrics(&y, &y).unwrap();
        assert_eq!(m.rmse, 0.0);
        assert!((m.pearson_rho.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn anticorrelation() {
        let y = [-1.5, 0.5, 2.0, -1.0];
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        assert!((pearson(&y, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_variance() {
        assert!(matches!(pearson(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), Err(Error::ZeroVariance)));
        assert_eq!(regression_metrics(&[1.0, 2.0, 3.0], &[2.0; 3]).unwrap().pearson_rho, None);
    }

    #[test]
    fn length_mismatch() {
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }
}
