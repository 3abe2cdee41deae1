use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Regression metrics; RMSE and MAE are in label units (%), MAPE in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub r2: f64,
    pub rmse: f64,
    pub mae: f64,
    pub mape: f64,
}

fn check<T>(pred: &[T], label: &[T], min_len: usize) -> Result<()> {
    if pred.len() != label.len() {
        return Err(Error::Shape(format!("{} predictions vs {} labels", pred.len(), label.len())));
    }
    if pred.len() < min_len {
        return Err(Error::Empty(format!("need at least {min_len} samples, got {}", pred.len())));
    }
    Ok(())
}

pub fn rmse<T: Scalar>(pred: &[T], label: &[T]) -> Result<f64> {
    check(pred, label, 1)?;
    let sse: f64 = pred.iter().zip(label).map(|(p, y)| (p.widen() - y.widen()).powi(2)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

pub fn mae<T: Scalar>(pred: &[T], label: &[T]) -> Result<f64> {
    check(pred, label, 1)?;
    let sae: f64 = pred.iter().zip(label).map(|(p, y)| (p.widen() - y.widen()).abs()).sum();
    Ok(sae / pred.len() as f64)
}

/// Mean absolute percentage error over non-zero labels.
pub fn mape<T: Scalar>(pred: &[T], label: &[T]) -> Result<f64> {
    check(pred, label, 1)?;
    let mut total = 0.0;
    let mut n = 0usize;
    for (p, y) in pred.iter().zip(label) {
        let y = y.widen();
        if y == 0.0 {
            continue;
        }
        total += ((p.widen() - y) / y).abs();
        n += 1;
    }
    if n < pred.len() {
        log::warn!("MAPE skipped {} zero-valued labels", pred.len() - n);
    }
    if n == 0 {
        return Err(Error::Metric("MAPE undefined: every label is zero".into()));
    }
    Ok(100.0 * total / n as f64)
}

/// `1 − SS_res / SS_tot`.
pub fn r_squared<T: Scalar>(pred: &[T], label: &[T]) -> Result<f64> {
    check(pred, label, 2)?;
    let mean = label.iter().map(|y| y.widen()).sum::<f64>() / label.len() as f64;
    let ss_tot: f64 = label.iter().map(|y| (y.widen() - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Metric("R² undefined for zero-variance labels".into()));
    }
    let ss_res: f64 = pred.iter().zip(label).map(|(p, y)| (p.widen() - y.widen()).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn metrics<T: Scalar>(pred: &[T], label: &[T]) -> Result<Metrics> {
    Ok(Metrics {
        r2: r_squared(pred, label)?,
        rmse: rmse(pred, label)?,
        mae: mae(pred, label)?,
        mape: mape(pred, label)?,
    })
}
