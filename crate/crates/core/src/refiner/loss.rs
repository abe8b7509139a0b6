use crate::error::{Error, Result};

use super::RefinerOutput;

pub fn smooth_l1(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

pub fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

fn check_gt(gt: &RefinerOutput) -> Result<()> {
    if gt.as_array().iter().any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("ground-truth components must be positive"));
    }
    Ok(())
}

/// Sum of smooth-L1 penalties on the relative errors of `w`, `h`, `xr`, `yb`.
pub fn loss(pred: &RefinerOutput, gt: &RefinerOutput) -> Result<f64> {
    check_gt(gt)?;
    Ok(pred
        .as_array()
        .iter()
        .zip(gt.as_array())
        .map(|(&p, g)| smooth_l1((p - g) / g))
        .sum())
}

/// `d loss / d pred` for each of the four components.
pub fn loss_grad(pred: &RefinerOutput, gt: &RefinerOutput) -> Result<[f64; 4]> {
    check_gt(gt)?;
    let p = pred.as_array();
    let g = gt.as_array();
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = smooth_l1_grad((p[i] - g[i]) / g[i]) / g[i];
    }
    Ok(out)
}
