//! Training loss and evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{field_to_flow, FlowFrame};
use crate::grid::VectorField;
use crate::real::Real;

/// Mean over nodes of the squared 2-norm of `pred − target`.
pub fn field_mse<T: Real>(pred: &VectorField<T>, target: &VectorField<f64>) -> Result<T> {
    if pred.spec != target.spec {
        return Err(Error::DimMismatch(format!(
            "prediction is {}x{}, target is {}x{}",
            pred.spec.nx, pred.spec.ny, target.spec.nx, target.spec.ny
        )));
    }
    let mut acc = T::zero();
    for (p, t) in pred.values.iter().zip(&target.values) {
        let dx = p.x - t.x;
        let dy = p.y - t.y;
        acc += dx * dx + dy * dy;
    }
    Ok(acc / pred.values.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    /// `(timestamp, mse)` for every supervised frame.
    pub per_frame: Vec<(f64, f64)>,
    /// Indices of the supervised frames.
    pub mask: Vec<usize>,
}

/// Masked mean-squared field error over the frames listed in `mask`.
pub fn loss_mse(
    pred: &[VectorField<f64>],
    target: &[VectorField<f64>],
    times: &[f64],
    mask: &[usize],
) -> Result<LossReport> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    if pred.len() != target.len() || times.len() != target.len() {
        return Err(Error::DimMismatch(format!(
            "{} predicted, {} target frames, {} timestamps",
            pred.len(),
            target.len(),
            times.len()
        )));
    }
    let mut per_frame = Vec::with_capacity(mask.len());
    for &i in mask {
        if i >= target.len() {
            return Err(Error::DimMismatch(format!("mask index {i} beyond {} frames", target.len())));
        }
        per_frame.push((times[i], field_mse(&pred[i], &target[i])?));
    }
    let total = per_frame.iter().map(|f| f.1).sum::<f64>() / per_frame.len() as f64;
    Ok(LossReport { total, per_frame, mask: mask.to_vec() })
}

/// Mean over frames of the field error.
pub fn err_vel(pred: &[VectorField<f64>], gt: &[VectorField<f64>]) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::DimMismatch(format!("{} predicted vs {} reference frames", pred.len(), gt.len())));
    }
    let mut acc = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        acc += field_mse(p, g)?;
    }
    Ok(acc / pred.len() as f64)
}

/// Mean over frames of the per-pixel squared flow error. Pixels missing in
/// either frame are skipped.
pub fn err_flow(pred: &[FlowFrame], gt: &[FlowFrame]) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::DimMismatch(format!("{} predicted vs {} reference frames", pred.len(), gt.len())));
    }
    let mut acc = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        if p.width != g.width || p.height != g.height {
            return Err(Error::DimMismatch(format!("{}x{} vs {}x{}", p.width, p.height, g.width, g.height)));
        }
        let mut sum = 0.0;
        let mut n = 0usize;
        for k in 0..p.uv.len() {
            if p.mask[k] && g.mask[k] {
                let du = p.uv[k][0] as f64 - g.uv[k][0] as f64;
                let dv = p.uv[k][1] as f64 - g.uv[k][1] as f64;
                sum += du * du + dv * dv;
                n += 1;
            }
        }
        acc += if n > 0 { sum / n as f64 } else { 0.0 };
    }
    Ok(acc / pred.len() as f64)
}

/// [`err_flow`] with predictions given as grid fields, converted to flow
/// by sampling at pixel centers.
pub fn err_flow_from_fields(pred: &[VectorField<f64>], gt: &[FlowFrame]) -> Result<f64> {
    let flows =
        pred.iter().zip(gt).map(|(f, g)| field_to_flow(f, g.width, g.height, g.t)).collect::<Result<Vec<_>>>()?;
    err_flow(&flows, gt)
}
