//! Root-mean-square errors over non-anchor UAVs and runs.

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// `sqrt(sum |est - truth|^2 / (3 Nbar R))` over the non-anchor entries of
/// every `(estimate, truth)` pair.
pub fn rmse(runs: &[(Vec<Vec3>, Vec<Vec3>)], anchors: &[bool]) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::Config("RMSE needs at least one run".into()));
    }
    let mobile = anchors.iter().filter(|&&a| !a).count();
    if mobile == 0 {
        return Err(Error::Config("RMSE over an all-anchor swarm".into()));
    }
    let mut sum = 0.0;
    for (est, truth) in runs {
        if est.len() != anchors.len() || truth.len() != anchors.len() {
            return Err(Error::Config(format!("run covers {} / {} UAVs, anchor mask {}", est.len(), truth.len(), anchors.len())));
        }
        sum += est.iter().zip(truth).zip(anchors).filter(|(_, &a)| !a).map(|((e, t), _)| (e - t).norm_squared()).sum::<f64>();
    }
    Ok((sum / (3 * mobile * runs.len()) as f64).sqrt())
}

pub fn rmse_position(runs: &[(Vec<Vec3>, Vec<Vec3>)], anchors: &[bool]) -> Result<f64> {
    rmse(runs, anchors)
}

pub fn rmse_velocity(runs: &[(Vec<Vec3>, Vec<Vec3>)], anchors: &[bool]) -> Result<f64> {
    rmse(runs, anchors)
}

/// Angle between two vectors in degrees; `None` if either is zero.
pub fn angle_deg(a: &Vec3, b: &Vec3) -> Option<f64> {
    let d = a.norm() * b.norm();
    (d > 0.0).then(|| (a.dot(b) / d).clamp(-1.0, 1.0).acos().to_degrees())
}

/// Median of the finite values; `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[h] } else { 0.5 * (v[h - 1] + v[h]) })
}
