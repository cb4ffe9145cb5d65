//! Trajectory accuracy metrics: absolute pose error with optional rigid
//! alignment, and relative pose error over a fixed frame delta.

use nalgebra::{Matrix3, Vector3};

use crate::dataset_io::Trajectory;
use crate::error::{Error, Result};
use crate::geometry::Pose;

#[derive(Clone, Copy, Debug)]
pub struct ErrorStats {
    pub rmse: f64,
    pub mean: f64,
    pub max: f64,
    pub stdev: f64,
}

impl ErrorStats {
    /// Population statistics over a series of non-negative errors.
    pub fn from_series(errors: &[f64]) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::EmptyInput("error series"));
        }
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let max = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
        let stdev = var.max(0.0).sqrt();
        let rmse = (mean * mean + var).sqrt();
        Ok(ErrorStats {
            rmse,
            mean,
            max,
            stdev,
        })
    }
}

/// Greedy nearest-timestamp association: for each estimate in order, the
/// closest unused reference within `max_dt`.
pub fn associate(
    est: &Trajectory,
    reference: &Trajectory,
    max_dt: f64,
) -> Result<Vec<(usize, usize)>> {
    let mut used = vec![false; reference.len()];
    let mut pairs = Vec::new();
    for (i, (t, _)) in est.entries.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (j, (tr, _)) in reference.entries.iter().enumerate() {
            if used[j] {
                continue;
            }
            let dt = (t - tr).abs();
            if dt <= max_dt && best.map_or(true, |(_, d)| dt < d) {
                best = Some((j, dt));
            }
        }
        if let Some((j, _)) = best {
            used[j] = true;
            pairs.push((i, j));
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoAssociation);
    }
    Ok(pairs)
}

/// Least-squares rigid transform `T` minimizing `sum ||T e_i - r_i||^2`
/// over associated translations (Kabsch with reflection fix).
pub fn align_trajectories(est: &[Vector3<f64>], reference: &[Vector3<f64>]) -> Result<Pose> {
    if est.len() != reference.len() || est.is_empty() {
        return Err(Error::EmptyInput("alignment point sets"));
    }
    let n = est.len() as f64;
    let ce = est.iter().sum::<Vector3<f64>>() / n;
    let cr = reference.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (e, r) in est.iter().zip(reference.iter()) {
        h += (e - ce) * (r - cr).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.ok_or(Error::SingularSystem)?;
    let vt = svd.v_t.ok_or(Error::SingularSystem)?;
    let mut rot = vt.transpose() * u.transpose();
    if rot.determinant() < 0.0 {
        let mut v = vt.transpose();
        v.column_mut(2).neg_mut();
        rot = v * u.transpose();
    }
    let t = cr - rot * ce;
    Ok(Pose::new(rot, t))
}

/// Per-pose absolute translational errors after association (and optional
/// alignment), in estimate order.
pub fn ape_series(
    est: &Trajectory,
    reference: &Trajectory,
    max_dt: f64,
    align: bool,
) -> Result<Vec<f64>> {
    let pairs = associate(est, reference, max_dt)?;
    let e: Vec<Vector3<f64>> = pairs
        .iter()
        .map(|&(i, _)| est.entries[i].1.translation)
        .collect();
    let r: Vec<Vector3<f64>> = pairs
        .iter()
        .map(|&(_, j)| reference.entries[j].1.translation)
        .collect();
    let transform = if align {
        align_trajectories(&e, &r)?
    } else {
        Pose::identity()
    };
    Ok(e.iter()
        .zip(r.iter())
        .map(|(e, r)| (transform.apply(e) - r).norm())
        .collect())
}

pub fn ape(est: &Trajectory, reference: &Trajectory, max_dt: f64, align: bool) -> Result<ErrorStats> {
    ErrorStats::from_series(&ape_series(est, reference, max_dt, align)?)
}

/// Per-step relative translational errors over a delta of `delta` associated
/// frames.
pub fn rpe_series(
    est: &Trajectory,
    reference: &Trajectory,
    max_dt: f64,
    delta: usize,
) -> Result<Vec<f64>> {
    if delta == 0 {
        return Err(Error::Contract("rpe delta must be positive".into()));
    }
    let pairs = associate(est, reference, max_dt)?;
    if pairs.len() <= delta {
        return Err(Error::InsufficientData("rpe needs more than delta associated pairs"));
    }
    let mut series = Vec::with_capacity(pairs.len() - delta);
    for w in 0..pairs.len() - delta {
        let (i0, j0) = pairs[w];
        let (i1, j1) = pairs[w + delta];
        let rel_ref = reference.entries[j0].1.inverse().compose(&reference.entries[j1].1);
        let rel_est = est.entries[i0].1.inverse().compose(&est.entries[i1].1);
        let err = rel_ref.inverse().compose(&rel_est);
        series.push(err.translation.norm());
    }
    Ok(series)
}

pub fn rpe(
    est: &Trajectory,
    reference: &Trajectory,
    max_dt: f64,
    delta: usize,
) -> Result<ErrorStats> {
    ErrorStats::from_series(&rpe_series(est, reference, max_dt, delta)?)
}
