//! Weighted multi-metric ICP: degeneracy-weighted point-to-plane residuals
//! combined with point-to-point residuals under an adaptive balance factor.
//!
//! Parameter ordering is rotation-first, so the 6x6 system has the rotation
//! block in the upper left. The pose update is left-multiplicative:
//! `pose <- exp(step) * pose`.

use nalgebra::{Matrix3, Matrix6, Vector6};

use crate::classify::LabeledCloud;
use crate::degeneracy::{compute_point_weights, DegeneracyReport};
use crate::error::{Error, Result};
use crate::geometry::{se3_exp, skew, solve_spd6, Pose, Twist};
use crate::voxel_map::{CorrespondenceSet, VoxelMap};

/// Per-iteration shrink of the correspondence gate, floored at a third of
/// the initial value.
const MAX_DIST_SHRINK: f64 = 0.9;
const MAX_DIST_FLOOR_FRACTION: f64 = 1.0 / 3.0;

#[derive(Clone, Copy, Debug)]
pub struct RegistrationParams {
    pub max_iterations: usize,
    /// Convergence threshold on the twist-step norm.
    pub convergence_eps: f64,
    /// Initial correspondence distance gate in meters.
    pub max_dist: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Levenberg damping added to the normal-equation diagonal.
    pub lm_damping: f64,
    /// When false, all degeneracy weights are forced to 1 (baseline mode).
    pub degeneracy_weights: bool,
    /// When set, overrides the adaptive planar/non-planar balance.
    pub fixed_alpha: Option<f64>,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        RegistrationParams {
            max_iterations: 50,
            convergence_eps: 1e-4,
            max_dist: 1.5,
            alpha_min: 0.1,
            alpha_max: 0.9,
            lm_damping: 1e-6,
            degeneracy_weights: true,
            fixed_alpha: None,
        }
    }
}

impl RegistrationParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::Config("icp.max_iterations must be >= 1".into()));
        }
        if !(0.0 <= self.alpha_min && self.alpha_min <= self.alpha_max && self.alpha_max <= 1.0) {
            return Err(Error::Config(
                "icp alpha clamp must satisfy 0 <= alpha_min <= alpha_max <= 1".into(),
            ));
        }
        if self.max_dist <= 0.0 {
            return Err(Error::Config("icp.max_dist must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RegistrationReport {
    pub pose: Pose,
    pub iterations: usize,
    pub rms_planar: f64,
    pub rms_point: f64,
    pub n_planar: usize,
    pub n_point: usize,
    pub alpha: f64,
    pub degeneracy: Option<DegeneracyReport>,
    pub converged: bool,
    /// Gauss-Newton Hessian of the last iteration (loop-edge information).
    pub hessian: Matrix6<f64>,
}

/// Balance factor from live correspondence counts, clamped to the configured
/// interval.
pub fn adaptive_alpha(n_pl: usize, n_po: usize, params: &RegistrationParams) -> Result<f64> {
    let total = n_pl + n_po;
    if total == 0 {
        return Err(Error::EmptyInput("adaptive_alpha: no correspondences"));
    }
    Ok((n_pl as f64 / total as f64).clamp(params.alpha_min, params.alpha_max))
}

/// Assembles the normal equations of the weighted objective at `pose`.
///
/// Planar pairs contribute one row `[(p' x n)^T, n^T]` with weight
/// `alpha * w`; point pairs contribute three rows `[-[p']x, I]` with weight
/// `1 - alpha`. Returns `(H, b, cost)`.
pub fn build_system(
    corr: &CorrespondenceSet,
    alpha: f64,
    pose: &Pose,
) -> Result<(Matrix6<f64>, Vector6<f64>, f64)> {
    if corr.is_empty() {
        return Err(Error::EmptyInput("build_system: empty correspondence set"));
    }
    let mut h = Matrix6::zeros();
    let mut b = Vector6::zeros();
    let mut cost = 0.0;
    for pair in &corr.planar {
        let p = pose.apply(&pair.source);
        let e = pair.normal.dot(&(p - pair.target));
        let w = alpha * pair.weight;
        let mut j = Vector6::zeros();
        let rot = p.cross(&pair.normal);
        j.fixed_rows_mut::<3>(0).copy_from(&rot);
        j.fixed_rows_mut::<3>(3).copy_from(&pair.normal);
        h += w * j * j.transpose();
        b += w * j * e;
        cost += w * e * e;
    }
    for pair in &corr.nonplanar {
        let p = pose.apply(&pair.source);
        let e = p - pair.target;
        let w = (1.0 - alpha) * pair.weight;
        // J = [-[p']x | I], accumulated blockwise.
        let s = skew(&p);
        let jr = -s; // rotation block
        let h_rr = jr.transpose() * jr;
        let h_rt = jr.transpose(); // times identity
        let mut h_add = Matrix6::zeros();
        h_add.fixed_view_mut::<3, 3>(0, 0).copy_from(&h_rr);
        h_add.fixed_view_mut::<3, 3>(0, 3).copy_from(&h_rt);
        h_add.fixed_view_mut::<3, 3>(3, 0).copy_from(&h_rt.transpose());
        h_add
            .fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&Matrix3::identity());
        h += w * h_add;
        let g_rot = jr.transpose() * e;
        for i in 0..3 {
            b[i] += w * g_rot[i];
            b[i + 3] += w * e[i];
        }
        cost += w * e.norm_squared();
    }
    Ok((h, b, cost))
}

/// Iterative registration of a labeled scan against the map.
pub fn register(
    source: &LabeledCloud,
    map: &VoxelMap,
    guess: &Pose,
    params: &RegistrationParams,
) -> Result<(Pose, RegistrationReport)> {
    params.validate()?;
    if source.is_empty() {
        return Err(Error::EmptyInput("register: empty source cloud"));
    }
    if map.is_empty() {
        return Err(Error::EmptyInput("register: empty map"));
    }
    let mut pose = *guess;
    let mut max_dist = params.max_dist;
    let floor = params.max_dist * MAX_DIST_FLOOR_FRACTION;
    let mut converged = false;
    let mut iterations = 0;
    let mut last: Option<(CorrespondenceSet, f64, Option<DegeneracyReport>, Matrix6<f64>)> = None;
    for _ in 0..params.max_iterations {
        iterations += 1;
        let mut corr = map.find_correspondences(source, &pose, max_dist);
        if corr.is_empty() {
            return Err(Error::RegistrationFailure {
                reason: format!("no correspondences within {max_dist:.3} m"),
                last_pose: pose,
            });
        }
        let degeneracy = if params.degeneracy_weights && !corr.planar.is_empty() {
            let normals: Vec<_> = corr.planar.iter().map(|p| p.normal).collect();
            let report = compute_point_weights(&normals)?;
            for (pair, w) in corr.planar.iter_mut().zip(report.weights.iter()) {
                pair.weight = *w;
            }
            Some(report)
        } else {
            None
        };
        let alpha = match params.fixed_alpha {
            Some(a) => a,
            None => adaptive_alpha(corr.planar.len(), corr.nonplanar.len(), params)?,
        };
        let (h, b, _cost) = build_system(&corr, alpha, &pose)?;
        let step: Twist = solve_spd6(&h, &b, params.lm_damping)?;
        pose = se3_exp(&step).compose(&pose);
        last = Some((corr, alpha, degeneracy, h));
        max_dist = (max_dist * MAX_DIST_SHRINK).max(floor);
        if step.norm() < params.convergence_eps {
            converged = true;
            break;
        }
    }
    let (corr, alpha, degeneracy, hessian) = last.expect("at least one iteration ran");
    let rms = |sq_sum: f64, n: usize| {
        if n == 0 {
            0.0
        } else {
            (sq_sum / n as f64).sqrt()
        }
    };
    let planar_sq: f64 = corr
        .planar
        .iter()
        .map(|p| {
            let e = p.normal.dot(&(pose.apply(&p.source) - p.target));
            e * e
        })
        .sum();
    let point_sq: f64 = corr
        .nonplanar
        .iter()
        .map(|p| (pose.apply(&p.source) - p.target).norm_squared())
        .sum();
    let report = RegistrationReport {
        pose,
        iterations,
        rms_planar: rms(planar_sq, corr.planar.len()),
        rms_point: rms(point_sq, corr.nonplanar.len()),
        n_planar: corr.planar.len(),
        n_point: corr.nonplanar.len(),
        alpha,
        degeneracy,
        converged,
        hessian,
    };
    Ok((pose, report))
}

/// Constant-velocity prediction from the last two poses.
pub fn predict_initial_guess(poses: &[Pose]) -> Pose {
    match poses.len() {
        0 => Pose::identity(),
        1 => poses[0],
        n => {
            let prev = &poses[n - 2];
            let last = &poses[n - 1];
            last.compose(&prev.inverse().compose(last))
        }
    }
}
