//! Observability analysis of the translational Hessian block.
//!
//! For point-to-plane residuals the translational Jacobian row is the normal
//! itself, so the block is the sum of normal outer products. Its eigenvalues
//! measure how well each direction is constrained; projecting each normal
//! into the eigenbasis and scaling by the normalized eigenvalues gives a
//! per-point scalar weight in [0, 1].

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::sym_eig3;

#[derive(Clone, Debug)]
pub struct DegeneracyReport {
    pub hessian_tt: Matrix3<f64>,
    /// Descending eigenvalues of the translational block.
    pub eigenvalues: Vector3<f64>,
    pub eigenvectors: Matrix3<f64>,
    /// Eigenvalues divided by the largest one.
    pub normalized: Vector3<f64>,
    /// One weight per input normal, in order.
    pub weights: Vec<f64>,
}

impl DegeneracyReport {
    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean_weight(&self) -> f64 {
        if self.weights.is_empty() {
            return 0.0;
        }
        self.weights.iter().sum::<f64>() / self.weights.len() as f64
    }
}

/// Sum of outer products `n n^T` over the planar constraint normals.
pub fn build_translational_hessian(normals: &[Vector3<f64>]) -> Result<Matrix3<f64>> {
    if normals.is_empty() {
        return Err(Error::EmptyInput("translational hessian needs normals"));
    }
    let mut h = Matrix3::zeros();
    for n in normals {
        h += n * n.transpose();
    }
    Ok(h)
}

/// Per-point observability weights from the eigen-analysis of the
/// translational Hessian block.
pub fn compute_point_weights(normals: &[Vector3<f64>]) -> Result<DegeneracyReport> {
    let h = build_translational_hessian(normals)?;
    let (eigenvalues, eigenvectors) = sym_eig3(&h)?;
    let lambda_max = eigenvalues[0];
    if lambda_max <= 0.0 {
        return Err(Error::Contract(
            "translational Hessian has no positive eigenvalue".into(),
        ));
    }
    let normalized = eigenvalues / lambda_max;
    let weights = normals
        .iter()
        .map(|n| {
            // Row of |I_t V_t| scaled by the normalized eigenvalues.
            let proj = eigenvectors.transpose() * n;
            let scaled = Vector3::new(
                proj.x.abs() * normalized.x,
                proj.y.abs() * normalized.y,
                proj.z.abs() * normalized.z,
            );
            scaled.norm().min(1.0)
        })
        .collect();
    Ok(DegeneracyReport {
        hessian_tt: h,
        eigenvalues,
        eigenvectors,
        normalized,
        weights,
    })
}
