//! SE(3) pose algebra and the small dense linear algebra used everywhere else.
//!
//! Twist convention: rotational part first (rows 0..3), translational part
//! second (rows 3..6). This matches the block layout of the 6x6 Hessian with
//! the rotation block in the upper left.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;
pub type Twist = Vector6<f64>;

const ORTHO_DRIFT_TOL: f64 = 1e-9;
const SMALL_ANGLE: f64 = 1e-8;

/// Rigid-body transform: `p -> R * p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Pose::new(Matrix3::identity(), t)
    }

    /// Rotation about +z by `angle` radians.
    pub fn from_yaw(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Pose::new(
            Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            Vector3::zeros(),
        )
    }

    /// Applies `other` then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let mut rotation = self.rotation * other.rotation;
        if ortho_drift(&rotation) > ORTHO_DRIFT_TOL {
            rotation = orthonormalize(&rotation);
        }
        Pose {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    /// Rotates a direction vector without translating it.
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn rotation_angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }
}

fn ortho_drift(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).norm()
}

/// Nearest rotation matrix by polar decomposition.
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut m = u * vt;
    if m.determinant() < 0.0 {
        let mut u_fixed = u;
        u_fixed.column_mut(2).neg_mut();
        m = u_fixed * vt;
    }
    m
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Exponential map from a twist (rotation first) to a pose.
pub fn se3_exp(xi: &Twist) -> Pose {
    let omega = Vector3::new(xi[0], xi[1], xi[2]);
    let rho = Vector3::new(xi[3], xi[4], xi[5]);
    let theta = omega.norm();
    let w = skew(&omega);
    let (rotation, v) = if theta < SMALL_ANGLE {
        // First-order series; higher terms are below f64 resolution here.
        (Matrix3::identity() + w, Matrix3::identity() + 0.5 * w)
    } else {
        let t2 = theta * theta;
        let a = theta.sin() / theta;
        let b = (1.0 - theta.cos()) / t2;
        let c = (theta - theta.sin()) / (t2 * theta);
        (
            Matrix3::identity() + a * w + b * (w * w),
            Matrix3::identity() + b * w + c * (w * w),
        )
    };
    Pose {
        rotation,
        translation: v * rho,
    }
}

/// Logarithm map, defined for rotation angles below pi.
pub fn se3_log(pose: &Pose) -> Result<Twist> {
    let theta = pose.rotation_angle();
    if theta > std::f64::consts::PI - 1e-6 {
        return Err(Error::DegenerateAngle);
    }
    let (omega, v_inv) = if theta < SMALL_ANGLE {
        let omega = vee(&(0.5 * (pose.rotation - pose.rotation.transpose())));
        (omega, Matrix3::identity() - 0.5 * skew(&omega))
    } else {
        let omega = theta / (2.0 * theta.sin()) * vee(&(pose.rotation - pose.rotation.transpose()));
        let w = skew(&omega);
        let t2 = theta * theta;
        let coeff = 1.0 / t2 - (1.0 + theta.cos()) / (2.0 * theta * theta.sin());
        (omega, Matrix3::identity() - 0.5 * w + coeff * (w * w))
    };
    let rho = v_inv * pose.translation;
    Ok(Twist::new(omega.x, omega.y, omega.z, rho.x, rho.y, rho.z))
}

/// Eigen-decomposition of a symmetric 3x3 matrix.
///
/// Eigenvalues are returned in descending order, eigenvectors as matching
/// columns. Each eigenvector's sign is fixed so its largest-magnitude
/// component is positive (ties resolved by the first such component). With a
/// repeated eigenvalue any orthonormal basis of the eigenspace may come back.
pub fn sym_eig3(m: &Matrix3<f64>) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-9 * scale {
        return Err(Error::Contract("sym_eig3 requires a symmetric matrix".into()));
    }
    let sym = 0.5 * (m + m.transpose());
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut values = Vector3::zeros();
    let mut vectors = Matrix3::zeros();
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).into_owned();
        let mut max_idx = 0;
        for i in 1..3 {
            if col[i].abs() > col[max_idx].abs() {
                max_idx = i;
            }
        }
        if col[max_idx] < 0.0 {
            col = -col;
        }
        vectors.set_column(dst, &col);
    }
    Ok((values, vectors))
}

/// Solves `(H + damping * I) x = -b` for a symmetric `H` (Gauss-Newton step).
pub fn solve_spd6(h: &Matrix6<f64>, b: &Vector6<f64>, damping: f64) -> Result<Twist> {
    let a = 0.5 * (h + h.transpose()) + damping * Matrix6::identity();
    if let Some(chol) = a.cholesky() {
        return Ok(chol.solve(&(-b)));
    }
    let lu = a.lu();
    let min_pivot = (0..6).map(|i| lu.u()[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if min_pivot < 1e-12 {
        return Err(Error::SingularSystem);
    }
    lu.solve(&(-b)).ok_or(Error::SingularSystem)
}
