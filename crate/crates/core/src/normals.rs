//! Per-pixel surface normals from central differences on the range image.
//!
//! Tangents span the four axis neighbors; the cross product gives the normal,
//! which is then oriented toward the sensor. Pixels next to missing data,
//! degenerate tangents, or range discontinuities are marked invalid instead
//! of producing a junk direction.

use nalgebra::Vector3;

use crate::geometry::Point3;
use crate::range_image::RangeImage;

const DEGENERATE_CROSS: f64 = 1e-10;

#[derive(Clone, Copy, Debug)]
pub struct NormalConfig {
    /// Absolute neighbor range-jump gate in meters.
    pub discontinuity_abs: f64,
    /// Relative range-jump gate as a fraction of the center range.
    pub discontinuity_rel: f64,
}

impl Default for NormalConfig {
    fn default() -> Self {
        NormalConfig {
            discontinuity_abs: 0.3,
            discontinuity_rel: 0.05,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NormalMap {
    normals: Vec<Vector3<f64>>,
    valid: Vec<bool>,
    width: usize,
    height: usize,
}

impl NormalMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, u: usize, v: usize) -> Option<Vector3<f64>> {
        if u < self.width && v < self.height && self.valid[v * self.width + u] {
            Some(self.normals[v * self.width + u])
        } else {
            None
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }
}

/// Flips `n` so it faces the sensor at the origin: `n . p <= 0`.
pub fn orient_normal(n: &Vector3<f64>, p: &Point3) -> Vector3<f64> {
    if n.dot(p) > 0.0 {
        -n
    } else {
        *n
    }
}

/// Computes a unit normal for every pixel whose four axis neighbors are valid
/// and pass the discontinuity gate. Never fails; bad pixels come back invalid.
pub fn compute_normals(image: &RangeImage, config: &NormalConfig) -> NormalMap {
    let w = image.width();
    let h = image.height();
    let mut map = NormalMap {
        normals: vec![Vector3::zeros(); w * h],
        valid: vec![false; w * h],
        width: w,
        height: h,
    };
    for v in 0..h {
        for u in 0..w {
            let Some(r_c) = image.range(u, v) else { continue };
            if v == 0 || v + 1 >= h {
                continue; // no one-sided differences at the border
            }
            let (Some(ul), Some(ur)) = (image.neighbor_u(u, -1), image.neighbor_u(u, 1)) else {
                continue;
            };
            let neighbors = [(ul, v), (ur, v), (u, v - 1), (u, v + 1)];
            let gate = config.discontinuity_abs.max(config.discontinuity_rel * r_c);
            let mut ranges = [0.0; 4];
            let mut ok = true;
            for (k, &(nu, nv)) in neighbors.iter().enumerate() {
                match image.range(nu, nv) {
                    Some(r) if (r - r_c).abs() <= gate => ranges[k] = r,
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                continue;
            }
            let p_left = image.point_at_range(ul, v, ranges[0]);
            let p_right = image.point_at_range(ur, v, ranges[1]);
            let p_down = image.point_at_range(u, v - 1, ranges[2]);
            let p_up = image.point_at_range(u, v + 1, ranges[3]);
            let t_u = p_right - p_left;
            let t_v = p_up - p_down;
            let cross = t_u.cross(&t_v);
            let norm = cross.norm();
            if norm < DEGENERATE_CROSS {
                continue;
            }
            let center = image.point_at_range(u, v, r_c);
            let n = orient_normal(&(cross / norm), &center);
            map.normals[v * w + u] = n;
            map.valid[v * w + u] = true;
        }
    }
    map
}
