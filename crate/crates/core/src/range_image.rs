//! Spherical projection of a scan into a 2D range image and back.
//!
//! The sensor frame is z-up with x forward. Internally the projection uses an
//! elevation-from-y parameterization, so points are permuted through a fixed
//! axis mapping `(x, y, z)_proj = (y, z, x)_sensor`. After simplification the
//! forward mapping in sensor coordinates is `theta = atan2(y, x)`,
//! `phi = asin(z / r)`, and everything downstream stays in the z-up frame.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::Point3;

const INVALID_RANGE: f64 = f64::INFINITY;
const NO_POINT: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
pub struct ProjectionConfig {
    pub width: usize,
    pub height: usize,
    pub theta_min: f64,
    pub theta_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            width: 1024,
            height: 64,
            theta_min: -PI,
            theta_max: PI,
            phi_min: -PI / 6.0,
            phi_max: PI / 6.0,
            r_min: 0.3,
            r_max: 120.0,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::Config("projection image must be at least 8x8".into()));
        }
        if self.theta_max <= self.theta_min || self.phi_max <= self.phi_min {
            return Err(Error::Config("projection angular spans must be positive".into()));
        }
        if !(self.r_min > 0.0 && self.r_min < self.r_max) {
            return Err(Error::Config("projection requires 0 < r_min < r_max".into()));
        }
        Ok(())
    }

    pub fn delta_theta(&self) -> f64 {
        (self.theta_max - self.theta_min) / self.width as f64
    }

    pub fn delta_phi(&self) -> f64 {
        (self.phi_max - self.phi_min) / self.height as f64
    }

    /// True when the azimuth span covers the full circle, enabling wrap-around.
    pub fn full_azimuth(&self) -> bool {
        ((self.theta_max - self.theta_min) - 2.0 * PI).abs() < 1e-9
    }

    /// Bin-center angles for pixel (u, v).
    pub fn angles(&self, u: usize, v: usize) -> (f64, f64) {
        (
            self.theta_min + (u as f64 + 0.5) * self.delta_theta(),
            self.phi_min + (v as f64 + 0.5) * self.delta_phi(),
        )
    }

    /// Unit ray direction through the center of pixel (u, v), sensor frame.
    pub fn ray_direction(&self, u: usize, v: usize) -> Point3 {
        let (theta, phi) = self.angles(u, v);
        Point3::new(
            phi.cos() * theta.cos(),
            phi.cos() * theta.sin(),
            phi.sin(),
        )
    }
}

#[derive(Clone, Debug)]
pub struct RangeImage {
    ranges: Vec<f64>,
    point_index: Vec<u32>,
    pub config: ProjectionConfig,
}

impl RangeImage {
    pub fn width(&self) -> usize {
        self.config.width
    }

    pub fn height(&self) -> usize {
        self.config.height
    }

    fn idx(&self, u: usize, v: usize) -> usize {
        v * self.config.width + u
    }

    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        u < self.width() && v < self.height() && self.ranges[self.idx(u, v)].is_finite()
    }

    pub fn range(&self, u: usize, v: usize) -> Option<f64> {
        if self.is_valid(u, v) {
            Some(self.ranges[self.idx(u, v)])
        } else {
            None
        }
    }

    /// Index of the source-cloud point stored at this pixel.
    pub fn point_index(&self, u: usize, v: usize) -> Option<usize> {
        if self.is_valid(u, v) {
            Some(self.point_index[self.idx(u, v)] as usize)
        } else {
            None
        }
    }

    /// Horizontal neighbor with azimuth wrap on full-circle images.
    pub fn neighbor_u(&self, u: usize, offset: isize) -> Option<usize> {
        let w = self.width() as isize;
        let raw = u as isize + offset;
        if self.config.full_azimuth() {
            Some(raw.rem_euclid(w) as usize)
        } else if (0..w).contains(&raw) {
            Some(raw as usize)
        } else {
            None
        }
    }

    /// Reconstructs the 3D point of a valid pixel from its stored range and
    /// bin-center angles (sensor frame).
    pub fn unproject(&self, u: usize, v: usize) -> Result<Point3> {
        let r = self
            .range(u, v)
            .ok_or(Error::InvalidPixel { u, v })?;
        Ok(self.point_at_range(u, v, r))
    }

    /// Point at an arbitrary range along the pixel's bin-center ray.
    pub fn point_at_range(&self, u: usize, v: usize, r: f64) -> Point3 {
        r * self.config.ray_direction(u, v)
    }
}

/// Projects a cloud into a range image. Pixel collisions keep the nearer
/// point; out-of-gate ranges and out-of-image angles are dropped.
pub fn project(cloud: &[Point3], config: &ProjectionConfig) -> Result<RangeImage> {
    config.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyInput("project: empty cloud"));
    }
    let n = config.width * config.height;
    let mut image = RangeImage {
        ranges: vec![INVALID_RANGE; n],
        point_index: vec![NO_POINT; n],
        config: *config,
    };
    let dt = config.delta_theta();
    let dp = config.delta_phi();
    let full = config.full_azimuth();
    for (i, p) in cloud.iter().enumerate() {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            continue;
        }
        let r = p.norm();
        if r < config.r_min || r > config.r_max {
            continue;
        }
        let theta = p.y.atan2(p.x);
        let phi = (p.z / r).clamp(-1.0, 1.0).asin();
        // Floor binning pairs with bin-center reconstruction: cell u covers
        // [u*dt, (u+1)*dt) so the quantization error stays within half a bin.
        let uf = ((theta - config.theta_min) / dt).floor();
        let vf = ((phi - config.phi_min) / dp).floor();
        let u = if full {
            (uf as i64).rem_euclid(config.width as i64) as usize
        } else if uf >= 0.0 && uf < config.width as f64 {
            uf as usize
        } else {
            continue;
        };
        if vf < 0.0 || vf >= config.height as f64 {
            continue;
        }
        let v = vf as usize;
        let slot = v * config.width + u;
        // Min-reduction: keep the nearer point, tie-break on point index so
        // the result does not depend on input order.
        let prev = image.ranges[slot];
        if r < prev || (r == prev && (i as u32) < image.point_index[slot]) {
            image.ranges[slot] = r;
            image.point_index[slot] = i as u32;
        }
    }
    Ok(image)
}
