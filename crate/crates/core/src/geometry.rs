//! Parabolic metric, past-looking balls, nested cylinders and the space-time
//! grids every field lives on.
//!
//! Distances follow the heat-operator scaling d(z, z̄) = max{|x − x̄|, √|t − t̄|},
//! so a ball of radius R spans R in space and R² in time. The unit cylinder
//! is (0,1) × (−1,1)^d and the inner cylinder at offset R is
//! (R², 1] × (−(1−R), 1−R)^d.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A space-time point z = (t, x) with x ∈ R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub t: f64,
    pub x: Vec<f64>,
}

impl Point {
    pub fn new(t: f64, x: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidParameter("point needs d >= 1".into()));
        }
        if !t.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("point coordinates must be finite".into()));
        }
        Ok(Point { t, x })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Parabolic distance max{|x1 − x2|, √|t1 − t2|}.
pub fn parabolic_distance(z1: &Point, z2: &Point) -> Result<f64> {
    if z1.dim() != z2.dim() {
        return Err(Error::DimensionMismatch(z1.dim(), z2.dim()));
    }
    let space: f64 = z1
        .x
        .iter()
        .zip(&z2.x)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(space.max((z1.t - z2.t).abs().sqrt()))
}

/// Metric ball restricted to the strict past of its center.
#[derive(Debug, Clone)]
pub struct ParabolicBall {
    pub center: Point,
    pub radius: f64,
}

impl ParabolicBall {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if radius < 0.0 || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!("ball radius {radius} must be >= 0")));
        }
        Ok(ParabolicBall { center, radius })
    }

    /// True iff d(z, center) < radius and t_z < t_center.
    pub fn contains(&self, z: &Point) -> Result<bool> {
        let d = parabolic_distance(&self.center, z)?;
        Ok(d < self.radius && z.t < self.center.t)
    }
}

/// Inner cylinder P_R = (R², 1] × (−(1−R), 1−R)^d at parabolic offset R
/// from the boundary of the unit cylinder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub r: f64,
    pub d: usize,
}

impl Cylinder {
    pub fn new(r: f64, d: usize) -> Result<Self> {
        if !(0.0..=0.5).contains(&r) {
            return Err(Error::OffsetOutOfRange(r));
        }
        if d == 0 {
            return Err(Error::InvalidParameter("cylinder needs d >= 1".into()));
        }
        Ok(Cylinder { r, d })
    }

    /// Continuum membership (top time slice included).
    pub fn contains(&self, z: &Point) -> Result<bool> {
        if z.dim() != self.d {
            return Err(Error::DimensionMismatch(z.dim(), self.d));
        }
        let half = 1.0 - self.r;
        Ok(z.t > self.r * self.r && z.t <= 1.0 && z.x.iter().all(|&xi| xi.abs() < half))
    }
}

/// Uniform parabolic lattice over [0,1] × [−1,1]^d with dt = dx².
///
/// nx is the number of points per spatial axis including both endpoints;
/// nx − 1 spatial cells of width dx = 2/(nx−1) and (nx−1)²/4 time steps of
/// dt = dx² cover the unit cylinder exactly. nx must be odd so that 1/dt is
/// an integer and x = 0 is a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    pub d: usize,
    pub nx: usize,
    pub dx: f64,
    pub dt: f64,
}

impl SpaceTimeGrid {
    pub fn new(d: usize, nx: usize) -> Result<Self> {
        if d == 0 || d > 3 {
            return Err(Error::InvalidGrid(format!("d = {d} outside 1..=3")));
        }
        if nx < 5 || nx % 2 == 0 {
            return Err(Error::InvalidGrid(format!("nx = {nx} must be odd and >= 5")));
        }
        let dx = 2.0 / (nx - 1) as f64;
        Ok(SpaceTimeGrid { d, nx, dx, dt: dx * dx })
    }

    /// Desk-scale default: ~4e6 space-time nodes per dimension budget.
    pub fn default_desk(d: usize) -> Result<Self> {
        match d {
            1 => Self::new(1, 257),
            2 => Self::new(2, 65),
            3 => Self::new(3, 17),
            _ => Err(Error::InvalidGrid(format!("d = {d} outside 1..=3"))),
        }
    }

    /// Number of time slices covering [0, 1].
    pub fn nt(&self) -> usize {
        (self.nx - 1) * (self.nx - 1) / 4 + 1
    }

    pub fn t_of(&self, i: i64) -> f64 {
        i as f64 * self.dt
    }

    pub fn x_of(&self, j: i64) -> f64 {
        -1.0 + j as f64 * self.dx
    }

    /// Total nodes of the base cylinder grid.
    pub fn node_count(&self) -> usize {
        self.nt() * self.nx.pow(self.d as u32)
    }
}

/// A product box of lattice indices: time slices t_lo..=t_hi, and per spatial
/// axis j ∈ x_lo..=x_hi (cylinders are symmetric so one range serves all axes).
/// Indices are absolute lattice coordinates: t = i·dt, x = −1 + j·dx.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridBox {
    pub d: usize,
    pub t_lo: i64,
    pub t_hi: i64,
    pub x_lo: i64,
    pub x_hi: i64,
}

impl GridBox {
    pub fn is_empty(&self) -> bool {
        self.t_lo > self.t_hi || self.x_lo > self.x_hi
    }

    pub fn len(&self) -> usize {
        if self.is_empty() {
            return 0;
        }
        let nt = (self.t_hi - self.t_lo + 1) as usize;
        let nx = (self.x_hi - self.x_lo + 1) as usize;
        nt * nx.pow(self.d as u32)
    }

    pub fn contains_index(&self, ti: i64, xi: &[i64]) -> bool {
        ti >= self.t_lo
            && ti <= self.t_hi
            && xi.iter().all(|&j| j >= self.x_lo && j <= self.x_hi)
    }

    /// True iff every index of `self` lies in `other`.
    pub fn subset_of(&self, other: &GridBox) -> bool {
        self.is_empty()
            || (self.t_lo >= other.t_lo
                && self.t_hi <= other.t_hi
                && self.x_lo >= other.x_lo
                && self.x_hi <= other.x_hi)
    }
}

/// Grid indices of the inner cylinder P_R.
///
/// Open boundaries become strict inequalities with half-cell tolerance, so
/// the decision threshold never sits within dx/2 (dt/2 in time) of a grid
/// coordinate: t > R² + dt/2, |x| < 1 − R − dx/2, t <= 1 + dt/2.
pub fn cylinder_region(r: f64, grid: &SpaceTimeGrid) -> Result<GridBox> {
    if !(0.0..=0.5).contains(&r) {
        return Err(Error::OffsetOutOfRange(r));
    }
    let t_lo = (r * r / grid.dt + 0.5).floor() as i64 + 1;
    let t_hi = (grid.nt() - 1) as i64;
    // |x| < 1 − R − dx/2 with x = −1 + j·dx
    let x_lo = (r / grid.dx + 0.5).floor() as i64 + 1;
    let x_hi = ((2.0 - r) / grid.dx - 0.5).ceil() as i64 - 1;
    Ok(GridBox { d: grid.d, t_lo, t_hi, x_lo, x_hi })
}
