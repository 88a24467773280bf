//! Scalar fields on (possibly extended) parabolic lattices.
//!
//! A field stores one f64 per lattice node over a box extent. Extents are
//! described in absolute lattice indices (t = i·dt, x = −1 + j·dx), so a
//! field can extend past the unit cylinder: noise realizations carry a
//! parabolic support margin around P_0 that mollification consumes.

use crate::error::{Error, Result};
use crate::geometry::{GridBox, SpaceTimeGrid};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: SpaceTimeGrid,
    /// Absolute time index of the first stored slice.
    pub t0: i64,
    pub nt: usize,
    /// Absolute spatial index of the first stored node (per axis).
    pub x0: i64,
    pub nx: usize,
    /// Parabolic width by which the extent exceeds the region the field is
    /// meant for; each mollification at scale T consumes T of it.
    pub margin: f64,
    values: Vec<f64>,
}

impl ScalarField {
    /// Zero field on the base cylinder grid [0,1] × [−1,1]^d.
    pub fn zeros(grid: &SpaceTimeGrid) -> Self {
        Self::zeros_with_margin(grid, 0.0).expect("zero margin is always valid")
    }

    /// Zero field covering P_0 + B(0, margin): the time extent grows into the
    /// past by margin² and each spatial side by margin.
    pub fn zeros_with_margin(grid: &SpaceTimeGrid, margin: f64) -> Result<Self> {
        if !(0.0..=4.0).contains(&margin) {
            return Err(Error::InvalidParameter(format!("margin {margin} outside [0, 4]")));
        }
        let mt = (margin * margin / grid.dt - 1e-9).ceil().max(0.0) as i64;
        let mx = (margin / grid.dx - 1e-9).ceil().max(0.0) as i64;
        let nt = grid.nt() as i64 + mt;
        let nx = grid.nx as i64 + 2 * mx;
        Self::with_extent(grid, -mt, nt as usize, -mx, nx as usize, margin)
    }

    /// Field over an explicit index box (advanced constructor; the schauder
    /// diagnostic lives on a past ball rather than the unit cylinder).
    pub fn with_extent(
        grid: &SpaceTimeGrid,
        t0: i64,
        nt: usize,
        x0: i64,
        nx: usize,
        margin: f64,
    ) -> Result<Self> {
        if grid.d > 2 {
            return Err(Error::Unsupported("fields support d <= 2".into()));
        }
        if nt == 0 || nx == 0 {
            return Err(Error::InvalidGrid("empty field extent".into()));
        }
        let n = nt * nx.pow(grid.d as u32);
        Ok(ScalarField { grid: *grid, t0, nt, x0, nx, margin, values: vec![0.0; n] })
    }

    /// Evaluate f(t, x) at every node of the extent.
    pub fn from_fn<F: Fn(f64, &[f64]) -> f64>(
        grid: &SpaceTimeGrid,
        margin: f64,
        f: F,
    ) -> Result<Self> {
        let mut field = Self::zeros_with_margin(grid, margin)?;
        field.fill_with(&f);
        Ok(field)
    }

    pub fn fill_with<F: Fn(f64, &[f64]) -> f64>(&mut self, f: &F) {
        let d = self.grid.d;
        let (nx, x0, t0) = (self.nx, self.x0, self.t0);
        let (dt, dx) = (self.grid.dt, self.grid.dx);
        match d {
            1 => {
                for ti in 0..self.nt {
                    let t = (t0 + ti as i64) as f64 * dt;
                    for j in 0..nx {
                        let x = -1.0 + (x0 + j as i64) as f64 * dx;
                        self.values[ti * nx + j] = f(t, &[x]);
                    }
                }
            }
            2 => {
                for ti in 0..self.nt {
                    let t = (t0 + ti as i64) as f64 * dt;
                    for j1 in 0..nx {
                        let x1 = -1.0 + (x0 + j1 as i64) as f64 * dx;
                        for j2 in 0..nx {
                            let x2 = -1.0 + (x0 + j2 as i64) as f64 * dx;
                            self.values[(ti * nx + j1) * nx + j2] = f(t, &[x1, x2]);
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
    }

    pub fn d(&self) -> usize {
        self.grid.d
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Extent as an absolute index box.
    pub fn extent(&self) -> GridBox {
        GridBox {
            d: self.grid.d,
            t_lo: self.t0,
            t_hi: self.t0 + self.nt as i64 - 1,
            x_lo: self.x0,
            x_hi: self.x0 + self.nx as i64 - 1,
        }
    }

    pub fn covers(&self, b: &GridBox) -> bool {
        b.subset_of(&self.extent())
    }

    #[inline]
    pub fn flat_index(&self, ti: i64, xj: &[i64]) -> usize {
        let tl = (ti - self.t0) as usize;
        debug_assert!(tl < self.nt, "time index {ti} outside extent");
        match self.grid.d {
            1 => {
                let j = (xj[0] - self.x0) as usize;
                debug_assert!(j < self.nx);
                tl * self.nx + j
            }
            _ => {
                let j1 = (xj[0] - self.x0) as usize;
                let j2 = (xj[1] - self.x0) as usize;
                debug_assert!(j1 < self.nx && j2 < self.nx);
                (tl * self.nx + j1) * self.nx + j2
            }
        }
    }

    #[inline]
    pub fn get(&self, ti: i64, xj: &[i64]) -> f64 {
        self.values[self.flat_index(ti, xj)]
    }

    #[inline]
    pub fn set(&mut self, ti: i64, xj: &[i64], v: f64) {
        let idx = self.flat_index(ti, xj);
        self.values[idx] = v;
    }

    /// Stored slice at absolute time index ti (d=1: nx values; d=2: nx² values).
    pub fn time_slice(&self, ti: i64) -> &[f64] {
        let tl = (ti - self.t0) as usize;
        let w = self.nx.pow(self.grid.d as u32);
        &self.values[tl * w..(tl + 1) * w]
    }

    pub fn time_slice_mut(&mut self, ti: i64) -> &mut [f64] {
        let tl = (ti - self.t0) as usize;
        let w = self.nx.pow(self.grid.d as u32);
        &mut self.values[tl * w..(tl + 1) * w]
    }

    /// Pointwise difference on the shared grid (v = u − w of the remainder
    /// decomposition). Extents must match.
    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        if self.grid != other.grid || self.extent() != other.extent() {
            return Err(Error::InvalidGrid("field extents differ".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a -= b;
        }
        Ok(out)
    }

    pub fn scale(&mut self, k: f64) {
        for v in &mut self.values {
            *v *= k;
        }
    }

    /// Restrict to the base cylinder extent, dropping any margin.
    pub fn crop_to_base(&self) -> ScalarField {
        let grid = self.grid;
        let mut out = ScalarField::zeros(&grid);
        let nt = grid.nt();
        match grid.d {
            1 => {
                for ti in 0..nt as i64 {
                    for j in 0..grid.nx as i64 {
                        out.set(ti, &[j], self.get(ti, &[j]));
                    }
                }
            }
            _ => {
                for ti in 0..nt as i64 {
                    for j1 in 0..grid.nx as i64 {
                        for j2 in 0..grid.nx as i64 {
                            out.set(ti, &[j1, j2], self.get(ti, &[j1, j2]));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Seeded band-limited test field: a short cosine series in t and x with
/// frequencies up to max_freq, normalized to unit sup bound on coefficients.
pub fn band_limited(
    grid: &SpaceTimeGrid,
    margin: f64,
    n_modes: usize,
    max_freq: f64,
    seed: u64,
) -> Result<ScalarField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(f64, f64, f64, f64, f64)> = (0..n_modes)
        .map(|_| {
            (
                rng.gen_range(-1.0..1.0) / n_modes as f64,
                rng.gen_range(0.0..max_freq),
                rng.gen_range(0.0..max_freq * max_freq),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    ScalarField::from_fn(grid, margin, |t, x| {
        let xs: f64 = x.iter().sum();
        modes
            .iter()
            .map(|&(a, kx, kt, px, pt)| a * (kx * xs + px).cos() * (kt * t + pt).cos())
            .sum()
    })
}
