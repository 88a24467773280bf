//! Parabolic mollification: the scaled bump kernel Ψ_T and convolution
//! against it, reading only the past within parabolic distance T.
//!
//! The kernel is the compactly-supported exponential bump in the scaled
//! variables, time-shifted so its support is the past lag window (0, T²):
//! at lag s and spatial offset y the density is
//!
//!   Ψ_T(s, y) ∝ exp(−1 / (1 − ρ²)),  ρ² = (|y|/T)² + (1 − 2s/T²)²,
//!
//! which vanishes at zero lag, at lag T² and at |y| = T, and is renormalized
//! to unit discrete mass so constants are mollified exactly. An optional
//! double-convolution shape Ψ_{T/2} ∗ Ψ_{T/2} is available behind a flag.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{GridBox, SpaceTimeGrid};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelShape {
    #[default]
    Bump,
    /// Ψ_{T/2} ∗ Ψ_{T/2}, still nonnegative, smooth, unit mass, past support.
    DoubleConvolution,
}

#[derive(Debug, Clone)]
pub struct MollifierKernel {
    pub t_scale: f64,
    pub d: usize,
    pub dx: f64,
    pub dt: f64,
    /// Time lags ks = 0..=kt, lag s = ks·dt.
    pub kt: usize,
    /// Spatial halfwidth in cells per axis.
    pub hx: usize,
    /// Discrete quadrature mass (≡ 1 after normalization).
    pub mass: f64,
    /// Density values, row-major over [ks][y1 + hx]([y2 + hx]).
    values: Vec<f64>,
}

impl MollifierKernel {
    fn stride(&self) -> usize {
        2 * self.hx + 1
    }

    #[inline]
    pub fn value(&self, ks: usize, offs: &[i64]) -> f64 {
        let w = self.stride();
        match self.d {
            1 => self.values[ks * w + (offs[0] + self.hx as i64) as usize],
            _ => {
                let a = (offs[0] + self.hx as i64) as usize;
                let b = (offs[1] + self.hx as i64) as usize;
                self.values[(ks * w + a) * w + b]
            }
        }
    }

    pub fn sup_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Cell volume dt·dx^d of the quadrature measure.
    pub fn cell(&self) -> f64 {
        self.dt * self.dx.powi(self.d as i32)
    }

    /// Discrete quadrature Σ Ψ_T · w(lag, offset) · cell for an arbitrary
    /// weight; moments and the (3.6)-style α-moment both come from this.
    pub fn weighted_sum<F: Fn(f64, &[f64]) -> f64>(&self, f: F) -> f64 {
        let w = self.stride();
        let mut acc = 0.0;
        match self.d {
            1 => {
                for ks in 0..=self.kt {
                    let s = ks as f64 * self.dt;
                    for a in 0..w {
                        let v = self.values[ks * w + a];
                        if v == 0.0 {
                            continue;
                        }
                        let y = (a as i64 - self.hx as i64) as f64 * self.dx;
                        acc += v * f(s, &[y]);
                    }
                }
            }
            _ => {
                for ks in 0..=self.kt {
                    let s = ks as f64 * self.dt;
                    for a in 0..w {
                        let y1 = (a as i64 - self.hx as i64) as f64 * self.dx;
                        for b in 0..w {
                            let v = self.values[(ks * w + a) * w + b];
                            if v == 0.0 {
                                continue;
                            }
                            let y2 = (b as i64 - self.hx as i64) as f64 * self.dx;
                            acc += v * f(s, &[y1, y2]);
                        }
                    }
                }
            }
        }
        acc * self.cell()
    }
}

fn bump(rho2: f64) -> f64 {
    if rho2 < 1.0 {
        (-1.0 / (1.0 - rho2)).exp()
    } else {
        0.0
    }
}

/// Build the discrete kernel at scale T for the given grid.
pub fn make_kernel(t_scale: f64, grid: &SpaceTimeGrid) -> Result<MollifierKernel> {
    make_kernel_shaped(t_scale, grid, KernelShape::Bump)
}

pub fn make_kernel_shaped(
    t_scale: f64,
    grid: &SpaceTimeGrid,
    shape: KernelShape,
) -> Result<MollifierKernel> {
    let min = match shape {
        KernelShape::Bump => 4.0 * grid.dx,
        KernelShape::DoubleConvolution => 8.0 * grid.dx,
    };
    if t_scale + 1e-12 < min {
        return Err(Error::ScaleBelowResolution { t: t_scale, min });
    }
    if t_scale > 1.0 + 1e-12 {
        return Err(Error::InvalidParameter(format!("kernel scale T = {t_scale} above 1")));
    }
    match shape {
        KernelShape::Bump => Ok(raw_bump_kernel(t_scale, grid)),
        KernelShape::DoubleConvolution => {
            let half = raw_bump_kernel(t_scale / 2.0, grid);
            Ok(convolve_kernels(&half, t_scale, grid))
        }
    }
}

fn raw_bump_kernel(t_scale: f64, grid: &SpaceTimeGrid) -> MollifierKernel {
    let kt = (t_scale * t_scale / grid.dt + 1e-9).floor() as usize;
    let hx = (t_scale / grid.dx + 1e-9).floor() as usize;
    let w = 2 * hx + 1;
    let n = (kt + 1) * w.pow(grid.d as u32);
    let mut values = vec![0.0; n];
    let cell = grid.dt * grid.dx.powi(grid.d as i32);
    let mut total = 0.0;
    for ks in 0..=kt {
        let s = ks as f64 * grid.dt;
        let time_part = 1.0 - 2.0 * s / (t_scale * t_scale);
        for a in 0..w {
            let y1 = (a as i64 - hx as i64) as f64 * grid.dx;
            match grid.d {
                1 => {
                    let rho2 = (y1 / t_scale).powi(2) + time_part * time_part;
                    let v = bump(rho2);
                    values[ks * w + a] = v;
                    total += v * cell;
                }
                _ => {
                    for b in 0..w {
                        let y2 = (b as i64 - hx as i64) as f64 * grid.dx;
                        let rho2 = (y1 * y1 + y2 * y2) / (t_scale * t_scale)
                            + time_part * time_part;
                        let v = bump(rho2);
                        values[(ks * w + a) * w + b] = v;
                        total += v * cell;
                    }
                }
            }
        }
    }
    for v in &mut values {
        *v /= total;
    }
    MollifierKernel { t_scale, d: grid.d, dx: grid.dx, dt: grid.dt, kt, hx, mass: 1.0, values }
}

/// Discrete self-convolution of a half-scale kernel (d = 1 path is the only
/// one the double-convolution flag is exercised on).
fn convolve_kernels(
    half: &MollifierKernel,
    t_scale: f64,
    grid: &SpaceTimeGrid,
) -> MollifierKernel {
    let kt = 2 * half.kt;
    let hx = 2 * half.hx;
    let w = 2 * hx + 1;
    let wh = 2 * half.hx + 1;
    let mut values = vec![0.0; (kt + 1) * w.pow(grid.d as u32)];
    let cell = half.cell();
    match grid.d {
        1 => {
            for ks in 0..=kt {
                for a in 0..w {
                    let mut acc = 0.0;
                    for ks1 in 0..=half.kt.min(ks) {
                        let ks2 = ks - ks1;
                        if ks2 > half.kt {
                            continue;
                        }
                        for a1 in 0..wh {
                            let a2 = a as i64 - a1 as i64;
                            if a2 < 0 || a2 >= wh as i64 {
                                continue;
                            }
                            acc += half.values[ks1 * wh + a1]
                                * half.values[ks2 * wh + a2 as usize];
                        }
                    }
                    values[ks * w + a] = acc * cell;
                }
            }
        }
        _ => {
            // d = 2 double-convolution is quartic in the footprint; the flag
            // is desk-scale d=1 machinery.
            for ks in 0..=kt {
                for a in 0..w {
                    for b in 0..w {
                        let mut acc = 0.0;
                        for ks1 in 0..=half.kt.min(ks) {
                            let ks2 = ks - ks1;
                            if ks2 > half.kt {
                                continue;
                            }
                            for a1 in 0..wh {
                                let a2 = a as i64 - a1 as i64;
                                if a2 < 0 || a2 >= wh as i64 {
                                    continue;
                                }
                                for b1 in 0..wh {
                                    let b2 = b as i64 - b1 as i64;
                                    if b2 < 0 || b2 >= wh as i64 {
                                        continue;
                                    }
                                    acc += half.values[(ks1 * wh + a1) * wh + b1]
                                        * half.values
                                            [(ks2 * wh + a2 as usize) * wh + b2 as usize];
                                }
                            }
                        }
                        values[(ks * w + a) * w + b] = acc * cell;
                    }
                }
            }
        }
    }
    let cellv = grid.dt * grid.dx.powi(grid.d as i32);
    let total: f64 = values.iter().sum::<f64>() * cellv;
    for v in &mut values {
        *v /= total;
    }
    MollifierKernel { t_scale, d: grid.d, dx: grid.dx, dt: grid.dt, kt, hx, mass: 1.0, values }
}

/// Convolved value at a single absolute node; the full footprint must lie in
/// the field extent (checked by the callers).
#[inline]
pub fn convolve_at(h: &ScalarField, k: &MollifierKernel, ti: i64, xj: &[i64]) -> f64 {
    let cell = k.cell();
    let w = k.stride();
    let mut acc = 0.0;
    match h.grid.d {
        1 => {
            let hx = k.hx as i64;
            for ks in 0..=k.kt as i64 {
                let slice = h.time_slice(ti - ks);
                let base = (xj[0] - hx - h.x0) as usize;
                let row = &k.values[(ks as usize) * w..(ks as usize + 1) * w];
                let mut s = 0.0;
                for (a, &kv) in row.iter().enumerate() {
                    if kv != 0.0 {
                        s += kv * slice[base + a];
                    }
                }
                acc += s;
            }
        }
        _ => {
            let hx = k.hx as i64;
            for ks in 0..=k.kt as i64 {
                for a in 0..w as i64 {
                    for b in 0..w as i64 {
                        let kv = k.value(ks as usize, &[a - hx, b - hx]);
                        if kv != 0.0 {
                            acc += kv * h.get(ti - ks, &[xj[0] - (a - hx), xj[1] - (b - hx)]);
                        }
                    }
                }
            }
        }
    }
    acc * cell
}

/// Full-field mollification (h)_T by direct summation over the kernel
/// footprint. The output extent shrinks by the footprint and the support
/// margin drops by T.
pub fn mollify(h: &ScalarField, t_scale: f64) -> Result<ScalarField> {
    mollify_shaped(h, t_scale, KernelShape::Bump)
}

pub fn mollify_shaped(h: &ScalarField, t_scale: f64, shape: KernelShape) -> Result<ScalarField> {
    let k = make_kernel_shaped(t_scale, &h.grid, shape)?;
    let kt = k.kt as i64;
    let hx = k.hx as i64;
    if h.nt as i64 <= kt || h.nx as i64 <= 2 * hx {
        return Err(Error::SupportMargin { need: t_scale, have: h.margin });
    }
    let mut out = ScalarField::with_extent(
        &h.grid,
        h.t0 + kt,
        h.nt - k.kt,
        h.x0 + hx,
        h.nx - 2 * k.hx,
        (h.margin - t_scale).max(0.0),
    )?;
    let (t0o, x0o, nxo, d) = (out.t0, out.x0, out.nx, h.grid.d);
    let width = nxo.pow(d as u32);
    out.values_mut()
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(tl, row)| {
            let ti = t0o + tl as i64;
            match d {
                1 => {
                    for (j, slot) in row.iter_mut().enumerate() {
                        *slot = convolve_at(h, &k, ti, &[x0o + j as i64]);
                    }
                }
                _ => {
                    for j1 in 0..nxo {
                        for j2 in 0..nxo {
                            row[j1 * nxo + j2] =
                                convolve_at(h, &k, ti, &[x0o + j1 as i64, x0o + j2 as i64]);
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// sup |(h)_T| over a region, sampling output nodes on a stride of at most
/// one eighth of the kernel radius per axis (exact direct sums at each
/// sampled node). For footprints this keeps large-T norms affordable on fine
/// grids at the price of a few-percent underestimate of the sup.
pub fn mollified_sup(
    h: &ScalarField,
    t_scale: f64,
    region: &GridBox,
    shape: KernelShape,
) -> Result<f64> {
    let k = make_kernel_shaped(t_scale, &h.grid, shape)?;
    let kt = k.kt as i64;
    let hx = k.hx as i64;
    if region.is_empty() {
        return Err(Error::EmptyRegion("mollified_sup".into()));
    }
    // the full footprint of every sampled node must lie in the extent
    let need = GridBox {
        d: region.d,
        t_lo: region.t_lo - kt,
        t_hi: region.t_hi,
        x_lo: region.x_lo - hx,
        x_hi: region.x_hi + hx,
    };
    if !h.covers(&need) {
        return Err(Error::SupportMargin { need: t_scale, have: h.margin });
    }
    let st = ((kt / 8).max(1)) as usize;
    let sx = ((hx / 8).max(1)) as usize;
    let ts = strided(region.t_lo, region.t_hi, st);
    let xs = strided(region.x_lo, region.x_hi, sx);
    let sup = ts
        .par_iter()
        .map(|&ti| {
            let mut m: f64 = 0.0;
            match h.grid.d {
                1 => {
                    for &j in &xs {
                        m = m.max(convolve_at(h, &k, ti, &[j]).abs());
                    }
                }
                _ => {
                    for &j1 in &xs {
                        for &j2 in &xs {
                            m = m.max(convolve_at(h, &k, ti, &[j1, j2]).abs());
                        }
                    }
                }
            }
            m
        })
        .reduce(|| 0.0, f64::max);
    Ok(sup)
}

fn strided(lo: i64, hi: i64, step: usize) -> Vec<i64> {
    let mut v: Vec<i64> = (lo..=hi).step_by(step).collect();
    if *v.last().unwrap() != hi {
        v.push(hi);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SpaceTimeGrid {
        SpaceTimeGrid::new(1, 33).unwrap()
    }

    #[test]
    fn kernel_mass_is_one() {
        let k = make_kernel(1.0, &grid()).unwrap();
        let mass = k.weighted_sum(|_, _| 1.0);
        assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
    }

    #[test]
    fn kernel_sup_scales_like_t_to_minus_d_plus_2() {
        let g = SpaceTimeGrid::new(1, 257).unwrap();
        let k1 = make_kernel(1.0, &g).unwrap();
        let k4 = make_kernel(0.25, &g).unwrap();
        let ratio = k4.sup_value() / k1.sup_value();
        let expect = 4.0_f64.powi(3); // T^{-(d+2)}, d = 1
        assert!((ratio / expect - 1.0).abs() < 0.05, "ratio {ratio} vs {expect}");
    }

    #[test]
    fn kernel_support_is_strict_past_ball() {
        let k = make_kernel(0.5, &grid()).unwrap();
        // zero weight at zero lag and at the lag-T² rim
        for a in -(k.hx as i64)..=(k.hx as i64) {
            assert_eq!(k.value(0, &[a]), 0.0);
            assert_eq!(k.value(k.kt, &[a]), 0.0);
        }
        // zero weight at |y| = T
        for ks in 0..=k.kt {
            assert_eq!(k.value(ks, &[k.hx as i64]), 0.0);
            assert_eq!(k.value(ks, &[-(k.hx as i64)]), 0.0);
        }
    }

    #[test]
    fn kernel_alpha_moment_bounded_by_t_alpha() {
        // discrete version of (3.6): ∫ Ψ_T d(z,0)^α ≤ T^α
        let g = SpaceTimeGrid::new(1, 129).unwrap();
        for &t in &[0.25, 0.5, 1.0] {
            for &alpha in &[0.3, 0.49, 0.9] {
                let k = make_kernel(t, &g).unwrap();
                let m = k.weighted_sum(|s, y| y[0].abs().max(s.sqrt()).powf(alpha));
                assert!(m <= t.powf(alpha) * 1.000001, "moment {m} > T^α at T={t}, α={alpha}");
            }
        }
    }

    #[test]
    fn mollify_fixes_constants() {
        let g = grid();
        let h = ScalarField::from_fn(&g, 0.5, |_, _| 5.0).unwrap();
        let out = mollify(&h, 0.5).unwrap();
        for &v in out.values() {
            assert!((v - 5.0).abs() < 1e-12);
        }
        assert!((out.margin - 0.0).abs() < 1e-12);
    }

    #[test]
    fn mollify_is_sup_contraction() {
        let g = grid();
        let h = crate::field::band_limited(&g, 0.5, 6, 8.0, 3).unwrap();
        let hsup = h.values().iter().cloned().fold(0.0, |a: f64, b| a.max(b.abs()));
        let out = mollify(&h, 0.5).unwrap();
        let osup = out.values().iter().cloned().fold(0.0, |a: f64, b| a.max(b.abs()));
        assert!(osup <= hsup + 1e-12, "{osup} > {hsup}");
    }

    #[test]
    fn mollify_linear_field_shifts_by_first_moment() {
        let g = grid();
        let h = ScalarField::from_fn(&g, 0.5, |_, x| x[0]).unwrap();
        let t = 0.5;
        let k = make_kernel(t, &g).unwrap();
        // first spatial moment of the (symmetric) kernel, by direct quadrature
        let m1 = k.weighted_sum(|_, y| y[0]);
        let out = mollify(&h, t).unwrap();
        let ti = out.t0 + out.nt as i64 / 2;
        let j = out.x0 + out.nx as i64 / 2;
        let x = g.x_of(j);
        assert!((out.get(ti, &[j]) - (x - m1)).abs() < 1e-12);
        assert!(m1.abs() < 1e-15, "bump kernel is even in y, m1 = {m1}");
    }

    #[test]
    fn mollify_insufficient_margin_errors() {
        let g = grid();
        // an extent smaller than the kernel footprint cannot be mollified
        let h = ScalarField::with_extent(&g, 0, 10, 0, 9, 0.0).unwrap();
        assert!(matches!(mollify(&h, 0.5), Err(Error::SupportMargin { .. })));
        // and a margin-0 base field cannot support the sup over P_0 at T = 1
        let h = ScalarField::from_fn(&g, 0.0, |_, x| x[0]).unwrap();
        let region = crate::geometry::cylinder_region(0.0, &g).unwrap();
        assert!(matches!(
            mollified_sup(&h, 1.0, &region, KernelShape::Bump),
            Err(Error::SupportMargin { .. })
        ));
    }

    #[test]
    fn scale_below_resolution_errors() {
        let g = grid(); // dx = 1/16
        assert!(matches!(
            make_kernel(0.1, &g),
            Err(Error::ScaleBelowResolution { .. })
        ));
    }

    #[test]
    fn strided_sup_matches_full_sup_on_smooth_field() {
        let g = grid();
        let h = crate::field::band_limited(&g, 1.0, 4, 3.0, 11).unwrap();
        let t = 0.5;
        let full = mollify(&h, t).unwrap();
        let region = crate::geometry::cylinder_region(0.0, &g).unwrap();
        let mut sup = 0.0_f64;
        for ti in region.t_lo..=region.t_hi {
            for j in region.x_lo..=region.x_hi {
                sup = sup.max(full.get(ti, &[j]).abs());
            }
        }
        let strided = mollified_sup(&h, t, &region, KernelShape::Bump).unwrap();
        assert!(strided <= sup + 1e-12);
        assert!(strided >= 0.97 * sup, "strided {strided} vs full {sup}");
    }

    #[test]
    fn double_convolution_kernel_valid() {
        let g = SpaceTimeGrid::new(1, 129).unwrap();
        let k = make_kernel_shaped(0.5, &g, KernelShape::DoubleConvolution).unwrap();
        let mass = k.weighted_sum(|_, _| 1.0);
        assert!((mass - 1.0).abs() < 1e-6);
        // support still inside the past ball of radius T
        assert!(k.kt as f64 * g.dt <= 0.25 + 1e-12);
        assert!(k.hx as f64 * g.dx <= 0.5 + 1e-12);
        let h = ScalarField::from_fn(&g, 0.5, |_, _| 2.0).unwrap();
        let out = mollify_shaped(&h, 0.5, KernelShape::DoubleConvolution).unwrap();
        assert!((out.get(out.t0, &[0]) - 2.0).abs() < 1e-12);
    }
}
