//! Sup norms, parabolic Hölder seminorms and the negative-order C^{α−2}
//! norm computed through dyadic mollification.
//!
//! Pair quotients below parabolic distance 2·dx are discarded: under the
//! grid scale they measure discretization noise, not regularity. Dyadic
//! mollification scales run over {2^{-k} : 4·dx ≤ 2^{-k} ≤ 1}; the floor is
//! reported so results stay comparable across grids.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::GridBox;
use crate::kernel::{mollified_sup, mollify, KernelShape};
use rayon::prelude::*;

/// max |h| over the region.
pub fn sup_norm(h: &ScalarField, region: &GridBox) -> Result<f64> {
    if region.is_empty() {
        return Err(Error::EmptyRegion("sup_norm".into()));
    }
    if !h.covers(region) {
        return Err(Error::SupportMargin { need: 0.0, have: h.margin });
    }
    let xs: Vec<i64> = (region.x_lo..=region.x_hi).collect();
    let sup = (region.t_lo..=region.t_hi)
        .into_par_iter()
        .map(|ti| {
            let mut m = 0.0_f64;
            match h.d() {
                1 => {
                    let slice = h.time_slice(ti);
                    for &j in &xs {
                        m = m.max(slice[(j - h.x0) as usize].abs());
                    }
                }
                _ => {
                    for &j1 in &xs {
                        for &j2 in &xs {
                            m = m.max(h.get(ti, &[j1, j2]).abs());
                        }
                    }
                }
            }
            m
        })
        .reduce(|| 0.0, f64::max);
    Ok(sup)
}

/// Parabolic distance between two lattice offsets, in physical units.
#[inline]
fn lattice_dist(dx: f64, di: i64, dj: &[i64]) -> f64 {
    let space: f64 = dj.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
    dx * space.max((di.abs() as f64).sqrt())
}

fn collect_nodes(region: &GridBox, t_stride: usize, x_stride: usize) -> Vec<(i64, [i64; 2])> {
    let ts = strided(region.t_lo, region.t_hi, t_stride);
    let xs = strided(region.x_lo, region.x_hi, x_stride);
    let mut nodes = Vec::new();
    for &ti in &ts {
        for &j1 in &xs {
            if region.d == 1 {
                nodes.push((ti, [j1, 0]));
            } else {
                for &j2 in &xs {
                    nodes.push((ti, [j1, j2]));
                }
            }
        }
    }
    nodes
}

fn strided(lo: i64, hi: i64, step: usize) -> Vec<i64> {
    let mut v: Vec<i64> = (lo..=hi).step_by(step.max(1)).collect();
    if *v.last().unwrap() != hi {
        v.push(hi);
    }
    v
}

fn seminorm_over_nodes(h: &ScalarField, alpha: f64, nodes: &[(i64, [i64; 2])]) -> Result<f64> {
    let d = h.d();
    let dx = h.grid.dx;
    let vals: Vec<f64> = nodes
        .iter()
        .map(|&(ti, xj)| h.get(ti, &xj[..d]))
        .collect();
    let n = nodes.len();
    let mut admissible = 0_usize;
    // cheap upper bound on admissible pairs to satisfy the precondition check
    for b in 1..n.min(64) {
        let (t0, x0) = nodes[0];
        let (t1, x1) = nodes[b];
        if lattice_dist(dx, t1 - t0, &diff(&x1, &x0, d)) >= 2.0 * dx - 1e-12 {
            admissible += 1;
        }
    }
    let best = (0..n)
        .into_par_iter()
        .map(|a| {
            let (ta, xa) = nodes[a];
            let va = vals[a];
            let mut m = 0.0_f64;
            for b in (a + 1)..n {
                let (tb, xb) = nodes[b];
                let dist = lattice_dist(dx, tb - ta, &diff(&xb, &xa, d));
                if dist < 2.0 * dx - 1e-12 {
                    continue;
                }
                let q = (vals[b] - va).abs() / dist.powf(alpha);
                if q > m {
                    m = q;
                }
            }
            m
        })
        .reduce(|| 0.0, f64::max);
    if best == 0.0 && admissible == 0 && n > 1 {
        return Err(Error::EmptyRegion("fewer than 2 admissible pairs".into()));
    }
    Ok(best)
}

fn diff(a: &[i64; 2], b: &[i64; 2], d: usize) -> Vec<i64> {
    (0..d).map(|k| a[k] - b[k]).collect()
}

/// Exact parabolic α-Hölder seminorm: max quotient over all node pairs in
/// the region at parabolic distance ≥ 2·dx. Quadratic in the region size;
/// meant for desk-scale regions.
pub fn holder_seminorm(h: &ScalarField, alpha: f64, region: &GridBox) -> Result<f64> {
    check_alpha(alpha)?;
    if region.is_empty() || region.len() < 2 {
        return Err(Error::EmptyRegion("holder_seminorm".into()));
    }
    if !h.covers(region) {
        return Err(Error::SupportMargin { need: 0.0, have: h.margin });
    }
    let nodes = collect_nodes(region, 1, 1);
    seminorm_over_nodes(h, alpha, &nodes)
}

/// Strided variant for large regions: node lists are subsampled to roughly
/// `target_nodes` entries before the pair scan.
pub fn holder_seminorm_strided(
    h: &ScalarField,
    alpha: f64,
    region: &GridBox,
    target_nodes: usize,
) -> Result<f64> {
    check_alpha(alpha)?;
    if region.is_empty() || region.len() < 2 {
        return Err(Error::EmptyRegion("holder_seminorm".into()));
    }
    if !h.covers(region) {
        return Err(Error::SupportMargin { need: 0.0, have: h.margin });
    }
    let total = region.len();
    let shrink = (total as f64 / target_nodes as f64).max(1.0);
    // split the shrink factor between axes in proportion to their extents
    let nt = (region.t_hi - region.t_lo + 1) as f64;
    let nx = (region.x_hi - region.x_lo + 1) as f64;
    let axes = 1 + region.d as u32;
    let per_axis = shrink.powf(1.0 / axes as f64);
    let st = ((nt / (nt / per_axis).ceil()).ceil() as usize).max(1);
    let sx = ((nx / (nx / per_axis).ceil()).ceil() as usize).max(1);
    let nodes = collect_nodes(region, st, sx);
    seminorm_over_nodes(h, alpha, &nodes)
}

/// Seminorm over the (closed) past ball of radius `r` centered at a node:
/// pairs drawn from the ball members plus the center itself.
pub fn local_holder_seminorm(
    h: &ScalarField,
    alpha: f64,
    center_t: i64,
    center_x: &[i64],
    r: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    let dx = h.grid.dx;
    let kt = (r * r / h.grid.dt + 1e-9).floor() as i64;
    let hx = (r / dx + 1e-9).floor() as i64;
    let d = h.d();
    let mut nodes: Vec<(i64, [i64; 2])> = Vec::new();
    for a in 0..=kt {
        for b1 in -hx..=hx {
            let push = |nodes: &mut Vec<(i64, [i64; 2])>, xj: [i64; 2], dj: &[i64]| {
                let dist = lattice_dist(dx, a, dj);
                if (a == 0 && dj.iter().all(|&v| v == 0)) || dist < r {
                    nodes.push((center_t - a, xj));
                }
            };
            if d == 1 {
                push(&mut nodes, [center_x[0] + b1, 0], &[b1]);
            } else {
                for b2 in -hx..=hx {
                    push(&mut nodes, [center_x[0] + b1, center_x[1] + b2], &[b1, b2]);
                }
            }
        }
    }
    let ext = h.extent();
    nodes.retain(|(ti, xj)| ext.contains_index(*ti, &xj[..d]));
    if nodes.len() < 2 {
        return Ok(0.0);
    }
    seminorm_over_nodes(h, alpha, &nodes)
}

/// sup over region centers (on a stride of a quarter kernel radius) of the
/// local ball seminorm — the right-hand side of the commutator estimate.
pub fn max_local_holder(
    h: &ScalarField,
    alpha: f64,
    r: f64,
    region: &GridBox,
) -> Result<f64> {
    let hx = (r / h.grid.dx + 1e-9).floor() as i64;
    let kt = (r * r / h.grid.dt + 1e-9).floor() as i64;
    let sx = ((hx / 4).max(1)) as usize;
    let st = ((kt / 4).max(1)) as usize;
    let centers = collect_nodes(region, st, sx);
    let d = h.d();
    let best = centers
        .par_iter()
        .map(|&(ti, xj)| local_holder_seminorm(h, alpha, ti, &xj[..d], r).unwrap_or(0.0))
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

/// One negative-norm evaluation: value, per-scale contributions, and the
/// dyadic floor actually used (reported in every BoundReport).
#[derive(Debug, Clone)]
pub struct NegHolderNorm {
    pub value: f64,
    pub alpha: f64,
    /// (T, T^{2−α}·sup |ζ_T|) per scale, largest T first.
    pub scales: Vec<(f64, f64)>,
    pub floor: f64,
}

/// Dyadic scales {2^{-k} : lo ≤ 2^{-k} ≤ 1}.
pub fn dyadic_scales(lo: f64) -> Vec<f64> {
    let mut v = Vec::new();
    let mut t = 1.0;
    while t + 1e-12 >= lo {
        v.push(t);
        t *= 0.5;
    }
    v
}

/// [ζ]_{α−2, region} = max over dyadic T of T^{2−α}·sup |ζ_T| over the
/// region. ζ must extend a parabolic unit beyond the region.
pub fn neg_holder_norm(
    zeta: &ScalarField,
    alpha: f64,
    region: &GridBox,
    shape: KernelShape,
) -> Result<NegHolderNorm> {
    check_alpha(alpha)?;
    let floor = match shape {
        KernelShape::Bump => 4.0 * zeta.grid.dx,
        KernelShape::DoubleConvolution => 8.0 * zeta.grid.dx,
    };
    let ts = dyadic_scales(floor);
    if ts.is_empty() {
        return Err(Error::ScaleBelowResolution { t: 1.0, min: floor });
    }
    let mut scales = Vec::with_capacity(ts.len());
    let mut value = 0.0_f64;
    for &t in &ts {
        let sup = mollified_sup(zeta, t, region, shape)?;
        let contrib = t.powf(2.0 - alpha) * sup;
        scales.push((t, contrib));
        value = value.max(contrib);
    }
    Ok(NegHolderNorm { value, alpha, scales, floor })
}

/// Dense-scale oracle for the dyadic restriction (Lemma 6.4 style): the same
/// norm with T on an `n_scales`-point log grid.
pub fn neg_holder_norm_dense(
    zeta: &ScalarField,
    alpha: f64,
    region: &GridBox,
    n_scales: usize,
    shape: KernelShape,
) -> Result<f64> {
    check_alpha(alpha)?;
    let floor = match shape {
        KernelShape::Bump => 4.0 * zeta.grid.dx,
        KernelShape::DoubleConvolution => 8.0 * zeta.grid.dx,
    };
    let ratio = (1.0_f64 / floor).ln() / (n_scales - 1) as f64;
    let mut value = 0.0_f64;
    for k in 0..n_scales {
        let t = (floor.ln() + ratio * k as f64).exp().min(1.0);
        let sup = mollified_sup(zeta, t, region, shape)?;
        value = value.max(t.powf(2.0 - alpha) * sup);
    }
    Ok(value)
}

/// sup over region of |h_T − h|; bounded by T^α times the worst local
/// ball seminorm (estimate (3.7)).
pub fn mollification_error(h: &ScalarField, t_scale: f64, region: &GridBox) -> Result<f64> {
    let smooth = mollify(h, t_scale)?;
    if !smooth.covers(region) {
        return Err(Error::SupportMargin { need: t_scale, have: h.margin });
    }
    let d = h.d();
    let err = (region.t_lo..=region.t_hi)
        .into_par_iter()
        .map(|ti| {
            let mut m = 0.0_f64;
            for j1 in region.x_lo..=region.x_hi {
                if d == 1 {
                    m = m.max((smooth.get(ti, &[j1]) - h.get(ti, &[j1])).abs());
                } else {
                    for j2 in region.x_lo..=region.x_hi {
                        m = m
                            .max((smooth.get(ti, &[j1, j2]) - h.get(ti, &[j1, j2])).abs());
                    }
                }
            }
            m
        })
        .reduce(|| 0.0, f64::max);
    Ok(err)
}

/// Hölder seminorm of a 1-d path sampled at uniform spacing `dt`.
pub fn holder_seminorm_path(values: &[f64], dt: f64, alpha: f64) -> f64 {
    let n = values.len();
    (0..n)
        .into_par_iter()
        .map(|a| {
            let mut m = 0.0_f64;
            for b in (a + 1)..n {
                let gap = ((b - a) as f64 * dt).powf(alpha);
                let q = (values[b] - values[a]).abs() / gap;
                if q > m {
                    m = q;
                }
            }
            m
        })
        .reduce(|| 0.0, f64::max)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} outside (0,1)")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::band_limited;
    use crate::geometry::{cylinder_region, SpaceTimeGrid};

    fn grid() -> SpaceTimeGrid {
        SpaceTimeGrid::new(1, 33).unwrap()
    }

    #[test]
    fn sup_norm_constant() {
        let g = grid();
        let h = ScalarField::from_fn(&g, 0.0, |_, _| -3.0).unwrap();
        let region = cylinder_region(0.0, &g).unwrap();
        assert_eq!(sup_norm(&h, &region).unwrap(), 3.0);
    }

    #[test]
    fn sup_norm_linear_on_quarter_cylinder() {
        let g = grid();
        let h = ScalarField::from_fn(&g, 0.0, |_, x| x[0]).unwrap();
        let region = cylinder_region(0.25, &g).unwrap();
        let sup = sup_norm(&h, &region).unwrap();
        // open interval |x| < 3/4: the largest grid point is 3/4 − dx
        assert!((sup - (0.75 - g.dx)).abs() < 1e-12);
        assert!((sup - 0.75).abs() <= g.dx + 1e-12);
    }

    #[test]
    fn sup_norm_matches_brute_force() {
        let g = grid();
        let h = band_limited(&g, 0.0, 5, 6.0, 19).unwrap();
        let region = cylinder_region(0.1, &g).unwrap();
        let sup = sup_norm(&h, &region).unwrap();
        let mut brute = 0.0_f64;
        for ti in region.t_lo..=region.t_hi {
            for j in region.x_lo..=region.x_hi {
                brute = brute.max(h.get(ti, &[j]).abs());
            }
        }
        assert_eq!(sup, brute);
    }

    #[test]
    fn holder_constant_is_zero() {
        let g = SpaceTimeGrid::new(1, 17).unwrap();
        let h = ScalarField::from_fn(&g, 0.0, |_, _| 4.2).unwrap();
        let region = cylinder_region(0.0, &g).unwrap();
        assert_eq!(holder_seminorm(&h, 0.5, &region).unwrap(), 0.0);
    }

    #[test]
    fn holder_linear_field_brute_force() {
        let g = SpaceTimeGrid::new(1, 17).unwrap();
        let h = ScalarField::from_fn(&g, 0.0, |_, x| x[0]).unwrap();
        let region = cylinder_region(0.0, &g).unwrap();
        let got = holder_seminorm(&h, 0.5, &region).unwrap();
        // attained at maximal spatial separation: (2 − 2dx)^{1/2}
        let expect = (2.0 - 2.0 * g.dx).sqrt();
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
        assert!((got - 2.0_f64.sqrt()).abs() < 0.1);
    }

    #[test]
    fn holder_monotone_in_region() {
        let g = SpaceTimeGrid::new(1, 17).unwrap();
        let h = band_limited(&g, 0.0, 4, 5.0, 2).unwrap();
        let big = holder_seminorm(&h, 0.5, &cylinder_region(0.1, &g).unwrap()).unwrap();
        let small = holder_seminorm(&h, 0.5, &cylinder_region(0.3, &g).unwrap()).unwrap();
        assert!(small <= big + 1e-15);
    }

    #[test]
    fn neg_holder_constant_attained_at_top_scale() {
        let g = grid();
        let c = 2.5;
        let z = ScalarField::from_fn(&g, 1.0, |_, _| c).unwrap();
        let region = cylinder_region(0.0, &g).unwrap();
        let norm = neg_holder_norm(&z, 0.49, &region, KernelShape::Bump).unwrap();
        // constants are fixed by mollification, so contribution = T^{2−α}·c,
        // increasing in T: sup at T = 1
        assert!((norm.value - c).abs() < 1e-9, "{}", norm.value);
        assert_eq!(norm.scales[0].0, 1.0);
        assert!((norm.floor - 4.0 * g.dx).abs() < 1e-15);
    }

    #[test]
    fn neg_holder_zero() {
        let g = grid();
        let z = ScalarField::zeros_with_margin(&g, 1.0).unwrap();
        let region = cylinder_region(0.0, &g).unwrap();
        assert_eq!(neg_holder_norm(&z, 0.49, &region, KernelShape::Bump).unwrap().value, 0.0);
    }

    #[test]
    fn mollification_error_constant_zero() {
        let g = grid();
        let h = ScalarField::from_fn(&g, 0.5, |_, _| 9.0).unwrap();
        let region = cylinder_region(0.25, &g).unwrap();
        assert!(mollification_error(&h, 0.5, &region).unwrap() < 1e-12);
    }

    #[test]
    fn mollification_error_bounded_by_local_seminorm() {
        // estimate (3.7) on smooth random fields
        let g = grid();
        let region = cylinder_region(0.25, &g).unwrap();
        let t = 0.25;
        for seed in 0..20 {
            let h = band_limited(&g, 0.5, 5, 6.0, seed).unwrap();
            let err = mollification_error(&h, t, &region).unwrap();
            let semi = max_local_holder(&h, 0.9, t, &region).unwrap();
            let bound = t.powf(0.9) * semi;
            assert!(
                err <= bound * 1.05 + 1e-12,
                "seed {seed}: {err} > {bound}"
            );
        }
    }

    #[test]
    fn linear_field_mollification_error_alpha_one_style() {
        // h(t,x) = x with α close to 1: error ≤ T·[h]_1-ish
        let g = SpaceTimeGrid::new(1, 65).unwrap();
        let h = ScalarField::from_fn(&g, 0.5, |_, x| x[0]).unwrap();
        let region = cylinder_region(0.25, &g).unwrap();
        let t = 1.0 / 8.0;
        let err = mollification_error(&h, t, &region).unwrap();
        // [h]_1 = 1 for the linear field; symmetric kernel kills the first
        // moment so the error is far below T
        assert!(err <= t + 1e-12, "{err}");
    }

    #[test]
    fn norms_absolutely_homogeneous() {
        let g = grid();
        let region = cylinder_region(0.1, &g).unwrap();
        let h = band_limited(&g, 1.0, 5, 6.0, 23).unwrap();
        let mut h2 = h.clone();
        h2.scale(2.0);
        let s1 = sup_norm(&h, &region).unwrap();
        let s2 = sup_norm(&h2, &region).unwrap();
        assert!((s2 - 2.0 * s1).abs() < 1e-12);
        let q1 = holder_seminorm_strided(&h, 0.5, &region, 900).unwrap();
        let q2 = holder_seminorm_strided(&h2, 0.5, &region, 900).unwrap();
        assert!((q2 - 2.0 * q1).abs() < 1e-10 * q1.max(1.0));
        let n1 = neg_holder_norm(&h, 0.49, &region, KernelShape::Bump).unwrap().value;
        let n2 = neg_holder_norm(&h2, 0.49, &region, KernelShape::Bump).unwrap().value;
        assert!((n2 - 2.0 * n1).abs() < 1e-10 * n1.max(1.0));
    }

    #[test]
    fn path_holder_brownian_like() {
        // deterministic saw path: [w]_1/2 over {0, h, 0, h, ...} with spacing dt
        let vals = vec![0.0, 0.5, 0.0, 0.5];
        let got = holder_seminorm_path(&vals, 0.25, 0.5);
        assert!((got - 1.0).abs() < 1e-12);
    }
}
