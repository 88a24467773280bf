//! Right-hand-side evaluators for every bound the lab measures, plus the
//! diagnostic quantities behind them: the mollification commutator, the
//! low-regularity Schauder ratio, and the sup/Hölder/L^{m+1} interpolation.
//!
//! Theorem constants are nonconstructive, so reports carry the empirical
//! ratio lhs/rhs per experiment; what the experiments certify is stability
//! of that ratio across data magnitude, seeds and grids.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{GridBox, Point, SpaceTimeGrid};
use crate::kernel::{mollified_sup, mollify, KernelShape};
use crate::nonlin::Nonlinearity;
use crate::norms;
use serde::Serialize;

/// One measured bound: left side, the labelled terms inside the max, their
/// max, and the observed ratio.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub label: String,
    pub lhs: f64,
    pub rhs_terms: Vec<(String, f64)>,
    pub rhs: f64,
    pub ratio: f64,
    pub context: ReportContext,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ReportContext {
    pub family: Option<String>,
    pub alpha: Option<f64>,
    pub r_offset: Option<f64>,
    pub seed: Option<u64>,
    pub boundary_magnitude: Option<f64>,
    pub grid_d: Option<usize>,
    pub grid_nx: Option<usize>,
    /// Smallest admissible mollification scale (4·dx) used by the norms.
    pub dyadic_floor: Option<f64>,
}

impl BoundReport {
    pub fn new(label: &str, lhs: f64, rhs_terms: Vec<(String, f64)>, context: ReportContext) -> Result<Self> {
        let rhs = rhs_terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
        if rhs_terms.iter().any(|t| t.1 > 0.0) && rhs <= 0.0 {
            return Err(Error::Other("bound report with positive term but nonpositive max".into()));
        }
        let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
        if !ratio.is_finite() {
            return Err(Error::Other(format!("non-finite ratio {lhs}/{rhs}")));
        }
        Ok(BoundReport { label: label.into(), lhs, rhs_terms, rhs, ratio, context })
    }
}

fn check_m_alpha(m: f64, alpha: f64) -> Result<()> {
    if m <= 1.0 {
        return Err(Error::InvalidParameter(format!("m = {m} must exceed 1")));
    }
    if !(0.0 < alpha && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} outside (0,1]")));
    }
    Ok(())
}

/// ODE envelope: max{ t^{−1/(m−1)}, [w]_α^{1/(1+(m−1)α)} }.
pub fn ode_bound_rhs(m: f64, alpha: f64, w_holder: f64, t: f64) -> Result<f64> {
    check_m_alpha(m, alpha)?;
    if t <= 0.0 {
        return Err(Error::InvalidParameter(format!("t = {t} must be positive")));
    }
    let blow = t.powf(-1.0 / (m - 1.0));
    let noise = w_holder.powf(1.0 / (1.0 + (m - 1.0) * alpha));
    Ok(blow.max(noise))
}

/// PDE envelope: max{ R^{−2/(m−1)}, [ζ]^{1/(1+(m−1)α/2)}, ‖g‖^{1/m} }.
/// The exponent 1/(1+(m−1)α/2) equals 2/(2+(m−1)α).
pub fn pde_bound_rhs(m: f64, alpha: f64, r: f64, zeta_norm: f64, g_sup: f64) -> Result<f64> {
    check_m_alpha(m, alpha)?;
    if !(0.0 < r && r <= 0.5) {
        return Err(Error::OffsetOutOfRange(r));
    }
    Ok(pde_bound_terms(m, alpha, r, zeta_norm, g_sup)
        .into_iter()
        .map(|t| t.1)
        .fold(0.0, f64::max))
}

pub fn pde_bound_terms(
    m: f64,
    alpha: f64,
    r: f64,
    zeta_norm: f64,
    g_sup: f64,
) -> Vec<(String, f64)> {
    vec![
        ("R^{-2/(m-1)}".into(), r.powf(-2.0 / (m - 1.0))),
        (
            "zeta_norm^{1/(1+(m-1)a/2)}".into(),
            zeta_norm.powf(1.0 / (1.0 + (m - 1.0) * alpha / 2.0)),
        ),
        ("g_sup^{1/m}".into(), g_sup.powf(1.0 / m)),
    ]
}

/// Both faces of the maximum-principle bound at a point: the sharp proof
/// bound 2/η and the theorem envelope max{Θ⁻¹(1/(λ²s²)), f⁻¹(‖g‖)}, with
/// their ratio standing in for the nonconstructive constant C.
#[derive(Debug, Clone, Serialize)]
pub struct MaxPrincipleBound {
    pub sharp: f64,
    pub envelope: f64,
    /// sharp/envelope (the empirical constant of the theorem).
    pub c_ratio: f64,
    pub on_boundary: bool,
}

pub fn maxprinciple_bound(
    nl: &Nonlinearity,
    g_sup: f64,
    lambda: f64,
    z: &Point,
) -> Result<MaxPrincipleBound> {
    let eta = crate::nonlin::barrier_eta(nl, g_sup, lambda, z)?;
    if eta == 0.0 {
        return Ok(MaxPrincipleBound {
            sharp: f64::INFINITY,
            envelope: f64::INFINITY,
            c_ratio: f64::NAN,
            on_boundary: true,
        });
    }
    let mut s2 = z.t;
    for &xi in &z.x {
        s2 = s2.min((1.0 + xi) * (1.0 + xi)).min((1.0 - xi) * (1.0 - xi));
    }
    let envelope = nl
        .theta_inverse_clamped(1.0 / (lambda * lambda * s2))
        .max(nl.f_inverse(g_sup)?);
    let sharp = 2.0 / eta;
    Ok(MaxPrincipleBound {
        sharp,
        envelope,
        c_ratio: if envelope > 0.0 { sharp / envelope } else { f64::NAN },
        on_boundary: false,
    })
}

/// Remainder envelope of the general-nonlinearity route:
/// max{ Θ⁻¹((λR)^{−2}), f⁻¹(2‖g‖), ‖w‖ }.
pub fn remainder_bound_rhs(
    nl: &Nonlinearity,
    g_sup: f64,
    w_sup: f64,
    r: f64,
    lambda: f64,
) -> Result<f64> {
    if !(0.0 < r && r <= 0.5) {
        return Err(Error::OffsetOutOfRange(r));
    }
    let damping = nl.theta_inverse_clamped(1.0 / (lambda * r * lambda * r));
    let forcing = nl.f_inverse(2.0 * g_sup)?;
    Ok(damping.max(forcing).max(w_sup))
}

#[inline]
fn upow(u: f64, m: f64) -> f64 {
    u.signum() * u.abs().powf(m)
}

/// (u_T)|u_T|^{m−1} − (u|u|^{m−1})_T on the mollified extent, with its sup
/// over the requested region.
pub fn commutator_field(
    u: &ScalarField,
    m: f64,
    t_scale: f64,
    region: &GridBox,
) -> Result<(ScalarField, f64)> {
    if m <= 1.0 {
        return Err(Error::InvalidParameter(format!("m = {m} must exceed 1")));
    }
    let smooth = mollify(u, t_scale)?;
    let mut powered = u.clone();
    for v in powered.values_mut() {
        *v = upow(*v, m);
    }
    let powered_smooth = mollify(&powered, t_scale)?;
    let mut out = smooth;
    for (a, b) in out.values_mut().iter_mut().zip(powered_smooth.values()) {
        *a = upow(*a, m) - b;
    }
    let sup = norms::sup_norm(&out, region)?;
    Ok((out, sup))
}

/// Upper bound of the commutator estimate:
/// 2m·‖u‖^{m−1}·T^α·sup_z [u]_{α,B(z,T)} over the region (the sup-norm is
/// taken on the region inflated by the ball the estimate reads).
pub fn commutator_bound_rhs(
    u: &ScalarField,
    m: f64,
    alpha: f64,
    t_scale: f64,
    region: &GridBox,
) -> Result<f64> {
    let kt = (t_scale * t_scale / u.grid.dt + 1e-9).floor() as i64;
    let hx = (t_scale / u.grid.dx + 1e-9).floor() as i64;
    let inflated = GridBox {
        d: region.d,
        t_lo: region.t_lo - kt,
        t_hi: region.t_hi,
        x_lo: region.x_lo - hx,
        x_hi: region.x_hi + hx,
    };
    let usup = norms::sup_norm(u, &inflated)?;
    let semi = norms::max_local_holder(u, alpha, t_scale, region)?;
    Ok(2.0 * m * usup.powf(m - 1.0) * t_scale.powf(alpha) * semi)
}

/// Schauder diagnostic for fields compactly supported in the unit past
/// ball: [u]_α divided by sup over dyadic T of T^{2−α}‖((∂_t−Δ)u)_T‖.
/// Zero fields return 0 by convention.
pub fn schauder_ratio(u: &ScalarField, alpha: f64) -> Result<f64> {
    let sup_u = u.values().iter().cloned().fold(0.0, |a: f64, b| a.max(b.abs()));
    if sup_u == 0.0 {
        return Ok(0.0);
    }
    check_compact_support(u)?;
    let f = heat_residual(u);
    // [u]_α over the support bounding box
    let support = support_box(u, 0.0);
    let semi = norms::holder_seminorm_strided(u, alpha, &support, 4000)?;
    // sup over dyadic T of T^{2−α}·sup |f_T| over everything computable
    let floor = 4.0 * u.grid.dx;
    let mut n_val = 0.0_f64;
    for t in norms::dyadic_scales(floor) {
        let kt = (t * t / u.grid.dt + 1e-9).floor() as i64;
        let hx = (t / u.grid.dx + 1e-9).floor() as i64;
        let ext = f.extent();
        let region = GridBox {
            d: ext.d,
            t_lo: ext.t_lo + kt,
            t_hi: ext.t_hi,
            x_lo: ext.x_lo + hx,
            x_hi: ext.x_hi - hx,
        };
        if region.is_empty() {
            continue;
        }
        let sup = mollified_sup(&f, t, &region, KernelShape::Bump)?;
        n_val = n_val.max(t.powf(2.0 - alpha) * sup);
    }
    if n_val == 0.0 {
        return Err(Error::Other("vanishing right-hand side in schauder_ratio".into()));
    }
    Ok(semi / n_val)
}

/// Smooth bump supported in the past ball of parabolic radius `scale`,
/// centered at the origin, on the margin-extended lattice of `grid` (so the
/// heat residual can be mollified up to scale 1).
pub fn schauder_bump(grid: &SpaceTimeGrid, scale: f64, amplitude: f64) -> Result<ScalarField> {
    if scale <= 0.0 || scale > 1.0 {
        return Err(Error::InvalidParameter(format!("bump scale {scale} outside (0,1]")));
    }
    ScalarField::from_fn(grid, 1.0, |t, x| {
        let sx = 0.9 * scale;
        let q_space: f64 = x.iter().map(|&xi| (xi / sx) * (xi / sx)).sum();
        let q_time = (2.0 * t + scale * scale) / (0.9 * scale * scale);
        let q = q_space + q_time * q_time;
        if q < 1.0 {
            amplitude * (-1.0 / (1.0 - q)).exp()
        } else {
            0.0
        }
    })
}

fn check_compact_support(u: &ScalarField) -> Result<()> {
    // the outermost two cells of the extent must vanish
    let ext = u.extent();
    let d = u.d();
    let mut bad = false;
    for ti in ext.t_lo..=ext.t_hi {
        let edge_t = ti <= ext.t_lo + 1 || ti >= ext.t_hi - 1;
        for j1 in ext.x_lo..=ext.x_hi {
            let edge_x = j1 <= ext.x_lo + 1 || j1 >= ext.x_hi - 1;
            if d == 1 {
                if (edge_t || edge_x) && u.get(ti, &[j1]) != 0.0 {
                    bad = true;
                }
            } else if edge_t || edge_x {
                for j2 in ext.x_lo..=ext.x_hi {
                    if u.get(ti, &[j1, j2]) != 0.0 {
                        bad = true;
                    }
                }
            }
        }
        if bad {
            break;
        }
    }
    if bad {
        return Err(Error::InvalidParameter(
            "field is not compactly supported inside its extent".into(),
        ));
    }
    Ok(())
}

fn support_box(u: &ScalarField, _pad: f64) -> GridBox {
    let ext = u.extent();
    let d = u.d();
    let mut t_lo = ext.t_hi;
    let mut t_hi = ext.t_lo;
    let mut x_lo = ext.x_hi;
    let mut x_hi = ext.x_lo;
    for ti in ext.t_lo..=ext.t_hi {
        for j1 in ext.x_lo..=ext.x_hi {
            let nonzero = if d == 1 {
                u.get(ti, &[j1]) != 0.0
            } else {
                (ext.x_lo..=ext.x_hi).any(|j2| u.get(ti, &[j1, j2]) != 0.0)
            };
            if nonzero {
                t_lo = t_lo.min(ti);
                t_hi = t_hi.max(ti);
                x_lo = x_lo.min(j1);
                x_hi = x_hi.max(j1);
            }
        }
    }
    GridBox { d, t_lo, t_hi, x_lo, x_hi }
}

/// (∂_t − Δ)u by centered differences on the interior of the extent (the
/// outermost cells, where u vanishes, are left zero).
pub fn heat_residual(u: &ScalarField) -> ScalarField {
    let mut f = u.clone();
    for v in f.values_mut() {
        *v = 0.0;
    }
    let ext = u.extent();
    let (dt, dx) = (u.grid.dt, u.grid.dx);
    let d = u.d();
    for ti in ext.t_lo + 1..ext.t_hi {
        for j1 in ext.x_lo + 1..ext.x_hi {
            match d {
                1 => {
                    let ut = (u.get(ti + 1, &[j1]) - u.get(ti - 1, &[j1])) / (2.0 * dt);
                    let uxx = (u.get(ti, &[j1 + 1]) - 2.0 * u.get(ti, &[j1])
                        + u.get(ti, &[j1 - 1]))
                        / (dx * dx);
                    f.set(ti, &[j1], ut - uxx);
                }
                _ => {
                    for j2 in ext.x_lo + 1..ext.x_hi {
                        let ut =
                            (u.get(ti + 1, &[j1, j2]) - u.get(ti - 1, &[j1, j2])) / (2.0 * dt);
                        let lap = (u.get(ti, &[j1 + 1, j2]) - 2.0 * u.get(ti, &[j1, j2])
                            + u.get(ti, &[j1 - 1, j2]))
                            / (dx * dx)
                            + (u.get(ti, &[j1, j2 + 1]) - 2.0 * u.get(ti, &[j1, j2])
                                + u.get(ti, &[j1, j2 - 1]))
                                / (dx * dx);
                        f.set(ti, &[j1, j2], ut - lap);
                    }
                }
            }
        }
    }
    f
}

/// Result of one sup/Hölder/L^{m+1} interpolation check:
/// (‖u‖/2)^{1+α(m+1)} ≤ max{ [u]_α‖u‖_{m+1}^{α(m+1)}, ‖u‖_{m+1}^{1+α(m+1)} }.
#[derive(Debug, Clone, Serialize)]
pub struct InterpReport {
    pub lhs: f64,
    pub rhs_holder_term: f64,
    pub rhs_lp_term: f64,
    pub pass: bool,
    /// (rhs − lhs)/rhs.
    pub margin: f64,
}

/// Check the interpolation on a spatial field sampled on [−1, 1] with
/// spacing dx (d = 1, α ∈ (0, 1/2)).
pub fn interpolation_check(values: &[f64], dx: f64, alpha: f64, m: f64) -> Result<InterpReport> {
    if !(0.0 < alpha && alpha < 0.5) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} outside (0, 1/2)")));
    }
    if m <= 1.0 {
        return Err(Error::InvalidParameter(format!("m = {m} must exceed 1")));
    }
    let n = values.len();
    if n < 3 {
        return Err(Error::InvalidParameter("need at least 3 samples".into()));
    }
    let sup = values.iter().cloned().fold(0.0, |a: f64, b| a.max(b.abs()));
    let mut semi = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = ((j - i) as f64 * dx).powf(alpha);
            semi = semi.max((values[j] - values[i]).abs() / gap);
        }
    }
    let lp = (values.iter().map(|v| v.abs().powf(m + 1.0)).sum::<f64>() * dx)
        .powf(1.0 / (m + 1.0));
    let p = 1.0 + alpha * (m + 1.0);
    let lhs = (sup / 2.0).powf(p);
    let rhs_holder_term = semi * lp.powf(alpha * (m + 1.0));
    let rhs_lp_term = lp.powf(p);
    let rhs = rhs_holder_term.max(rhs_lp_term);
    Ok(InterpReport {
        lhs,
        rhs_holder_term,
        rhs_lp_term,
        pass: lhs <= rhs * (1.0 + 1e-12),
        margin: if rhs > 0.0 { (rhs - lhs) / rhs } else { 0.0 },
    })
}
