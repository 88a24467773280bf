//! Reaction-function families, the (f₁, f₂) decomposition, Θ and its
//! inverse, sampled assumption certificates, and the boundary barrier η
//! together with a grid certificate of the barrier inequality.
//!
//! Families: polynomial u|u|^{m−1} (optionally with a bounded envelope part
//! tracked through its sup), sinh, and the slow-growth log family
//! f₁(u) = u·log(1+u)^α with f₂(u) = ((1+u)log(1+u)/u)²/α. Θ(u) = f₁(u)/u
//! encodes the damping strength; Θ⁻¹ of the inverse-square distance to the
//! boundary is the coming-down envelope.

use crate::error::{Error, Result};
use crate::geometry::{Point, SpaceTimeGrid};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinSpec {
    Polynomial { m: f64 },
    PolynomialPlusBounded { m: f64, g_sup: f64 },
    Sinh,
    LogType { alpha_log: f64 },
}

impl NonlinSpec {
    pub fn build(&self) -> Result<Nonlinearity> {
        Nonlinearity::from_spec(*self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssumptionSet {
    A41,
    A43,
}

#[derive(Debug, Clone)]
pub struct Nonlinearity {
    pub spec: NonlinSpec,
    /// Bound on the bounded part of the reaction (0 for the pure families).
    pub g_sup: f64,
    /// Range cap for bisections; auto-expanded by doubling when bracketing.
    pub u_max: f64,
}

pub const DEFAULT_U_MAX: f64 = 1e8;

/// λ(d) = (28d + 1)^{−1/2} from the barrier construction.
pub fn default_lambda(d: usize) -> f64 {
    1.0 / ((28 * d + 1) as f64).sqrt()
}

impl Nonlinearity {
    pub fn from_spec(spec: NonlinSpec) -> Result<Self> {
        let g_sup = match spec {
            NonlinSpec::Polynomial { m } | NonlinSpec::PolynomialPlusBounded { m, .. } => {
                if m <= 1.0 {
                    return Err(Error::InvalidParameter(format!("m = {m} must exceed 1")));
                }
                if let NonlinSpec::PolynomialPlusBounded { g_sup, .. } = spec {
                    if g_sup < 0.0 {
                        return Err(Error::InvalidParameter("g_sup must be >= 0".into()));
                    }
                    g_sup
                } else {
                    0.0
                }
            }
            NonlinSpec::Sinh => 0.0,
            NonlinSpec::LogType { alpha_log } => {
                if alpha_log < 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "alpha_log = {alpha_log} must be >= 1"
                    )));
                }
                0.0
            }
        };
        Ok(Nonlinearity { spec, g_sup, u_max: DEFAULT_U_MAX })
    }

    pub fn polynomial(m: f64) -> Result<Self> {
        Self::from_spec(NonlinSpec::Polynomial { m })
    }

    pub fn sinh() -> Self {
        Self::from_spec(NonlinSpec::Sinh).expect("sinh family is always valid")
    }

    pub fn log_type(alpha_log: f64) -> Result<Self> {
        Self::from_spec(NonlinSpec::LogType { alpha_log })
    }

    pub fn name(&self) -> String {
        match self.spec {
            NonlinSpec::Polynomial { m } => format!("polynomial(m={m})"),
            NonlinSpec::PolynomialPlusBounded { m, g_sup } => {
                format!("polynomial_plus_bounded(m={m}, g_sup={g_sup})")
            }
            NonlinSpec::Sinh => "sinh".into(),
            NonlinSpec::LogType { alpha_log } => format!("log_type(alpha={alpha_log})"),
        }
    }

    pub fn assumption_set(&self) -> AssumptionSet {
        match self.spec {
            NonlinSpec::Polynomial { .. } | NonlinSpec::PolynomialPlusBounded { .. } => {
                AssumptionSet::A41
            }
            NonlinSpec::Sinh | NonlinSpec::LogType { .. } => AssumptionSet::A43,
        }
    }

    /// The envelope reaction f (antisymmetric; f = f₁·f₂ for the 4.3 families).
    pub fn f(&self, u: f64) -> f64 {
        let s = u.signum();
        let a = u.abs();
        s * match self.spec {
            NonlinSpec::Polynomial { m } | NonlinSpec::PolynomialPlusBounded { m, .. } => {
                a.powf(m)
            }
            NonlinSpec::Sinh => a.sinh(),
            NonlinSpec::LogType { alpha_log } => {
                if a == 0.0 {
                    0.0
                } else {
                    let l = a.ln_1p();
                    (1.0 + a) * (1.0 + a) * l.powf(alpha_log + 2.0) / (alpha_log * a)
                }
            }
        }
    }

    pub fn f_prime(&self, u: f64) -> f64 {
        let a = u.abs();
        match self.spec {
            NonlinSpec::Polynomial { m } | NonlinSpec::PolynomialPlusBounded { m, .. } => {
                m * a.powf(m - 1.0)
            }
            NonlinSpec::Sinh => a.cosh(),
            NonlinSpec::LogType { alpha_log } => {
                if a == 0.0 {
                    return 0.0;
                }
                // f = (1+u)² L^{a+2} / (a·u): u f'/f = 2u/(1+u) + (a+2)u/((1+u)L) − 1
                let l = a.ln_1p();
                let logderiv =
                    (2.0 * a / (1.0 + a) + (alpha_log + 2.0) * a / ((1.0 + a) * l) - 1.0) / a;
                self.f(a) * logderiv
            }
        }
    }

    pub fn f_second(&self, u: f64) -> f64 {
        let s = u.signum();
        let a = u.abs();
        s * match self.spec {
            NonlinSpec::Polynomial { m } | NonlinSpec::PolynomialPlusBounded { m, .. } => {
                m * (m - 1.0) * a.powf(m - 2.0)
            }
            NonlinSpec::Sinh => a.sinh(),
            NonlinSpec::LogType { .. } => {
                // central difference; only the sign matters for the checks
                let h = (a * 1e-5).max(1e-9);
                if a <= h {
                    return 0.0;
                }
                (self.f_prime(a + h) - self.f_prime(a - h)) / (2.0 * h)
            }
        }
    }

    /// f₁ of the decomposition (f₁ = f under Assumption 4.1).
    pub fn f1(&self, u: f64) -> f64 {
        match self.spec {
            NonlinSpec::LogType { alpha_log } => {
                let s = u.signum();
                let a = u.abs();
                if a == 0.0 {
                    0.0
                } else {
                    s * a * a.ln_1p().powf(alpha_log)
                }
            }
            _ => self.f(u),
        }
    }

    pub fn f1_prime(&self, u: f64) -> f64 {
        let a = u.abs();
        match self.spec {
            NonlinSpec::LogType { alpha_log } => {
                if a == 0.0 {
                    return 0.0;
                }
                let l = a.ln_1p();
                l.powf(alpha_log) + alpha_log * a * l.powf(alpha_log - 1.0) / (1.0 + a)
            }
            _ => self.f_prime(u),
        }
    }

    pub fn f1_second(&self, u: f64) -> f64 {
        let a = u.abs();
        let s = u.signum();
        match self.spec {
            NonlinSpec::LogType { alpha_log } => {
                if a == 0.0 {
                    return 0.0;
                }
                let l = a.ln_1p();
                let term = 2.0 * l.powf(alpha_log - 1.0)
                    + a * (alpha_log - 1.0) * l.powf(alpha_log - 2.0) / (1.0 + a)
                    - a * l.powf(alpha_log - 1.0) / (1.0 + a);
                s * alpha_log * term / (1.0 + a)
            }
            _ => self.f_second(u),
        }
    }

    /// f₂ ≥ c > 0 of the decomposition.
    pub fn f2(&self, u: f64) -> f64 {
        let a = u.abs();
        match self.spec {
            NonlinSpec::Polynomial { m } | NonlinSpec::PolynomialPlusBounded { m, .. } => {
                1.0 / ((m - 1.0) * (m - 1.0))
            }
            NonlinSpec::Sinh => 1.0,
            NonlinSpec::LogType { alpha_log } => {
                if a == 0.0 {
                    1.0 / alpha_log
                } else {
                    let q = (1.0 + a) * a.ln_1p() / a;
                    q * q / alpha_log
                }
            }
        }
    }

    /// Θ(u) = f₁(u)/u for u > 0.
    pub fn theta(&self, u: f64) -> Result<f64> {
        if u <= 0.0 {
            return Err(Error::InvalidParameter(format!("theta needs u > 0, got {u}")));
        }
        Ok(match self.spec {
            NonlinSpec::Polynomial { m } | NonlinSpec::PolynomialPlusBounded { m, .. } => {
                u.powf(m - 1.0)
            }
            NonlinSpec::Sinh => {
                if u > 700.0 {
                    f64::INFINITY
                } else {
                    u.sinh() / u
                }
            }
            NonlinSpec::LogType { alpha_log } => u.ln_1p().powf(alpha_log),
        })
    }

    /// Infimum of Θ on (0, ∞): the lower edge of theta_inverse's domain.
    pub fn theta_inf(&self) -> f64 {
        match self.spec {
            NonlinSpec::Sinh => 1.0,
            _ => 0.0,
        }
    }

    /// Unique u > 0 with Θ(u) = y. Closed forms for the polynomial and log
    /// families, bracketed bisection to relative tolerance 1e-10 otherwise.
    pub fn theta_inverse(&self, y: f64) -> Result<f64> {
        if y < self.theta_inf() {
            return Err(Error::BelowThetaRange(y));
        }
        Ok(match self.spec {
            NonlinSpec::Polynomial { m } | NonlinSpec::PolynomialPlusBounded { m, .. } => {
                y.powf(1.0 / (m - 1.0))
            }
            NonlinSpec::LogType { alpha_log } => y.powf(1.0 / alpha_log).exp_m1(),
            NonlinSpec::Sinh => {
                if y == 1.0 {
                    return Ok(0.0);
                }
                // bisection on log(sinh u) − log u − log y, stable for all u
                let target = y.ln();
                let h =
                    |u: f64| u + (-(-(2.0 * u)).exp()).ln_1p() - 2.0_f64.ln() - u.ln() - target;
                let mut hi = 1.0;
                while h(hi) < 0.0 {
                    hi *= 2.0;
                    if hi > 1e12 {
                        return Err(Error::Other("theta_inverse bracket blew up".into()));
                    }
                }
                bisect(h, 1e-300, hi, 1e-12)
            }
        })
    }

    /// Θ⁻¹ extended by 0 below the range (used by the barrier, whose far
    /// pieces vanish when the distance argument drops below inf Θ).
    pub fn theta_inverse_clamped(&self, y: f64) -> f64 {
        if y <= self.theta_inf() {
            0.0
        } else {
            self.theta_inverse(y).unwrap_or(0.0)
        }
    }

    /// f⁻¹ on [0, ∞) by bracketed bisection with doubling expansion.
    pub fn f_inverse(&self, y: f64) -> Result<f64> {
        if y < 0.0 {
            return Err(Error::InvalidParameter("f_inverse needs y >= 0".into()));
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        let g = |u: f64| self.f(u) - y;
        let mut hi = 1.0;
        let mut guard = 0;
        while g(hi) < 0.0 {
            hi *= 2.0;
            guard += 1;
            if guard > 4000 {
                return Err(Error::Other("f_inverse bracket blew up".into()));
            }
        }
        Ok(bisect(g, 0.0, hi, 1e-10))
    }
}

fn bisect<F: Fn(f64) -> f64>(g: F, mut lo: f64, mut hi: f64, rel: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= rel * hi.abs().max(1e-30) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Largest c certified on a log grid: min over samples of u·f'(u)/f(u).
pub fn certified_c<F, G>(f: F, fp: G, u_max: f64, n: usize) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    log_grid(u_max, n)
        .into_iter()
        .map(|u| u * fp(u) / f(u))
        .fold(f64::INFINITY, f64::min)
}

fn log_grid(u_max: f64, n: usize) -> Vec<f64> {
    let lo = (u_max * 1e-12).max(1e-12).ln();
    let hi = u_max.ln();
    (0..n)
        .map(|k| (lo + (hi - lo) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionCheck {
    pub name: String,
    pub pass: bool,
    /// Worst signed margin over the grid (≥ 0 means the condition held).
    pub worst_margin: f64,
    pub worst_u: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub family: String,
    pub which: String,
    pub conditions: Vec<ConditionCheck>,
    pub pass: bool,
    /// min u·f'(u)/f(u) over the grid (the certified c of 4.1(4)).
    pub certified_c: f64,
    pub u_range: (f64, f64),
    pub n_samples: usize,
}

/// Sampled certificate of Assumption 4.1 or 4.3 on a log grid in (0, u_max].
pub fn check_assumptions(nl: &Nonlinearity, u_max: f64, n_samples: usize) -> AssumptionReport {
    let n = n_samples.max(100);
    let us = log_grid(u_max, n);
    let mut conditions: Vec<ConditionCheck> = Vec::new();

    {
        let mut check = |name: &str, margin: &dyn Fn(f64) -> f64| {
            let (mut worst, mut at) = (f64::INFINITY, 0.0);
            for &u in &us {
                let m = margin(u);
                if m < worst {
                    worst = m;
                    at = u;
                }
            }
            conditions.push(ConditionCheck {
                name: name.into(),
                pass: worst >= -1e-9,
                worst_margin: worst,
                worst_u: at,
            });
        };

        check("antisymmetry f(-u) = -f(u)", &|u| {
            let scale = nl.f(u).abs().max(1.0);
            -(nl.f(-u) + nl.f(u)).abs() / scale
        });

        match nl.assumption_set() {
            AssumptionSet::A41 => {
                check("f'' >= 0 on (0, u_max]", &|u| nl.f_second(u));
                check("u f'(u) >= c f(u), c > 1", &|u| u * nl.f_prime(u) / nl.f(u) - 1.0);
            }
            AssumptionSet::A43 => {
                check("u f'(u) >= f(u)", &|u| u * nl.f_prime(u) / nl.f(u) - 1.0);
                check("f1'' >= 0 on (0, u_max]", &|u| nl.f1_second(u));
                check("f2 >= c > 0", &|u| nl.f2(u) - 1e-12);
                check("(4.3): f2 >= max{1/(r-1)^2, 1/(r-1)}", &|u| {
                    let r = u * nl.f1_prime(u) / nl.f1(u);
                    if r <= 1.0 {
                        return f64::NEG_INFINITY;
                    }
                    let need = (1.0 / ((r - 1.0) * (r - 1.0))).max(1.0 / (r - 1.0));
                    (nl.f2(u) - need) / need.max(1.0)
                });
            }
        }
    }

    let cert = certified_c(|u| nl.f(u), |u| nl.f_prime(u), u_max, n);
    let pass = conditions.iter().all(|c| c.pass);
    AssumptionReport {
        family: nl.name(),
        which: match nl.assumption_set() {
            AssumptionSet::A41 => "4.1".into(),
            AssumptionSet::A43 => "4.3".into(),
        },
        conditions,
        pass,
        certified_c: cert,
        u_range: (us[0], *us.last().unwrap()),
        n_samples: n,
    }
}

/// Barrier η(z) = 1 / [Θ⁻¹(1/(λ²t)) + Σᵢ (Θ⁻¹(1/(λ²(1+xᵢ)²)) +
/// Θ⁻¹(1/(λ²(1−xᵢ)²))) + f⁻¹(g_sup)], extended by 0 on the boundary.
pub fn barrier_eta(nl: &Nonlinearity, g_sup: f64, lambda: f64, z: &Point) -> Result<f64> {
    if lambda <= 0.0 {
        return Err(Error::InvalidParameter("lambda must be positive".into()));
    }
    if z.t < 0.0 || z.x.iter().any(|&xi| xi.abs() > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "barrier point ({}, {:?}) outside [0,inf) x [-1,1]^d",
            z.t, z.x
        )));
    }
    if z.t == 0.0 || z.x.iter().any(|&xi| xi.abs() == 1.0) {
        return Ok(0.0);
    }
    let l2 = lambda * lambda;
    let mut denom = nl.theta_inverse_clamped(1.0 / (l2 * z.t)) + nl.f_inverse(g_sup)?;
    for &xi in &z.x {
        denom += nl.theta_inverse_clamped(1.0 / (l2 * (1.0 + xi) * (1.0 + xi)));
        denom += nl.theta_inverse_clamped(1.0 / (l2 * (1.0 - xi) * (1.0 - xi)));
    }
    if !denom.is_finite() {
        return Ok(0.0);
    }
    Ok(1.0 / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeMode {
    /// Second-order centered differences of η on the grid (nodes whose
    /// stencil the grid cannot resolve are excluded and reported).
    #[default]
    CenteredFd,
    /// Closed-form derivatives of the barrier denominator.
    Exact,
}

#[derive(Debug, Clone, Serialize)]
pub struct BarrierReport {
    pub family: String,
    pub d: usize,
    pub lambda: f64,
    pub g_sup: f64,
    pub mode: String,
    /// Parabolic distance from the boundary below which nodes are not checked.
    pub band: f64,
    pub checked_nodes: usize,
    /// Nodes inside the band whose η the grid cannot represent or resolve.
    pub excluded_nodes: usize,
    pub failing_nodes: usize,
    /// min over checked nodes of (RHS − LHS)/RHS.
    pub worst_margin: f64,
    pub pass: bool,
    /// η ≤ 1/f⁻¹(g_sup) over the grid (condition 4.11).
    pub eta_bound_4_11: bool,
    /// (4.3)-style conditions verified on the Θ⁻¹ range the barrier touches.
    pub range_conditions_pass: bool,
}

struct BarrierTables {
    /// Θ⁻¹(1/(λ²t)) at t = i·dt, i = 0..=nt+1 (one slice past t = 1).
    phi_t: Vec<f64>,
    /// Θ⁻¹(1/(λ²(1+x)²)) at x = −1 + j·dx.
    phi_plus: Vec<f64>,
    /// Θ⁻¹(1/(λ²(1−x)²)).
    phi_minus: Vec<f64>,
    f_inv_g: f64,
}

impl BarrierTables {
    fn build(nl: &Nonlinearity, g_sup: f64, lambda: f64, grid: &SpaceTimeGrid) -> Result<Self> {
        let l2 = lambda * lambda;
        let nt = grid.nt();
        let mut phi_t = vec![f64::INFINITY; nt + 2];
        for (i, slot) in phi_t.iter_mut().enumerate().skip(1) {
            *slot = nl.theta_inverse_clamped(1.0 / (l2 * grid.dt * i as f64));
        }
        let mut phi_plus = vec![f64::INFINITY; grid.nx];
        let mut phi_minus = vec![f64::INFINITY; grid.nx];
        for j in 0..grid.nx {
            let x = grid.x_of(j as i64);
            if 1.0 + x > 0.0 {
                phi_plus[j] = nl.theta_inverse_clamped(1.0 / (l2 * (1.0 + x) * (1.0 + x)));
            }
            if 1.0 - x > 0.0 {
                phi_minus[j] = nl.theta_inverse_clamped(1.0 / (l2 * (1.0 - x) * (1.0 - x)));
            }
        }
        Ok(BarrierTables { phi_t, phi_plus, phi_minus, f_inv_g: nl.f_inverse(g_sup)? })
    }

    #[inline]
    fn denom(&self, i: usize, js: &[usize]) -> f64 {
        let mut d = self.phi_t[i] + self.f_inv_g;
        for &j in js {
            d += self.phi_plus[j] + self.phi_minus[j];
        }
        d
    }

    #[inline]
    fn eta(&self, i: usize, js: &[usize]) -> f64 {
        let d = self.denom(i, js);
        if d.is_finite() {
            1.0 / d
        } else {
            0.0
        }
    }
}

/// Grid certificate of the barrier inequality
/// (∂_t − Δ)η/η + 2|∇η|²/η² ≤ (η/2)·f(1/η) on interior nodes at parabolic
/// distance ≥ 8·dx from the boundary, plus the side condition (4.11).
pub fn verify_barrier_inequality(
    nl: &Nonlinearity,
    lambda: f64,
    grid: &SpaceTimeGrid,
    mode: DerivativeMode,
) -> Result<BarrierReport> {
    let g_sup = nl.g_sup;
    let tables = BarrierTables::build(nl, g_sup, lambda, grid)?;
    let band = 8.0 * grid.dx;
    // parabolic distance >= 8dx: t >= 64 dx² = 64 dt, |x ∓ 1| >= 8 dx
    let i_lo = 64_usize;
    let j_lo = 8_usize;
    let j_hi = grid.nx - 1 - 8;
    let nt = grid.nt();
    if i_lo + 1 >= nt || j_lo >= j_hi {
        return Err(Error::InvalidGrid("grid too coarse for the 8dx band".into()));
    }

    let exact = match mode {
        DerivativeMode::Exact => Some(ExactTables::build(nl, lambda, grid)),
        DerivativeMode::CenteredFd => None,
    };

    let mut checked = 0_usize;
    let mut excluded = 0_usize;
    let mut failing = 0_usize;
    let mut worst = f64::INFINITY;

    let mut eta_bound_ok = true;
    let finv = tables.f_inv_g;

    let spatial: Vec<Vec<usize>> = match grid.d {
        1 => (j_lo..=j_hi).map(|j| vec![j]).collect(),
        2 => {
            let mut v = Vec::new();
            for j1 in j_lo..=j_hi {
                for j2 in j_lo..=j_hi {
                    v.push(vec![j1, j2]);
                }
            }
            v
        }
        _ => {
            return Err(Error::Unsupported("barrier certificate supports d <= 2".into()));
        }
    };

    for i in i_lo..nt {
        for js in &spatial {
            let eta_c = tables.eta(i, js);
            if eta_c > 0.0 && finv > 0.0 && eta_c * finv > 1.0 + 1e-12 {
                eta_bound_ok = false;
            }
            let (lhs, rhs, resolvable) = match mode {
                DerivativeMode::CenteredFd => fd_lhs_rhs(nl, grid, &tables, i, js),
                DerivativeMode::Exact => {
                    exact_lhs_rhs(nl, &tables, exact.as_ref().unwrap(), i, js)
                }
            };
            if !resolvable {
                excluded += 1;
                continue;
            }
            checked += 1;
            let margin = (rhs - lhs) / rhs.abs().max(1e-300);
            if margin < worst {
                worst = margin;
            }
            if lhs > rhs {
                failing += 1;
            }
        }
    }

    // assumption conditions on the Θ⁻¹ range the barrier actually touches
    let l2 = lambda * lambda;
    let v_min = nl.theta_inverse_clamped(1.0 / (4.0 * l2));
    let v_max = nl.theta_inverse_clamped(1.0 / (l2 * 64.0 * grid.dx * grid.dx));
    let range_ok = range_conditions(nl, v_min.max(1e-8), v_max.min(1e12));

    Ok(BarrierReport {
        family: nl.name(),
        d: grid.d,
        lambda,
        g_sup,
        mode: match mode {
            DerivativeMode::CenteredFd => "centered_fd".into(),
            DerivativeMode::Exact => "exact".into(),
        },
        band,
        checked_nodes: checked,
        excluded_nodes: excluded,
        failing_nodes: failing,
        worst_margin: worst,
        pass: failing == 0 && checked > 0,
        eta_bound_4_11: eta_bound_ok,
        range_conditions_pass: range_ok,
    })
}

/// Centered-difference LHS and RHS at a node. A node is unresolvable when a
/// stencil η vanishes/overflows or varies by more than e^{1/2} per cell.
fn fd_lhs_rhs(
    nl: &Nonlinearity,
    grid: &SpaceTimeGrid,
    t: &BarrierTables,
    i: usize,
    js: &[usize],
) -> (f64, f64, bool) {
    let eta_c = t.eta(i, js);
    if eta_c <= 1e-290 {
        return (0.0, 0.0, false);
    }
    let mut stencil = vec![t.eta(i + 1, js), t.eta(i - 1, js)];
    for (axis, &j) in js.iter().enumerate() {
        let mut jp = js.to_vec();
        jp[axis] = j + 1;
        let mut jm = js.to_vec();
        jm[axis] = j - 1;
        stencil.push(t.eta(i, &jp));
        stencil.push(t.eta(i, &jm));
    }
    let hi = 0.5_f64.exp();
    for &v in &stencil {
        let r = v / eta_c;
        if v <= 1e-290 || !v.is_finite() || !(1.0 / hi..=hi).contains(&r) {
            return (0.0, 0.0, false);
        }
    }
    let dt_eta = (stencil[0] - stencil[1]) / (2.0 * grid.dt);
    let mut lap = 0.0;
    let mut grad2 = 0.0;
    for axis in 0..js.len() {
        let p = stencil[2 + 2 * axis];
        let m = stencil[3 + 2 * axis];
        lap += (p - 2.0 * eta_c + m) / (grid.dx * grid.dx);
        let g = (p - m) / (2.0 * grid.dx);
        grad2 += g * g;
    }
    let lhs = (dt_eta - lap) / eta_c + 2.0 * grad2 / (eta_c * eta_c);
    let rhs = 0.5 * eta_c * nl.f(1.0 / eta_c);
    (lhs, rhs, rhs.is_finite())
}

/// Closed-form first/second derivatives of the 1-d barrier tables.
struct ExactTables {
    /// ∂_t of the denominator at time index i.
    dt_d: Vec<f64>,
    /// ∂²_x of the per-axis denominator part at spatial index j.
    dxx_d: Vec<f64>,
}

impl ExactTables {
    fn build(nl: &Nonlinearity, lambda: f64, grid: &SpaceTimeGrid) -> Self {
        let l2 = lambda * lambda;
        let nt = grid.nt();
        let mut dt_d = vec![f64::NAN; nt + 2];
        for (i, slot) in dt_d.iter_mut().enumerate().skip(1) {
            let tt = grid.dt * i as f64;
            let y = 1.0 / (l2 * tt);
            // d/dt Θ⁻¹(1/(λ²t)) = Θ⁻¹'(y)·(−1/(λ²t²))
            *slot = theta_inv_d1(nl, y) * (-1.0 / (l2 * tt * tt));
        }
        let mut dxx_d = vec![f64::NAN; grid.nx];
        for (j, slot) in dxx_d.iter_mut().enumerate() {
            let x = grid.x_of(j as i64);
            let mut acc = 0.0;
            for sgn in [1.0, -1.0] {
                let s = 1.0 + sgn * x; // distance to the ∓1 face
                if s <= 0.0 {
                    acc = f64::NAN;
                    break;
                }
                // y(s) = 1/(λ²s²) with (ds/dx)² = 1:
                // ∂²_x Θ⁻¹(y) = Θ⁻¹''(y)·(dy/ds)² + Θ⁻¹'(y)·d²y/ds²
                let y = 1.0 / (l2 * s * s);
                let y1 = -2.0 / (l2 * s * s * s);
                let y2 = 6.0 / (l2 * s * s * s * s);
                acc += theta_inv_d2(nl, y) * y1 * y1 + theta_inv_d1(nl, y) * y2;
            }
            *slot = acc;
        }
        ExactTables { dt_d, dxx_d }
    }
}

/// dΘ⁻¹/dy, per family.
fn theta_inv_d1(nl: &Nonlinearity, y: f64) -> f64 {
    match nl.spec {
        NonlinSpec::Polynomial { m } | NonlinSpec::PolynomialPlusBounded { m, .. } => {
            let p = 1.0 / (m - 1.0);
            p * y.powf(p - 1.0)
        }
        NonlinSpec::LogType { alpha_log } => {
            let r = y.powf(1.0 / alpha_log);
            r.exp() * r / (alpha_log * y)
        }
        NonlinSpec::Sinh => {
            if y <= 1.0 {
                return 0.0;
            }
            let v = nl.theta_inverse_clamped(y);
            let tp = (v * v.cosh() - v.sinh()) / (v * v);
            1.0 / tp
        }
    }
}

/// d²Θ⁻¹/dy², per family.
fn theta_inv_d2(nl: &Nonlinearity, y: f64) -> f64 {
    match nl.spec {
        NonlinSpec::Polynomial { m } | NonlinSpec::PolynomialPlusBounded { m, .. } => {
            let p = 1.0 / (m - 1.0);
            p * (p - 1.0) * y.powf(p - 2.0)
        }
        NonlinSpec::LogType { alpha_log } => {
            // v = exp(r) − 1, r = y^{1/a}: v'' = e^r (r'² + r''), r' = r/(a y)
            let a = alpha_log;
            let r = y.powf(1.0 / a);
            let r1 = r / (a * y);
            let r2 = r1 * (1.0 / a - 1.0) / y;
            r.exp() * (r1 * r1 + r2)
        }
        NonlinSpec::Sinh => {
            if y <= 1.0 {
                return 0.0;
            }
            let v = nl.theta_inverse_clamped(y);
            let tp = (v * v.cosh() - v.sinh()) / (v * v);
            let tpp = ((v * v + 2.0) * v.sinh() - 2.0 * v * v.cosh()) / (v * v * v);
            -tpp / (tp * tp * tp)
        }
    }
}

/// Exact-mode check of the equivalent form ΔD − ∂_t D ≤ f(D)/2 for the
/// barrier denominator D (the η = 1/D chain rule collapses (4.9) to this).
fn exact_lhs_rhs(
    nl: &Nonlinearity,
    t: &BarrierTables,
    ex: &ExactTables,
    i: usize,
    js: &[usize],
) -> (f64, f64, bool) {
    let d = t.denom(i, js);
    if !d.is_finite() {
        return (0.0, 0.0, false);
    }
    let mut lap_d = 0.0;
    for &j in js {
        lap_d += ex.dxx_d[j];
    }
    let lhs = (lap_d - ex.dt_d[i]) / d;
    let rhs = 0.5 * nl.f(d) / d;
    (lhs, rhs, lhs.is_finite() && rhs.is_finite())
}

/// (4.3)-style conditions on [v_min, v_max], the Θ⁻¹ range the barrier
/// touches on the unit cylinder.
fn range_conditions(nl: &Nonlinearity, v_min: f64, v_max: f64) -> bool {
    if v_min >= v_max {
        return true;
    }
    let n = 512;
    for k in 0..n {
        let v = (v_min.ln() + (v_max.ln() - v_min.ln()) * k as f64 / (n - 1) as f64).exp();
        let r = v * nl.f1_prime(v) / nl.f1(v);
        if r <= 1.0 {
            return false;
        }
        let need = (1.0 / ((r - 1.0) * (r - 1.0))).max(1.0 / (r - 1.0));
        if nl.f2(v) < need * (1.0 - 1e-9) {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_polynomial() {
        let nl = Nonlinearity::polynomial(3.0).unwrap();
        assert!((nl.theta(2.0).unwrap() - 4.0).abs() < 1e-12);
        assert!(nl.theta(-1.0).is_err());
    }

    #[test]
    fn theta_sinh() {
        let nl = Nonlinearity::sinh();
        assert!((nl.theta(2.0).unwrap() - 2.0_f64.sinh() / 2.0).abs() < 1e-12);
        assert!((nl.theta(2.0).unwrap() - 1.8134302039235093).abs() < 1e-10);
    }

    #[test]
    fn theta_log_type() {
        let nl = Nonlinearity::log_type(2.0).unwrap();
        let u = 3.0_f64;
        assert!((nl.theta(u).unwrap() - u.ln_1p().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn theta_inverse_polynomial() {
        let nl = Nonlinearity::polynomial(3.0).unwrap();
        assert!((nl.theta_inverse(4.0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn theta_inverse_log_type() {
        let nl = Nonlinearity::log_type(2.0).unwrap();
        let got = nl.theta_inverse(4.0).unwrap();
        assert!((got - (2.0_f64.exp() - 1.0)).abs() < 1e-10, "{got}");
        assert!((got - 6.389056098930650).abs() < 1e-9);
    }

    #[test]
    fn theta_inverse_sinh_by_bisection() {
        let nl = Nonlinearity::sinh();
        let got = nl.theta_inverse(1.8134302039235093).unwrap();
        assert!((got - 2.0).abs() < 1e-8, "{got}");
        assert!(nl.theta_inverse(0.5).is_err());
    }

    #[test]
    fn theta_roundtrip_all_families() {
        for nl in [
            Nonlinearity::polynomial(2.0).unwrap(),
            Nonlinearity::polynomial(3.5).unwrap(),
            Nonlinearity::sinh(),
            Nonlinearity::log_type(2.0).unwrap(),
        ] {
            for &u in &[1e-3, 0.5, 1.0, 7.3, 500.0] {
                let y = nl.theta(u).unwrap();
                let back = nl.theta_inverse(y).unwrap();
                assert!(
                    (back - u).abs() <= 1e-8 * u.max(1.0),
                    "{}: u={u} back={back}",
                    nl.name()
                );
            }
        }
    }

    #[test]
    fn f_inverse_roundtrip() {
        for nl in [
            Nonlinearity::polynomial(3.0).unwrap(),
            Nonlinearity::sinh(),
            Nonlinearity::log_type(2.0).unwrap(),
        ] {
            for &u in &[0.1, 2.0, 50.0] {
                let y = nl.f(u);
                let back = nl.f_inverse(y).unwrap();
                assert!((back - u).abs() < 1e-7 * u.max(1.0), "{}: {u} vs {back}", nl.name());
            }
        }
        assert_eq!(Nonlinearity::polynomial(3.0).unwrap().f_inverse(0.0).unwrap(), 0.0);
    }

    #[test]
    fn assumptions_polynomial_certifies_m() {
        let nl = Nonlinearity::polynomial(3.0).unwrap();
        let rep = check_assumptions(&nl, 1e6, 1000);
        assert!(rep.pass, "{rep:?}");
        assert!((rep.certified_c - 3.0).abs() < 1e-9);
    }

    #[test]
    fn assumptions_log_type_passes_43() {
        let nl = Nonlinearity::log_type(2.0).unwrap();
        let rep = check_assumptions(&nl, 1e6, 2000);
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn bare_log_nonlinearity_fails_41() {
        // u·log(1+u)^α alone: u f'/f = 1 + α/log(1+u) + o(1) → 1, so the
        // certified c decays to 1 as the test range grows and no fixed c > 1
        // can hold on all of (0, ∞)
        let nl = Nonlinearity::log_type(2.0).unwrap();
        let c8 = certified_c(|u| nl.f1(u), |u| nl.f1_prime(u), 1e8, 2000);
        let c16 = certified_c(|u| nl.f1(u), |u| nl.f1_prime(u), 1e16, 2000);
        assert!(c16 < c8, "certified c should shrink with the range");
        assert!((c8 - (1.0 + 2.0 / 1e8_f64.ln())).abs() < 0.01, "c8 = {c8}");
        assert!(c16 - 1.0 < 0.06, "c16 = {c16}");
        assert!(c16 >= 1.0 - 1e-9);
    }

    #[test]
    fn assumptions_sinh_reported_honestly() {
        // sinh fits neither set globally: (4.3) fails near u → 0 with f2 ≡ 1
        let nl = Nonlinearity::sinh();
        let rep = check_assumptions(&nl, 1e2, 2000);
        assert!(!rep.pass);
        let cond43 = rep.conditions.iter().find(|c| c.name.starts_with("(4.3)")).unwrap();
        assert!(!cond43.pass);
    }

    #[test]
    fn default_lambda_values() {
        assert!((default_lambda(1) - 1.0 / 29.0_f64.sqrt()).abs() < 1e-15);
        assert!((default_lambda(1) - 0.1857).abs() < 1e-4);
        assert!((default_lambda(2) - 0.13245).abs() < 1e-5);
        assert!((default_lambda(3) - 0.10847).abs() < 1e-5);
    }

    #[test]
    fn barrier_boundary_is_zero() {
        let nl = Nonlinearity::polynomial(3.0).unwrap();
        let l = default_lambda(1);
        for z in [
            Point::new(0.0, vec![0.3]).unwrap(),
            Point::new(0.5, vec![1.0]).unwrap(),
            Point::new(0.5, vec![-1.0]).unwrap(),
        ] {
            assert_eq!(barrier_eta(&nl, 0.0, l, &z).unwrap(), 0.0);
        }
    }

    #[test]
    fn barrier_center_value_m3() {
        // m = 3, g = 0, λ = 29^{-1/2}, z = (1, 0): denominator 3·√29
        let nl = Nonlinearity::polynomial(3.0).unwrap();
        let z = Point::new(1.0, vec![0.0]).unwrap();
        let eta = barrier_eta(&nl, 0.0, default_lambda(1), &z).unwrap();
        let expect = 1.0 / (3.0 * 29.0_f64.sqrt());
        assert!((eta - expect).abs() < 1e-12);
        assert!((eta - 0.06190).abs() < 5e-5);
    }

    #[test]
    fn barrier_monotone_toward_boundary() {
        let nl = Nonlinearity::polynomial(3.0).unwrap();
        let l = default_lambda(1);
        let mut last = 0.0;
        for k in 1..=10 {
            let x = 1.0 - 0.1 * k as f64; // marching toward the center
            let eta = barrier_eta(&nl, 0.0, l, &Point::new(0.5, vec![x]).unwrap()).unwrap();
            assert!(eta >= last, "η not monotone at x = {x}");
            last = eta;
        }
    }

    #[test]
    fn barrier_symmetric_under_flips_and_permutations() {
        let nl = Nonlinearity::sinh();
        let l = default_lambda(2);
        let a = barrier_eta(&nl, 0.0, l, &Point::new(0.4, vec![0.3, -0.7]).unwrap()).unwrap();
        let b = barrier_eta(&nl, 0.0, l, &Point::new(0.4, vec![-0.3, 0.7]).unwrap()).unwrap();
        let c = barrier_eta(&nl, 0.0, l, &Point::new(0.4, vec![-0.7, 0.3]).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!((a - c).abs() < 1e-15);
    }

    #[test]
    fn barrier_sandwich() {
        // (2d+1)·Θ⁻¹(1/(λ²s²)) ≥ 1/η − f⁻¹(g) ≥ Θ⁻¹(1/(λ²s²))
        let nl = Nonlinearity::polynomial(3.0).unwrap();
        let l = default_lambda(1);
        let l2 = l * l;
        for &(t, x) in &[(0.9_f64, 0.1_f64), (0.01, 0.0), (0.5, 0.93), (0.2, -0.6)] {
            let z = Point::new(t, vec![x]).unwrap();
            let eta = barrier_eta(&nl, 0.0, l, &z).unwrap();
            let s2 = t.min((1.0 + x) * (1.0 + x)).min((1.0 - x) * (1.0 - x));
            let mid = 1.0 / eta;
            let single = nl.theta_inverse_clamped(1.0 / (l2 * s2));
            assert!(mid >= single - 1e-9, "lower half fails at ({t},{x})");
            assert!(mid <= 3.0 * single + 1e-9, "upper half fails at ({t},{x})");
        }
    }

    #[test]
    fn barrier_certificate_poly_m3_small_grid() {
        let nl = Nonlinearity::polynomial(3.0).unwrap();
        let grid = SpaceTimeGrid::new(1, 33).unwrap();
        let rep =
            verify_barrier_inequality(&nl, default_lambda(1), &grid, DerivativeMode::CenteredFd)
                .unwrap();
        assert!(rep.pass, "{rep:?}");
        assert_eq!(rep.excluded_nodes, 0);
        let rep2 = verify_barrier_inequality(&nl, default_lambda(1), &grid, DerivativeMode::Exact)
            .unwrap();
        assert!(rep2.pass, "{rep2:?}");
    }

    #[test]
    fn barrier_certificate_fails_at_large_lambda() {
        let nl = Nonlinearity::polynomial(3.0).unwrap();
        let grid = SpaceTimeGrid::new(1, 33).unwrap();
        let rep = verify_barrier_inequality(
            &nl,
            10.0 * default_lambda(1),
            &grid,
            DerivativeMode::Exact,
        )
        .unwrap();
        assert!(rep.failing_nodes > 0, "{rep:?}");
    }

    #[test]
    fn barrier_4_11_with_positive_g() {
        let nl = Nonlinearity::from_spec(NonlinSpec::PolynomialPlusBounded {
            m: 3.0,
            g_sup: 27.0,
        })
        .unwrap();
        let grid = SpaceTimeGrid::new(1, 33).unwrap();
        let rep = verify_barrier_inequality(&nl, default_lambda(1), &grid, DerivativeMode::Exact)
            .unwrap();
        assert!(rep.eta_bound_4_11);
    }
}
