//! Time integrators: the exact reaction flow of ẋ = −f(x), the stochastic
//! ODE by splitting, the reaction–diffusion PDE by Strang splitting with
//! the exact flow as reaction sub-step, and the linear heat solve.
//!
//! The splitting is stable for arbitrarily large data because the reaction
//! sub-step is the exact coming-down flow (a contraction toward 0) and the
//! diffusion sub-step averages: d = 1 uses the explicit CFL-1/2 stencil as
//! two half sub-steps per grid step, d = 2 an implicit sweep per axis.
//! Noise enters as cell increments once per step after diffusion.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::SpaceTimeGrid;
use crate::noise::NoiseRealization;
use crate::nonlin::{Nonlinearity, NonlinSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Exact solution at time τ of ẋ = −f(x), x(0) = x0. Closed forms for the
/// polynomial and sinh families; Osgood-time quadrature inversion otherwise.
/// Always |result| ≤ |x0| with the sign preserved.
pub fn reaction_flow(nl: &Nonlinearity, x0: f64, tau: f64) -> f64 {
    if tau == 0.0 || x0 == 0.0 {
        return x0;
    }
    debug_assert!(tau > 0.0);
    let s = x0.signum();
    let a = x0.abs();
    s * match nl.spec {
        NonlinSpec::Polynomial { m } | NonlinSpec::PolynomialPlusBounded { m, .. } => {
            if (m - 3.0).abs() < 1e-14 {
                // x/(1 + 2τx²)^{1/2}, organized against overflow
                if a >= 1.0 {
                    (a.powi(-2) + 2.0 * tau).powf(-0.5)
                } else {
                    a / (1.0 + 2.0 * tau * a * a).sqrt()
                }
            } else if a >= 1.0 {
                (a.powf(1.0 - m) + (m - 1.0) * tau).powf(-1.0 / (m - 1.0))
            } else {
                a / (1.0 + (m - 1.0) * tau * a.powf(m - 1.0)).powf(1.0 / (m - 1.0))
            }
        }
        NonlinSpec::Sinh => {
            // tanh(x/2) decays by e^{−τ}: x(τ) = 2 atanh(tanh(x0/2) e^{−τ})
            let q = (a / 2.0).tanh() * (-tau).exp();
            0.5 * ((q.ln_1p()) - (-q).ln_1p()) * 2.0
        }
        NonlinSpec::LogType { .. } => osgood_flow(nl, a, tau),
    }
}

/// Generic flow by inverting the Osgood time H(x) = ∫_x^{x0} du/f(u) = τ,
/// with adaptive-Simpson quadrature on a log substitution and bisection to
/// relative tolerance 1e-10.
fn osgood_flow(nl: &Nonlinearity, x0: f64, tau: f64) -> f64 {
    let h = |x: f64| osgood_time(nl, x, x0);
    if h(x0 * (1.0 - 1e-14)) >= tau {
        return x0;
    }
    let mut lo = x0 / 2.0;
    let mut hi = x0;
    while h(lo) < tau {
        hi = lo;
        lo /= 2.0;
        if lo < 1e-290 {
            return 0.0;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) >= tau {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// ∫_x^{x0} du/f(u) via u = e^s: ∫ u/f(u) ds.
fn osgood_time(nl: &Nonlinearity, x: f64, x0: f64) -> f64 {
    let g = |s: f64| {
        let u = s.exp();
        u / nl.f(u)
    };
    adaptive_simpson(&g, x.ln(), x0.ln(), 1e-12, 24)
}

fn adaptive_simpson(g: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (g(a), g(m), g(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(g, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    g: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (g(lm), g(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        left + right + (left + right - whole) / 15.0
    } else {
        simpson_rec(g, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + simpson_rec(g, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

/// Scalar trajectory of the ODE solver.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

/// Splitting solver for x(t) = x0 − ∫ f(x) + w(t) on [0, 1]: per step the
/// exact reaction flow, then the increment of the driving path. Order 1.
pub fn solve_ode(nl: &Nonlinearity, x0: f64, w: &[f64]) -> Result<Trajectory> {
    if w.len() < 101 {
        return Err(Error::InvalidParameter(format!(
            "need >= 100 steps, got {}",
            w.len().saturating_sub(1)
        )));
    }
    let n = w.len() - 1;
    let h = 1.0 / n as f64;
    let mut times = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    let mut x = x0;
    times.push(0.0);
    values.push(x);
    for k in 0..n {
        x = reaction_flow(nl, x, h) + (w[k + 1] - w[k]);
        times.push((k + 1) as f64 * h);
        values.push(x);
    }
    Ok(Trajectory { times, values })
}

/// Brownian path on [0,1] sampled at n+1 points, w(0) = 0.
pub fn brownian_path(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = (1.0 / n as f64).sqrt();
    let mut w = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    w.push(0.0);
    for _ in 0..n {
        let g: f64 = StandardNormal.sample(&mut rng);
        acc += sd * g;
        w.push(acc);
    }
    w
}

/// Dirichlet data on the parabolic boundary: the t = 0 slice plus every
/// lateral face per time step.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    /// nx^d values on the initial slice.
    pub initial: Vec<f64>,
    /// One vector per face (2d faces, ordered −x1, +x1, −x2, +x2), each
    /// nt × nx^{d−1} values, time-major.
    pub lateral: Vec<Vec<f64>>,
    /// Set when the data is the constant M (used by uniformity studies).
    pub magnitude_tag: Option<f64>,
}

/// Selectable boundary-data family for uniformity sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryFamily {
    #[default]
    Constant,
    /// Uniform random trace in [−mag, mag], independent per face node/step.
    RandomTrace { seed_offset: u64 },
    /// mag·sin(k·π·s)·cos(ω·t) along each face.
    Oscillating { freq_space: f64, freq_time: f64 },
}

impl BoundaryData {
    pub fn face_width(grid: &SpaceTimeGrid) -> usize {
        grid.nx.pow(grid.d as u32 - 1)
    }

    pub fn constant(grid: &SpaceTimeGrid, magnitude: f64) -> Self {
        let fw = Self::face_width(grid);
        BoundaryData {
            initial: vec![magnitude; grid.nx.pow(grid.d as u32)],
            lateral: vec![vec![magnitude; grid.nt() * fw]; 2 * grid.d],
            magnitude_tag: Some(magnitude),
        }
    }

    pub fn zero(grid: &SpaceTimeGrid) -> Self {
        let mut bc = Self::constant(grid, 0.0);
        bc.magnitude_tag = Some(0.0);
        bc
    }

    pub fn from_family(
        grid: &SpaceTimeGrid,
        family: BoundaryFamily,
        magnitude: f64,
        base_seed: u64,
    ) -> Self {
        match family {
            BoundaryFamily::Constant => Self::constant(grid, magnitude),
            BoundaryFamily::RandomTrace { seed_offset } => {
                let mut rng = ChaCha8Rng::seed_from_u64(base_seed ^ seed_offset);
                let fw = Self::face_width(grid);
                let mut draw = |n: usize| -> Vec<f64> {
                    (0..n)
                        .map(|_| {
                            let g: f64 = rand::Rng::gen_range(&mut rng, -1.0..1.0);
                            magnitude * g
                        })
                        .collect()
                };
                BoundaryData {
                    initial: draw(grid.nx.pow(grid.d as u32)),
                    lateral: (0..2 * grid.d).map(|_| draw(grid.nt() * fw)).collect(),
                    magnitude_tag: Some(magnitude),
                }
            }
            BoundaryFamily::Oscillating { freq_space, freq_time } => {
                let fw = Self::face_width(grid);
                let mut lateral = Vec::with_capacity(2 * grid.d);
                for _face in 0..2 * grid.d {
                    let mut vals = Vec::with_capacity(grid.nt() * fw);
                    for ti in 0..grid.nt() {
                        let t = grid.t_of(ti as i64);
                        for j in 0..fw {
                            let s = if fw == 1 { 0.0 } else { grid.x_of(j as i64) };
                            vals.push(
                                magnitude
                                    * (freq_space * std::f64::consts::PI * s).sin()
                                        .mul_add(0.5, 0.5)
                                    * (freq_time * t).cos(),
                            );
                        }
                    }
                    lateral.push(vals);
                }
                let initial = vec![magnitude; grid.nx.pow(grid.d as u32)];
                BoundaryData { initial, lateral, magnitude_tag: Some(magnitude) }
            }
        }
    }

    #[inline]
    fn face_value(&self, face: usize, ti: usize, idx: usize, fw: usize) -> f64 {
        self.lateral[face][ti * fw + idx]
    }

    fn validate(&self, grid: &SpaceTimeGrid) -> Result<()> {
        let fw = Self::face_width(grid);
        if self.initial.len() != grid.nx.pow(grid.d as u32) {
            return Err(Error::InvalidGrid("initial slice shape mismatch".into()));
        }
        if self.lateral.len() != 2 * grid.d
            || self.lateral.iter().any(|f| f.len() != grid.nt() * fw)
        {
            return Err(Error::InvalidGrid("lateral face shape mismatch".into()));
        }
        if self.initial.iter().any(|v| !v.is_finite())
            || self.lateral.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidParameter("boundary data must be finite".into()));
        }
        Ok(())
    }
}

/// Bounded forcing g, evaluated at cell midpoints in time.
pub enum Forcing<'a> {
    Zero,
    Uniform(f64),
    Func(&'a (dyn Fn(f64, &[f64]) -> f64 + Sync)),
}

impl Forcing<'_> {
    #[inline]
    fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Forcing::Zero => 0.0,
            Forcing::Uniform(v) => *v,
            Forcing::Func(f) => f(t, x),
        }
    }
}

/// Strang-splitting solve of (∂_t − Δ)u = −f(u) + g + σζ on the unit
/// cylinder with Dirichlet data from `bc`. Output is u on the full grid.
pub fn solve_rd_pde(
    nl: &Nonlinearity,
    zeta: Option<&NoiseRealization>,
    g: &Forcing,
    bc: &BoundaryData,
    grid: &SpaceTimeGrid,
) -> Result<ScalarField> {
    let flow = |x: f64, tau: f64| reaction_flow(nl, x, tau);
    run_splitting(&flow, zeta, g, bc, grid)
}

/// Linear heat solve (∂_t − Δ)w = ζ with zero initial and lateral data.
pub fn solve_linear_heat(
    zeta: Option<&NoiseRealization>,
    grid: &SpaceTimeGrid,
) -> Result<ScalarField> {
    let identity = |x: f64, _tau: f64| x;
    run_splitting(&identity, zeta, &Forcing::Zero, &BoundaryData::zero(grid), grid)
}

/// v = u − w on the shared grid.
pub fn remainder(u: &ScalarField, w: &ScalarField) -> Result<ScalarField> {
    u.sub(w)
}

fn run_splitting(
    flow: &dyn Fn(f64, f64) -> f64,
    zeta: Option<&NoiseRealization>,
    g: &Forcing,
    bc: &BoundaryData,
    grid: &SpaceTimeGrid,
) -> Result<ScalarField> {
    bc.validate(grid)?;
    if let Some(z) = zeta {
        if z.field.grid != *grid {
            return Err(Error::InvalidGrid("noise grid differs from solve grid".into()));
        }
        z.sigma.validate()?;
    }
    match grid.d {
        1 => run_splitting_1d(flow, zeta, g, bc, grid),
        2 => run_splitting_2d(flow, zeta, g, bc, grid),
        _ => Err(Error::Unsupported("solver supports d <= 2".into())),
    }
}

fn run_splitting_1d(
    flow: &dyn Fn(f64, f64) -> f64,
    zeta: Option<&NoiseRealization>,
    g: &Forcing,
    bc: &BoundaryData,
    grid: &SpaceTimeGrid,
) -> Result<ScalarField> {
    let nx = grid.nx;
    let nt = grid.nt();
    let dt = grid.dt;
    let half = 0.5 * dt;
    let mut out = ScalarField::zeros(grid);
    let mut cur = bc.initial.clone();
    out.time_slice_mut(0).copy_from_slice(&cur);
    let mut buf = vec![0.0; nx];
    for k in 0..nt - 1 {
        let t_next = grid.t_of(k as i64 + 1);
        let t_mid = grid.t_of(k as i64) + half;
        let (left, right) = (bc.face_value(0, k + 1, 0, 1), bc.face_value(1, k + 1, 0, 1));
        for v in cur.iter_mut() {
            *v = flow(*v, half);
        }
        // diffusion over dt: two explicit sub-steps at CFL 1/2
        for _ in 0..2 {
            buf[0] = left;
            buf[nx - 1] = right;
            for j in 1..nx - 1 {
                buf[j] = 0.5 * (cur[j - 1] + cur[j + 1]);
            }
            std::mem::swap(&mut cur, &mut buf);
        }
        for (j, v) in cur.iter_mut().enumerate().take(nx - 1).skip(1) {
            let x = grid.x_of(j as i64);
            let mut inc = g.eval(t_mid, &[x]) * dt;
            if let Some(z) = zeta {
                let zv = z.field.get(k as i64 + 1, &[j as i64]);
                inc += z.sigma.eval(t_next, x, *v) * zv * dt;
            }
            *v += inc;
        }
        for v in cur.iter_mut() {
            *v = flow(*v, half);
        }
        cur[0] = left;
        cur[nx - 1] = right;
        for (node, &v) in cur.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    t: t_next,
                    node,
                    context: "splitting step produced a non-finite value".into(),
                });
            }
        }
        out.time_slice_mut(k as i64 + 1).copy_from_slice(&cur);
    }
    Ok(out)
}

fn run_splitting_2d(
    flow: &dyn Fn(f64, f64) -> f64,
    zeta: Option<&NoiseRealization>,
    g: &Forcing,
    bc: &BoundaryData,
    grid: &SpaceTimeGrid,
) -> Result<ScalarField> {
    let nx = grid.nx;
    let nt = grid.nt();
    let dt = grid.dt;
    let half = 0.5 * dt;
    let fw = nx;
    let mut out = ScalarField::zeros(grid);
    let mut cur = bc.initial.clone();
    out.time_slice_mut(0).copy_from_slice(&cur);
    let r = dt / (grid.dx * grid.dx);
    let mut thomas = Thomas::new(nx, r);
    for k in 0..nt - 1 {
        let t_next = grid.t_of(k as i64 + 1);
        let t_mid = grid.t_of(k as i64) + half;
        for v in cur.iter_mut() {
            *v = flow(*v, half);
        }
        // implicit sweep along each axis (locally one-dimensional step)
        for j2 in 0..nx {
            let mut row: Vec<f64> = (0..nx).map(|j1| cur[j1 * nx + j2]).collect();
            row[0] = bc.face_value(0, k + 1, j2, fw);
            row[nx - 1] = bc.face_value(1, k + 1, j2, fw);
            thomas.solve(&mut row);
            for (j1, v) in row.iter().enumerate() {
                cur[j1 * nx + j2] = *v;
            }
        }
        for j1 in 0..nx {
            let row = &mut cur[j1 * nx..(j1 + 1) * nx];
            row[0] = bc.face_value(2, k + 1, j1, fw);
            row[nx - 1] = bc.face_value(3, k + 1, j1, fw);
            thomas.solve(row);
        }
        for j1 in 1..nx - 1 {
            for j2 in 1..nx - 1 {
                let x = [grid.x_of(j1 as i64), grid.x_of(j2 as i64)];
                let v = &mut cur[j1 * nx + j2];
                let mut inc = g.eval(t_mid, &x) * dt;
                if let Some(z) = zeta {
                    let zv = z.field.get(k as i64 + 1, &[j1 as i64, j2 as i64]);
                    inc += z.sigma.eval(t_next, x[0], *v) * zv * dt;
                }
                *v += inc;
            }
        }
        for v in cur.iter_mut() {
            *v = flow(*v, half);
        }
        for j2 in 0..nx {
            cur[j2] = bc.face_value(0, k + 1, j2, fw);
            cur[(nx - 1) * nx + j2] = bc.face_value(1, k + 1, j2, fw);
        }
        for j1 in 0..nx {
            cur[j1 * nx] = bc.face_value(2, k + 1, j1, fw);
            cur[j1 * nx + nx - 1] = bc.face_value(3, k + 1, j1, fw);
        }
        for (node, &v) in cur.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    t: t_next,
                    node,
                    context: "splitting step produced a non-finite value".into(),
                });
            }
        }
        out.time_slice_mut(k as i64 + 1).copy_from_slice(&cur);
    }
    Ok(out)
}

/// Tridiagonal solver for (I − dt·∂²) with Dirichlet ends, coefficients
/// precomputed for the fixed grid ratio.
struct Thomas {
    n: usize,
    r: f64,
    cp: Vec<f64>,
    scratch: Vec<f64>,
}

impl Thomas {
    fn new(n: usize, r: f64) -> Self {
        let mut cp = vec![0.0; n];
        let b = 1.0 + 2.0 * r;
        cp[1] = -r / b;
        for i in 2..n - 1 {
            cp[i] = -r / (b + r * cp[i - 1]);
        }
        Thomas { n, r, cp, scratch: vec![0.0; n] }
    }

    /// In place: rhs holds boundary values at [0] and [n−1].
    fn solve(&mut self, rhs: &mut [f64]) {
        let n = self.n;
        let r = self.r;
        let b = 1.0 + 2.0 * r;
        let d = &mut self.scratch;
        d[1] = (rhs[1] + r * rhs[0]) / b;
        for i in 2..n - 1 {
            let denom = b + r * self.cp[i - 1];
            let extra = if i == n - 2 { r * rhs[n - 1] } else { 0.0 };
            d[i] = (rhs[i] + extra + r * d[i - 1]) / denom;
        }
        let mut prev = d[n - 2];
        rhs[n - 2] = prev;
        for i in (1..n - 2).rev() {
            prev = d[i] - self.cp[i] * prev;
            rhs[i] = prev;
        }
    }
}

/// Noise whose field is a spatially constant copy of a path's increments,
/// for dimension-reduction comparisons: σζ·dt reproduces w increments.
pub fn path_as_noise(grid: &SpaceTimeGrid, w: &[f64]) -> Result<NoiseRealization> {
    if w.len() != grid.nt() {
        return Err(Error::InvalidGrid("path length must match grid.nt()".into()));
    }
    let mut field = ScalarField::zeros(grid);
    for k in 1..grid.nt() {
        let val = (w[k] - w[k - 1]) / grid.dt;
        for j in 0..grid.nx as i64 {
            field.set(k as i64, &[j], val);
        }
    }
    Ok(NoiseRealization {
        field,
        spec: crate::noise::CovarianceSpec::White,
        seed: 0,
        sigma: crate::noise::SigmaKind::One,
        clamp_fraction: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::cylinder_region;
    use crate::norms::sup_norm;

    fn poly3() -> Nonlinearity {
        Nonlinearity::polynomial(3.0).unwrap()
    }

    #[test]
    fn flow_closed_form_m3() {
        let nl = poly3();
        // x0 = 1, τ = 1.5: 1/sqrt(1 + 2·1.5) = 0.5
        assert!((reaction_flow(&nl, 1.0, 1.5) - 0.5).abs() < 1e-15);
        assert_eq!(reaction_flow(&nl, 0.7, 0.0), 0.7);
        assert_eq!(reaction_flow(&nl, 0.0, 1.0), 0.0);
    }

    #[test]
    fn flow_coming_down_saturation() {
        let nl = poly3();
        // enormous data forgets itself: (x0^{-2} + 2τ)^{-1/2} ≈ (2τ)^{-1/2}
        let got = reaction_flow(&nl, 1e6, 0.5);
        assert!((got - 1.0).abs() < 1e-12, "{got}");
        let got8 = reaction_flow(&nl, 1e8, 0.5);
        assert!((got8 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flow_contracts_and_keeps_sign() {
        for nl in [
            Nonlinearity::polynomial(2.0).unwrap(),
            poly3(),
            Nonlinearity::polynomial(5.0).unwrap(),
            Nonlinearity::sinh(),
            Nonlinearity::log_type(2.0).unwrap(),
        ] {
            for &x0 in &[-1e4_f64, -2.0, -1e-6, 1e-6, 0.5, 3.0, 1e6] {
                let x = reaction_flow(&nl, x0, 0.01);
                assert!(x.abs() <= x0.abs(), "{}: {x0} -> {x}", nl.name());
                assert!(x * x0 >= 0.0, "{}: sign flip {x0} -> {x}", nl.name());
            }
        }
    }

    #[test]
    fn flow_sinh_closed_form_vs_quadrature() {
        // cross-check the generic Osgood inversion against the sinh form
        let nl = Nonlinearity::sinh();
        for &(x0, tau) in &[(2.0, 0.1), (10.0, 0.5), (0.3, 1.0)] {
            let closed = reaction_flow(&nl, x0, tau);
            let generic = osgood_flow(&nl, x0, tau);
            assert!(
                (closed - generic).abs() < 1e-8 * closed.max(1e-4),
                "x0={x0} τ={tau}: {closed} vs {generic}"
            );
        }
    }

    #[test]
    fn flow_semigroup_property() {
        for nl in [poly3(), Nonlinearity::sinh(), Nonlinearity::log_type(2.0).unwrap()] {
            let one = reaction_flow(&nl, 5.0, 0.3);
            let two = reaction_flow(&nl, reaction_flow(&nl, 5.0, 0.2), 0.1);
            assert!((one - two).abs() < 1e-8, "{}: {one} vs {two}", nl.name());
        }
    }

    #[test]
    fn ode_zero_noise_is_exact() {
        let nl = poly3();
        let w = vec![0.0; 1001];
        let traj = solve_ode(&nl, 1000.0, &w).unwrap();
        for (k, &t) in traj.times.iter().enumerate().skip(1) {
            let exact = (1000.0_f64.powi(-2) + 2.0 * t).powf(-0.5);
            assert!(
                (traj.values[k] - exact).abs() < 1e-10 * exact,
                "t={t}: {} vs {exact}",
                traj.values[k]
            );
        }
    }

    #[test]
    fn ode_lipschitz_drives_to_fixed_point() {
        // w(t) = t: ẋ = −x³ + 1 has the stable point x = 1
        let nl = poly3();
        let n = 20_000;
        let w: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let traj = solve_ode(&nl, 5.0, &w).unwrap();
        let last = *traj.values.last().unwrap();
        assert!((last - 1.0).abs() < 0.05, "x(1) = {last}");
    }

    #[test]
    fn ode_first_order_convergence() {
        let nl = poly3();
        let n_ref = 1 << 16;
        let wf = |n: usize| -> Vec<f64> { (0..=n).map(|k| k as f64 / n as f64).collect() };
        let reference = *solve_ode(&nl, 2.0, &wf(n_ref)).unwrap().values.last().unwrap();
        let e1 = (*solve_ode(&nl, 2.0, &wf(1 << 10)).unwrap().values.last().unwrap()
            - reference)
            .abs();
        let e2 = (*solve_ode(&nl, 2.0, &wf(1 << 11)).unwrap().values.last().unwrap()
            - reference)
            .abs();
        let rate = e1 / e2;
        assert!((1.5..3.0).contains(&rate), "halving steps should halve the error: {rate}");
    }

    #[test]
    fn pde_zero_is_fixed_point() {
        let grid = SpaceTimeGrid::new(1, 33).unwrap();
        let u = solve_rd_pde(&poly3(), None, &Forcing::Zero, &BoundaryData::zero(&grid), &grid)
            .unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pde_center_matches_ode_at_small_times() {
        // constant boundary M: before boundary influence reaches the center
        // the solution is the space-free ODE flow
        let grid = SpaceTimeGrid::new(1, 65).unwrap();
        let nl = poly3();
        let m = 1e4;
        let u = solve_rd_pde(&nl, None, &Forcing::Zero, &BoundaryData::constant(&grid, m), &grid)
            .unwrap();
        let center = (grid.nx as i64 - 1) / 2;
        // while the boundary layer has not reached the center the solution
        // is the ODE flow to grid accuracy; later a small positive influx
        // of order e^{−c/t} shows up on top
        for &(t_frac, slack) in &[(0.01_f64, 0.0), (0.02, 0.0), (0.05, 5e-3)] {
            let ti = (t_frac / grid.dt).round() as i64;
            let got = u.get(ti, &[center]);
            let ode = (m.powi(-2) + 2.0 * grid.t_of(ti)).powf(-0.5);
            assert!(
                got <= ode * (1.0 + 1e-9) + grid.dx * grid.dx + slack,
                "t={t_frac}: {got} vs ODE {ode}"
            );
            assert!(got >= ode - 1e-9, "boundary influence only raises the center");
        }
    }

    #[test]
    fn pde_comparison_principle() {
        let grid = SpaceTimeGrid::new(1, 33).unwrap();
        let nl = poly3();
        let z = crate::noise::sample_white_noise(&grid, 0.0, 99).unwrap();
        let u1 = solve_rd_pde(
            &nl,
            Some(&z),
            &Forcing::Zero,
            &BoundaryData::constant(&grid, 1.0),
            &grid,
        )
        .unwrap();
        let u2 = solve_rd_pde(
            &nl,
            Some(&z),
            &Forcing::Zero,
            &BoundaryData::constant(&grid, 100.0),
            &grid,
        )
        .unwrap();
        for (a, b) in u1.values().iter().zip(u2.values()) {
            assert!(a <= b, "comparison principle violated: {a} > {b}");
        }
    }

    #[test]
    fn pde_stable_for_enormous_data() {
        let grid = SpaceTimeGrid::new(1, 33).unwrap();
        let nl = poly3();
        let m = 1e8;
        let u = solve_rd_pde(&nl, None, &Forcing::Zero, &BoundaryData::constant(&grid, m), &grid)
            .unwrap();
        assert!(u.values().iter().all(|v| v.is_finite()));
        let sup = u.values().iter().cloned().fold(0.0, f64::max);
        assert!(sup <= m, "sup {sup} exceeds the boundary magnitude");
    }

    #[test]
    fn heat_zero_forcing() {
        let grid = SpaceTimeGrid::new(1, 33).unwrap();
        let w = solve_linear_heat(None, &grid).unwrap();
        assert!(w.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn heat_constant_forcing_series_value() {
        // (∂_t − Δ)w = 1, zero data: w(t,0) = (1−x²)/2 − Σ c_k e^{−λ_k t} φ_k(0);
        // the test oracle is the eigenfunction series with quadrature
        // coefficients
        let grid = SpaceTimeGrid::new(1, 65).unwrap();
        let one = constant_noise(&grid, 1.0);
        let w = solve_linear_heat(Some(&one), &grid).unwrap();
        let center = (grid.nx as i64 - 1) / 2;
        let got = w.get((grid.nt() - 1) as i64, &[center]);
        let series = heat_series_center(1.0, 25);
        assert!((got - series).abs() < 3e-3, "{got} vs series {series}");
        // steady profile is (1−x²)/2 = 0.5 at the center; t = 1 is close
        // but the slowest mode is still visibly alive
        assert!((got - 0.456).abs() < 5e-3, "{got}");
    }

    fn constant_noise(grid: &SpaceTimeGrid, v: f64) -> NoiseRealization {
        let mut field = ScalarField::zeros(grid);
        for val in field.values_mut() {
            *val = v;
        }
        NoiseRealization {
            field,
            spec: crate::noise::CovarianceSpec::White,
            seed: 0,
            sigma: crate::noise::SigmaKind::One,
            clamp_fraction: 0.0,
        }
    }

    fn heat_series_center(t: f64, n_terms: usize) -> f64 {
        // w(t, 0) = 0.5 − Σ_k c_k φ_k(0) e^{−(kπ/2)² t}, k odd,
        // φ_k = cos(kπx/2), c_k = ∫ (1−x²)/2 cos(kπx/2) dx
        let mut val = 0.5;
        for k in (1..=n_terms).step_by(2) {
            let kk = k as f64;
            let lam = (kk * std::f64::consts::PI / 2.0).powi(2);
            let n_quad = 20_000;
            let mut c = 0.0;
            for q in 0..n_quad {
                let x = -1.0 + 2.0 * (q as f64 + 0.5) / n_quad as f64;
                c += (1.0 - x * x) / 2.0 * (kk * std::f64::consts::PI * x / 2.0).cos();
            }
            c *= 2.0 / n_quad as f64;
            let phi0 = 1.0;
            val -= c * phi0 * (-lam * t).exp();
        }
        val
    }

    #[test]
    fn heat_superposition() {
        let grid = SpaceTimeGrid::new(1, 33).unwrap();
        let z1 = crate::noise::sample_white_noise(&grid, 0.0, 5).unwrap();
        let z2 = crate::noise::sample_white_noise(&grid, 0.0, 6).unwrap();
        let mut zsum = z1.clone();
        for (a, b) in zsum.field.values_mut().iter_mut().zip(z2.field.values()) {
            *a += b;
        }
        let w1 = solve_linear_heat(Some(&z1), &grid).unwrap();
        let w2 = solve_linear_heat(Some(&z2), &grid).unwrap();
        let ws = solve_linear_heat(Some(&zsum), &grid).unwrap();
        for ((a, b), s) in w1.values().iter().zip(w2.values()).zip(ws.values()) {
            assert!((a + b - s).abs() < 1e-9 * s.abs().max(1.0));
        }
    }

    #[test]
    fn remainder_is_pointwise_difference() {
        let grid = SpaceTimeGrid::new(1, 17).unwrap();
        let u = crate::field::band_limited(&grid, 0.0, 3, 4.0, 1).unwrap();
        let w = crate::field::band_limited(&grid, 0.0, 3, 4.0, 2).unwrap();
        let v = remainder(&u, &w).unwrap();
        let region = cylinder_region(0.0, &grid).unwrap();
        let nv = sup_norm(&v, &region).unwrap();
        let nu = sup_norm(&u, &region).unwrap();
        let nw = sup_norm(&w, &region).unwrap();
        assert!(nv <= nu + nw + 1e-12);
        let z = remainder(&u, &u).unwrap();
        assert!(z.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dimension_reduction_matches_ode_at_first_order() {
        // spatially flat noise + faces tracking the ODE trajectory: the PDE
        // interior follows the ODE up to the O(dt) splitting difference
        let nl = poly3();
        for nx in [33_usize, 65] {
            let grid = SpaceTimeGrid::new(1, nx).unwrap();
            let n = grid.nt() - 1;
            let mut w = brownian_path(n, momentum_seed());
            for v in w.iter_mut() {
                *v *= 0.5;
            }
            let traj = solve_ode(&nl, 2.0, &w).unwrap();
            let bc = BoundaryData {
                initial: vec![2.0; grid.nx],
                lateral: vec![traj.values.clone(), traj.values.clone()],
                magnitude_tag: None,
            };
            let zn = path_as_noise(&grid, &w).unwrap();
            let u = solve_rd_pde(&nl, Some(&zn), &Forcing::Zero, &bc, &grid).unwrap();
            let center = (grid.nx as i64 - 1) / 2;
            let mut gap = 0.0_f64;
            for k in 0..grid.nt() {
                gap = gap.max((u.get(k as i64, &[center]) - traj.values[k]).abs());
            }
            // the gap shrinks linearly with dt; at these resolutions it is
            // already far below the trajectory scale
            assert!(gap < 60.0 * grid.dt, "nx={nx}: gap {gap} vs dt {}", grid.dt);
        }
    }

    fn momentum_seed() -> u64 {
        314159
    }

    #[test]
    fn pde_2d_zero_and_comparison() {
        let grid = SpaceTimeGrid::new(2, 17).unwrap();
        let nl = poly3();
        let u0 =
            solve_rd_pde(&nl, None, &Forcing::Zero, &BoundaryData::zero(&grid), &grid).unwrap();
        assert!(u0.values().iter().all(|&v| v == 0.0));
        let u1 = solve_rd_pde(&nl, None, &Forcing::Zero, &BoundaryData::constant(&grid, 2.0), &grid)
            .unwrap();
        let u2 = solve_rd_pde(&nl, None, &Forcing::Zero, &BoundaryData::constant(&grid, 5.0), &grid)
            .unwrap();
        for (a, b) in u1.values().iter().zip(u2.values()) {
            assert!(*a <= b + 1e-12);
        }
    }

    #[test]
    fn manufactured_solution_second_order() {
        // u* = e^{−t} cos(πx/2): residual forcing g* = (π²/4 − 1)u* + u*³
        let nl = poly3();
        let mut errs = Vec::new();
        for nx in [17_usize, 33, 65] {
            let grid = SpaceTimeGrid::new(1, nx).unwrap();
            let ustar = |t: f64, x: f64| (-t).exp() * (std::f64::consts::PI * x / 2.0).cos();
            let gstar = move |t: f64, x: &[f64]| {
                let v = ustar(t, x[0]);
                (std::f64::consts::PI * std::f64::consts::PI / 4.0 - 1.0) * v + v * v * v
            };
            let bc = BoundaryData {
                initial: (0..grid.nx).map(|j| ustar(0.0, grid.x_of(j as i64))).collect(),
                lateral: vec![vec![0.0; grid.nt()]; 2],
                magnitude_tag: None,
            };
            let u = solve_rd_pde(&nl, None, &Forcing::Func(&gstar), &bc, &grid).unwrap();
            let region = cylinder_region(0.25, &grid).unwrap();
            let mut err = 0.0_f64;
            for ti in region.t_lo..=region.t_hi {
                for j in region.x_lo..=region.x_hi {
                    let diff = u.get(ti, &[j]) - ustar(grid.t_of(ti), grid.x_of(j));
                    err = err.max(diff.abs());
                }
            }
            errs.push((grid.dx, err));
        }
        let slope = crate::noise::fit_slope(
            &errs.iter().map(|e| e.0.ln()).collect::<Vec<_>>(),
            &errs.iter().map(|e| e.1.ln()).collect::<Vec<_>>(),
        );
        assert!((1.7..=2.4).contains(&slope), "convergence order {slope}, errors {errs:?}");
    }
}
