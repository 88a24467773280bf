//! Monte Carlo drivers: the coming-down uniformity sweep, tail-exponent
//! fits, and the invariant-measure sampler the tails are cross-checked
//! against.
//!
//! Every ensemble is a deterministic function of the config plus one base
//! seed; member i uses seed base_seed + i, so runs are reproducible and
//! embarrassingly parallel.

use crate::bounds::{pde_bound_terms, BoundReport, ReportContext};
use crate::error::{Error, Result};
use crate::geometry::{cylinder_region, SpaceTimeGrid};
use crate::kernel::KernelShape;
use crate::noise::{fit_slope, sample_noise, CovarianceSpec, SigmaKind};
use crate::nonlin::{default_lambda, NonlinSpec};
use crate::norms::{neg_holder_norm, sup_norm};
use crate::solver::{solve_rd_pde, BoundaryData, BoundaryFamily, Forcing};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

fn default_r_list() -> Vec<f64> {
    vec![0.125, 0.25, 0.375]
}

fn default_magnitudes() -> Vec<f64> {
    vec![1.0, 1e2, 1e4, 1e6]
}

fn default_ensemble() -> usize {
    1
}

fn default_noise() -> CovarianceSpec {
    CovarianceSpec::White
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub d: usize,
    pub nx: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { d: 1, nx: 257 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailsSection {
    /// Plain-text file of positive samples, one per line.
    pub samples_path: Option<String>,
    #[serde(default = "default_quantile")]
    pub quantile: f64,
}

fn default_quantile() -> f64 {
    0.95
}

impl Default for TailsSection {
    fn default() -> Self {
        TailsSection { samples_path: None, quantile: default_quantile() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantSection {
    #[serde(default = "default_chain_steps")]
    pub chain_steps: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    /// Spatial nodes of the 1-d chain (odd, endpoints pinned at 0).
    #[serde(default = "default_inv_nx")]
    pub nx: usize,
}

fn default_chain_steps() -> usize {
    20_000
}
fn default_thin() -> usize {
    10
}
fn default_inv_nx() -> usize {
    65
}

impl Default for InvariantSection {
    fn default() -> Self {
        InvariantSection {
            chain_steps: default_chain_steps(),
            thin: default_thin(),
            nx: default_inv_nx(),
        }
    }
}

/// One declarative experiment: nonlinearity, noise, grid, exponents, the
/// boundary family with its magnitude sweep, and the ensemble seeding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub nl: NonlinSpec,
    #[serde(default = "default_noise")]
    pub noise: CovarianceSpec,
    #[serde(default)]
    pub sigma: SigmaKind,
    #[serde(default)]
    pub grid: GridSpec,
    /// Hölder exponent for the norms; default 0.49 for white noise and just
    /// under (2−λ)/2 for colored noise.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Barrier parameter; default (28d+1)^{−1/2}.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_r_list")]
    pub r_list: Vec<f64>,
    #[serde(default)]
    pub boundary: BoundaryFamily,
    #[serde(default = "default_magnitudes")]
    pub magnitudes: Vec<f64>,
    #[serde(default = "default_ensemble")]
    pub ensemble: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub g_sup: f64,
    #[serde(default)]
    pub tails: TailsSection,
    #[serde(default)]
    pub invariant: InvariantSection,
    /// Dump solution/noise fields next to the reports.
    #[serde(default)]
    pub dump_fields: bool,
}

impl ExperimentConfig {
    pub fn minimal(nl: NonlinSpec) -> Self {
        ExperimentConfig {
            nl,
            noise: default_noise(),
            sigma: SigmaKind::One,
            grid: GridSpec::default(),
            alpha: None,
            lambda: None,
            r_list: default_r_list(),
            boundary: BoundaryFamily::Constant,
            magnitudes: default_magnitudes(),
            ensemble: 1,
            base_seed: 0,
            g_sup: 0.0,
            tails: TailsSection::default(),
            invariant: InvariantSection::default(),
            dump_fields: false,
        }
    }

    /// Collects every violated constraint.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        match self.nl {
            NonlinSpec::Polynomial { m } | NonlinSpec::PolynomialPlusBounded { m, .. } => {
                if m <= 1.0 {
                    errs.push(format!("m must exceed 1 (got {m})"));
                }
            }
            NonlinSpec::LogType { alpha_log } => {
                if alpha_log < 1.0 {
                    errs.push(format!("alpha_log must be >= 1 (got {alpha_log})"));
                }
            }
            NonlinSpec::Sinh => {}
        }
        if let Err(e) = SpaceTimeGrid::new(self.grid.d, self.grid.nx) {
            errs.push(format!("grid: {e}"));
        }
        if let Err(e) = self.noise.validate(self.grid.d) {
            errs.push(format!("noise: {e}"));
        }
        if let Err(e) = self.sigma.validate() {
            errs.push(format!("sigma: {e}"));
        }
        if self.ensemble < 1 {
            errs.push("ensemble size must be >= 1".into());
        }
        if let Some(a) = self.alpha {
            if !(0.0 < a && a < 1.0) {
                errs.push(format!("alpha must lie in (0,1) (got {a})"));
            }
        }
        if let Some(l) = self.lambda {
            if l <= 0.0 {
                errs.push(format!("lambda must be positive (got {l})"));
            }
        }
        for &r in &self.r_list {
            if !(0.0 < r && r <= 0.5) {
                errs.push(format!("R = {r} outside (0, 1/2]"));
            }
        }
        for &m in &self.magnitudes {
            if !m.is_finite() || m < 0.0 {
                errs.push(format!("boundary magnitude {m} invalid"));
            }
        }
        if self.g_sup < 0.0 {
            errs.push("g_sup must be >= 0".into());
        }
        if !(0.5 < self.tails.quantile && self.tails.quantile < 0.999) {
            errs.push(format!("tail quantile {} outside (0.5, 0.999)", self.tails.quantile));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigValidation(errs))
        }
    }

    pub fn effective_alpha(&self) -> f64 {
        self.alpha.unwrap_or_else(|| {
            let ceiling = self.noise.regularity_ceiling(self.grid.d);
            (ceiling - 0.01).min(0.49)
        })
    }

    pub fn effective_lambda(&self) -> f64 {
        self.lambda.unwrap_or_else(|| default_lambda(self.grid.d))
    }

    pub fn space_time_grid(&self) -> Result<SpaceTimeGrid> {
        SpaceTimeGrid::new(self.grid.d, self.grid.nx)
    }

    pub fn m_exponent(&self) -> Option<f64> {
        match self.nl {
            NonlinSpec::Polynomial { m } | NonlinSpec::PolynomialPlusBounded { m, .. } => Some(m),
            _ => None,
        }
    }
}

/// Everything run_coming_down hands back: one report per
/// (seed, magnitude, R) plus the uniformity summary.
#[derive(Debug, Clone, Serialize)]
pub struct ComingDownOutput {
    pub reports: Vec<BoundReport>,
    /// (M, max ratio over seeds and R).
    pub max_ratio_per_magnitude: Vec<(f64, f64)>,
    /// Fitted slope of ln(max ratio) against ln(M).
    pub magnitude_log_slope: f64,
    pub median_ratio: f64,
    pub alpha: f64,
    pub n_solves: usize,
}

/// The headline experiment: solve the SPDE per (seed, magnitude), measure
/// ‖u‖ on each inner cylinder against the coming-down envelope with the
/// per-seed noise norm, and fit the dependence of the worst ratio on the
/// boundary magnitude.
pub fn run_coming_down(config: &ExperimentConfig) -> Result<ComingDownOutput> {
    config.validate()?;
    let m = config.m_exponent().ok_or_else(|| {
        Error::InvalidParameter(
            "coming-down bound is stated for the polynomial family".into(),
        )
    })?;
    let grid = config.space_time_grid()?;
    let alpha = config.effective_alpha();
    let nl = config.nl.build()?;
    let p0 = cylinder_region(0.0, &grid)?;
    let regions: Vec<_> = config
        .r_list
        .iter()
        .map(|&r| cylinder_region(r, &grid).map(|b| (r, b)))
        .collect::<Result<_>>()?;

    let per_seed: Vec<Result<Vec<BoundReport>>> = (0..config.ensemble as u64)
        .into_par_iter()
        .map(|i| {
            let seed = config.base_seed + i;
            let mut noise = sample_noise(&grid, config.noise, 1.0, seed)?;
            noise.sigma = config.sigma;
            let zeta_norm = neg_holder_norm(&noise.field, alpha, &p0, KernelShape::Bump)?.value;
            let mut reports = Vec::with_capacity(config.magnitudes.len() * regions.len());
            for &mag in &config.magnitudes {
                let bc = BoundaryData::from_family(&grid, config.boundary, mag, seed);
                let g = if config.g_sup == 0.0 {
                    Forcing::Zero
                } else {
                    Forcing::Uniform(config.g_sup)
                };
                let u = solve_rd_pde(&nl, Some(&noise), &g, &bc, &grid)?;
                for (r, region) in &regions {
                    let lhs = sup_norm(&u, region)?;
                    let context = ReportContext {
                        family: Some(nl.name()),
                        alpha: Some(alpha),
                        r_offset: Some(*r),
                        seed: Some(seed),
                        boundary_magnitude: Some(mag),
                        grid_d: Some(grid.d),
                        grid_nx: Some(grid.nx),
                        dyadic_floor: Some(4.0 * grid.dx),
                    };
                    reports.push(BoundReport::new(
                        "coming_down",
                        lhs,
                        pde_bound_terms(m, alpha, *r, zeta_norm, config.g_sup),
                        context,
                    )?);
                }
            }
            Ok(reports)
        })
        .collect();

    let mut reports = Vec::new();
    for r in per_seed {
        reports.extend(r?);
    }

    let mut max_ratio_per_magnitude = Vec::new();
    for &mag in &config.magnitudes {
        let max = reports
            .iter()
            .filter(|r| r.context.boundary_magnitude == Some(mag))
            .map(|r| r.ratio)
            .fold(0.0, f64::max);
        max_ratio_per_magnitude.push((mag, max));
    }
    let magnitude_log_slope = if max_ratio_per_magnitude.len() >= 2 {
        fit_slope(
            &max_ratio_per_magnitude.iter().map(|p| p.0.max(1e-300).ln()).collect::<Vec<_>>(),
            &max_ratio_per_magnitude.iter().map(|p| p.1.max(1e-300).ln()).collect::<Vec<_>>(),
        )
    } else {
        0.0
    };
    let mut ratios: Vec<f64> = reports.iter().map(|r| r.ratio).collect();
    ratios.sort_by(|a, b| a.total_cmp(b));
    let median_ratio = ratios[ratios.len() / 2];
    let n_solves = config.ensemble * config.magnitudes.len();
    Ok(ComingDownOutput {
        reports,
        max_ratio_per_magnitude,
        magnitude_log_slope,
        median_ratio,
        alpha,
        n_solves,
    })
}

/// A fitted tail: −log P(X > x) ≈ c·x^β over the upper quantile range.
#[derive(Debug, Clone, Serialize)]
pub struct TailFit {
    pub beta: f64,
    pub c: f64,
    pub fit_range: (f64, f64),
    pub residual: f64,
    pub n_samples: usize,
    pub n_tail: usize,
}

/// Least-squares fit of log(−log(1 − ECDF)) against log x above the
/// quantile q (Weibull plotting positions).
pub fn estimate_tail_exponent(samples: &[f64], q: f64) -> Result<TailFit> {
    if samples.len() < 1000 {
        return Err(Error::InvalidParameter(format!(
            "need >= 1000 samples, got {}",
            samples.len()
        )));
    }
    if !(0.5 < q && q < 0.999) {
        return Err(Error::InvalidParameter(format!("quantile {q} outside (0.5, 0.999)")));
    }
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    if sorted[0] == sorted[n - 1] {
        return Err(Error::DegenerateSamples("all samples equal".into()));
    }
    let start = ((q * n as f64).ceil() as usize).min(n - 10);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &v) in sorted.iter().enumerate().skip(start) {
        if v <= 0.0 {
            continue;
        }
        let ecdf = (i as f64 + 1.0) / (n as f64 + 1.0);
        xs.push(v.ln());
        ys.push((-(1.0 - ecdf).ln()).ln());
    }
    if xs.len() < 10 || xs.first() == xs.last() {
        return Err(Error::DegenerateSamples("tail too flat to fit".into()));
    }
    let beta = fit_slope(&xs, &ys);
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let intercept = my - beta * mx;
    let mut res = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let e = y - (intercept + beta * x);
        res += e * e;
    }
    Ok(TailFit {
        beta,
        c: intercept.exp(),
        fit_range: (xs[0].exp(), xs[xs.len() - 1].exp()),
        residual: (res / xs.len() as f64).sqrt(),
        n_samples: n,
        n_tail: xs.len(),
    })
}

/// Output of the path-space sampler: thinned spatial fields plus chain
/// diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct InvariantRun {
    pub samples: Vec<Vec<f64>>,
    pub acceptance: f64,
    /// Acceptance within [0.1, 0.9] after auto-tuning.
    pub acceptance_ok: bool,
    pub pcn_beta: f64,
    /// Integrated autocorrelation time of ‖u‖_∞ in chain steps.
    pub autocorr_time: f64,
    pub nx: usize,
    pub dx: f64,
}

/// pCN chain for the Brownian-bridge measure reweighted by
/// exp(−∫|u|^{m+1}/(m+1)): proposals preserve the bridge reference exactly,
/// the acceptance ratio sees only the potential difference. Set
/// `weight_on = false` to sample the plain bridge (sanity runs).
pub fn sample_invariant_measure(
    m: f64,
    nx: usize,
    chain_steps: usize,
    thin: usize,
    seed: u64,
    weight_on: bool,
) -> Result<InvariantRun> {
    if chain_steps < 10_000 {
        return Err(Error::InvalidParameter(format!(
            "need >= 10^4 chain steps after burn-in, got {chain_steps}"
        )));
    }
    if nx < 5 || nx % 2 == 0 {
        return Err(Error::InvalidParameter("invariant chain needs odd nx >= 5".into()));
    }
    let dx = 2.0 / (nx - 1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let potential = |u: &[f64]| -> f64 {
        if !weight_on {
            return 0.0;
        }
        u.iter().map(|v| v.abs().powf(m + 1.0)).sum::<f64>() * dx / (m + 1.0)
    };
    // bridge reference: BM of variance dx/2 per cell, pinned at both ends
    let mut draw_bridge = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let sd = (dx / 2.0).sqrt();
        let mut w = vec![0.0; nx];
        for j in 1..nx {
            let g: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
            w[j] = w[j - 1] + sd * g;
        }
        let end = w[nx - 1];
        for (j, v) in w.iter_mut().enumerate() {
            *v -= (j as f64 / (nx - 1) as f64) * end;
        }
        w
    };

    let mut u = draw_bridge(&mut rng);
    let mut pot = potential(&u);
    let mut beta: f64 = 0.3;
    let burn = (chain_steps / 5).max(2000);
    let mut accepted = 0_usize;
    let mut proposed = 0_usize;
    let mut window_acc = 0_usize;
    let mut window_n = 0_usize;
    let mut samples = Vec::with_capacity(chain_steps / thin.max(1));
    let mut sup_series = Vec::with_capacity(chain_steps);

    for step in 0..burn + chain_steps {
        let xi = draw_bridge(&mut rng);
        let contraction = (1.0 - beta * beta).sqrt();
        let prop: Vec<f64> =
            u.iter().zip(&xi).map(|(a, b)| contraction * a + beta * b).collect();
        let prop_pot = potential(&prop);
        let accept = if prop_pot <= pot {
            true
        } else {
            let roll: f64 = rng.gen();
            roll < (pot - prop_pot).exp()
        };
        proposed += 1;
        window_n += 1;
        if accept {
            u = prop;
            pot = prop_pot;
            accepted += 1;
            window_acc += 1;
        }
        // tune toward 30% acceptance during burn-in
        if step < burn && window_n == 200 {
            let rate = window_acc as f64 / window_n as f64;
            if rate > 0.35 {
                beta = (beta * 1.15).min(1.0);
            } else if rate < 0.25 {
                beta /= 1.15;
            }
            window_acc = 0;
            window_n = 0;
        }
        if step == burn {
            accepted = 0;
            proposed = 0;
        }
        if step >= burn {
            let sup = u.iter().cloned().fold(0.0, |a: f64, b| a.max(b.abs()));
            sup_series.push(sup);
            if (step - burn) % thin.max(1) == 0 {
                samples.push(u.clone());
            }
        }
    }
    let acceptance = accepted as f64 / proposed.max(1) as f64;
    Ok(InvariantRun {
        samples,
        acceptance,
        acceptance_ok: (0.1..=0.9).contains(&acceptance),
        pcn_beta: beta,
        autocorr_time: integrated_autocorr(&sup_series),
        nx,
        dx,
    })
}

/// Windowed integrated autocorrelation time.
fn integrated_autocorr(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 10 {
        return 1.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var: f64 = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..(n / 4).min(2000) {
        let mut c = 0.0;
        for i in 0..n - lag {
            c += (series[i] - mean) * (series[i + lag] - mean);
        }
        c /= (n - lag) as f64 * var;
        if c < 0.05 {
            break;
        }
        tau += 2.0 * c;
    }
    tau
}

/// Comparison of the SPDE-side and invariant-side tail exponents against
/// the common α → 1/2 limit (m+3)/2.
#[derive(Debug, Clone, Serialize)]
pub struct IntegrabilityReport {
    pub m: f64,
    pub alpha: f64,
    pub beta_sde: f64,
    pub beta_invariant: f64,
    /// 2+(m−1)α: the SPDE-side prediction.
    pub predicted_sde: f64,
    /// 1+(m+1)α: the invariant-side prediction.
    pub predicted_invariant: f64,
    /// (m+3)/2, the shared limit.
    pub target: f64,
    pub gap: f64,
    pub band: (f64, f64),
    pub pass: bool,
}

pub fn compare_integrability(
    m: f64,
    alpha: f64,
    sde: &TailFit,
    invariant: &TailFit,
    band: (f64, f64),
    max_gap: f64,
) -> IntegrabilityReport {
    let target = (m + 3.0) / 2.0;
    let gap = (sde.beta - invariant.beta).abs();
    let within = |b: f64| band.0 <= b && b <= band.1;
    IntegrabilityReport {
        m,
        alpha,
        beta_sde: sde.beta,
        beta_invariant: invariant.beta,
        predicted_sde: 2.0 + (m - 1.0) * alpha,
        predicted_invariant: 1.0 + (m + 1.0) * alpha,
        target,
        gap,
        band,
        pass: within(sde.beta) && within(invariant.beta) && gap < max_gap,
    }
}
