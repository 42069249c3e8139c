use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::Serialize;

use super::report::{Cell, Report};
use crate::chaos::{chaos_poly_dp, chaos_sum_enumerated, MAX_ENUMERATION_STEPS, MAX_RING_STEPS};
use crate::environment::{derive_seed, omega_stats, sample_environment, Disorder, DisorderKind, EnvironmentSpec};
use crate::error::{Error, Result};
use crate::ldp::{ldp_limit, rescaled_ssrw_ln, LdpQuery};
use crate::moments::{critical_point, moment_convergence_table, taylor_check, BetaMethod, TableSpec};
use crate::rwre::{evolve_rwre, rescaled_rwre, time_reversal_law_check};
use crate::scaling::ScalingFrame;
use crate::she::{heat_solution, she_replicas, she_second_moment_series, NoiseKind, SheParams};
use crate::stats::SummaryStats;

/// Chaos orders summed for second-moment targets; the terms decay like
/// `1/Γ(k/2)`, far below double precision well before this.
pub const SERIES_TERMS: u32 = 80;

/// Sites sampled by `omega_stats` when estimating `σ`.
pub const OMEGA_SAMPLES: u64 = 200_000;

fn check_eps_list(eps: &[f64]) -> Result<()> {
    if eps.is_empty() {
        return Err(Error::invalid("eps", "empty list"));
    }
    for &e in eps {
        if !(e > 0.0 && e <= 0.5) {
            return Err(Error::invalid("eps", format!("{e} is not in (0, 0.5]")));
        }
    }
    Ok(())
}

fn check_replicas(replicas: u64) -> Result<()> {
    if replicas == 0 {
        return Err(Error::invalid("replicas", "need at least one"));
    }
    Ok(())
}

fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LdpCheckConfig {
    pub v: f64,
    pub t: f64,
    pub x: f64,
    pub m1: i32,
    pub m2: i32,
    pub eps: Vec<f64>,
    /// Bound on the relative error at the last `ε`.
    pub tolerance: f64,
}

impl Default for LdpCheckConfig {
    fn default() -> Self {
        LdpCheckConfig {
            v: 0.5,
            t: 1.0,
            x: 0.0,
            m1: 0,
            m2: 0,
            eps: vec![0.2, 0.1, 0.05, 0.02],
            tolerance: 0.05,
        }
    }
}

/// Rescaled walk probability against its Gaussian limit along `ε`; passes
/// when the relative error shrinks at every step and ends below tolerance.
pub fn ldp_check(cfg: &LdpCheckConfig) -> Result<Report> {
    let started = Instant::now();
    check_eps_list(&cfg.eps)?;
    let limit = ldp_limit(cfg.v, cfg.t, cfg.x, cfg.m1, cfg.m2)?;
    let mut rep = Report::new(
        "ldp-check",
        None,
        cfg,
        vec![
            "epsilon",
            "steps",
            "site",
            "t_eps",
            "x_eps",
            "rescaled",
            "limit",
            "rel_error",
        ],
    )?;
    let mut errors = Vec::new();
    let mut snapped = Vec::new();
    for &eps in &cfg.eps {
        let frame = ScalingFrame::new(eps, cfg.v)?;
        let q = LdpQuery::new(frame, cfg.t, cfg.x, cfg.m1, cfg.m2)?;
        let sp = frame.snap(cfg.t, cfg.x)?;
        snapped.push(sp);
        let value = rescaled_ssrw_ln(&q)?.exp();
        let err = (value / limit - 1.0).abs();
        errors.push(err);
        rep.push(vec![
            eps.into(),
            sp.point.i.into(),
            sp.point.j.into(),
            sp.t_eps.into(),
            sp.x_eps.into(),
            value.into(),
            limit.into(),
            err.into(),
        ]);
    }
    rep.derive("snapped", &snapped)?;
    let last = *errors.last().expect("non-empty");
    let decreasing = strictly_decreasing(&errors);
    rep.note("decreasing", decreasing)?;
    rep.note("final_rel_error", last)?;
    rep.passed = decreasing && last <= cfg.tolerance;
    Ok(rep.finish(started))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChaosVerifyConfig {
    pub n: u64,
    pub seed: u64,
    pub dist: DisorderKind,
    pub eps: f64,
    pub trials: u64,
    /// Bound on `|DP − chaos sum|`.
    pub residual_tolerance: f64,
    /// Bound on the relative error of the polynomial expansion at `η = √ε`.
    pub ring_tolerance: f64,
}

impl Default for ChaosVerifyConfig {
    fn default() -> Self {
        ChaosVerifyConfig {
            n: 8,
            seed: 1,
            dist: DisorderKind::UniformBounded { a: 1.0 },
            eps: 0.25,
            trials: 100,
            residual_tolerance: 1e-12,
            ring_tolerance: 1e-13,
        }
    }
}

/// For random environments and endpoints, compares the walk DP with the
/// full chaos sum (`N ≤ 8`) and with the polynomial expansion (`N ≤ 24`).
pub fn chaos_verify(cfg: &ChaosVerifyConfig) -> Result<Report> {
    let started = Instant::now();
    if !(1..=MAX_RING_STEPS).contains(&cfg.n) {
        return Err(Error::invalid("n", format!("{} is not in 1..={MAX_RING_STEPS}", cfg.n)));
    }
    if !(cfg.eps > 0.0 && cfg.eps <= 1.0) {
        return Err(Error::invalid("eps", format!("{} is not in (0, 1]", cfg.eps)));
    }
    check_replicas(cfg.trials)?;
    EnvironmentSpec::new(cfg.dist, cfg.eps, cfg.seed)?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
    let draws: Vec<(u64, i64)> = (0..cfg.trials)
        .map(|_| {
            let env_seed: u64 = rng.random();
            let k = rng.random_range(0..=cfg.n as i64);
            (env_seed, -(cfg.n as i64) + 2 * k)
        })
        .collect();
    let enumerate = cfg.n <= MAX_ENUMERATION_STEPS;
    let rows: Vec<Vec<Cell>> = draws
        .iter()
        .enumerate()
        .map(|(trial, &(env_seed, y))| {
            let env = sample_environment(EnvironmentSpec::new(cfg.dist, cfg.eps, env_seed)?, cfg.n)?;
            let dp = evolve_rwre(&env, cfg.n)?.get(y).exp();
            let (series, residual) = if enumerate {
                let s = chaos_sum_enumerated(&env, cfg.n, y)?;
                (Some(s), Some((dp - s).abs()))
            } else {
                (None, None)
            };
            let ring = chaos_poly_dp(&env, cfg.n, y)?.eval(env.root_eps());
            let ring_err = if dp > 0.0 { (ring / dp - 1.0).abs() } else { ring.abs() };
            Ok(vec![
                (trial as u64).into(),
                Cell::Text(env_seed.to_string()),
                y.into(),
                dp.into(),
                series.into(),
                residual.into(),
                ring.into(),
                ring_err.into(),
            ])
        })
        .collect::<Result<_>>()?;
    let mut rep = Report::new(
        "chaos-verify",
        Some(cfg.seed),
        cfg,
        vec![
            "trial",
            "env_seed",
            "y",
            "dp",
            "chaos_sum",
            "residual",
            "ring_value",
            "ring_rel_error",
        ],
    )?;
    rep.rows = rows;
    let max_res = rep.column("residual").into_iter().fold(0.0, f64::max);
    let max_ring = rep.column("ring_rel_error").into_iter().fold(0.0, f64::max);
    rep.note("max_residual", enumerate.then_some(max_res))?;
    rep.note("max_ring_rel_error", max_ring)?;
    rep.passed = max_res <= cfg.residual_tolerance && max_ring <= cfg.ring_tolerance;
    Ok(rep.finish(started))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LawCheckConfig {
    pub n: u64,
    pub eps: f64,
}

impl Default for LawCheckConfig {
    fn default() -> Self {
        LawCheckConfig { n: 3, eps: 0.25 }
    }
}

/// Exhaustive equality-in-law check between the polymer and the walk.
pub fn law_check(cfg: &LawCheckConfig) -> Result<Report> {
    let started = Instant::now();
    let law = time_reversal_law_check(cfg.n, cfg.eps)?;
    let mut rep = Report::new(
        "law-check",
        None,
        cfg,
        vec!["x", "walk_site", "support", "max_value_gap", "max_weight_gap", "equal"],
    )?;
    for r in &law.rows {
        rep.push(vec![
            r.x.into(),
            r.walk_site.into(),
            r.support.into(),
            r.max_value_gap.into(),
            r.max_weight_gap.into(),
            r.equal.into(),
        ]);
    }
    rep.passed = law.all_equal;
    Ok(rep.finish(started))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RwreMcConfig {
    pub v: f64,
    pub t: f64,
    pub x: f64,
    pub eps: Vec<f64>,
    pub replicas: u64,
    pub dist: DisorderKind,
    pub seed: u64,
}

impl Default for RwreMcConfig {
    fn default() -> Self {
        RwreMcConfig {
            v: 0.5,
            t: 1.0,
            x: 0.0,
            eps: vec![0.1],
            replicas: 1000,
            dist: DisorderKind::Rademacher,
            seed: 1,
        }
    }
}

fn stat_cells(s: &SummaryStats) -> Vec<Cell> {
    vec![
        s.mean.into(),
        s.stderr.into(),
        s.variance.into(),
        s.min.into(),
        s.max.into(),
    ]
}

/// Monte Carlo over environments of the rescaled walk probability, one row
/// per `ε`. Replica `r` uses the environment seeded by `derive_seed(seed, r)`.
pub fn rwre_mc(cfg: &RwreMcConfig) -> Result<Report> {
    let started = Instant::now();
    check_eps_list(&cfg.eps)?;
    check_replicas(cfg.replicas)?;
    let heat = heat_solution(cfg.v, cfg.t, cfg.x)?;
    let mut rep = Report::new(
        "rwre-mc",
        Some(cfg.seed),
        cfg,
        vec![
            "epsilon",
            "steps",
            "site",
            "replicas",
            "mean",
            "stderr",
            "variance",
            "min",
            "max",
            "exact_mean",
            "second_moment",
            "second_moment_stderr",
            "height_mean",
            "height_stderr",
            "sigma",
            "mean_target",
            "second_moment_target",
        ],
    )?;
    let mut snapped = Vec::new();
    let mut plan = Vec::new();
    for &eps in &cfg.eps {
        let frame = ScalingFrame::new(eps, cfg.v)?;
        let spec = EnvironmentSpec::new(cfg.dist, eps, cfg.seed)?;
        let exact = rescaled_ssrw_ln(&LdpQuery::new(frame, cfg.t, cfg.x, 0, 0)?)?.exp();
        let sp = frame.snap(cfg.t, cfg.x)?;
        snapped.push(sp);
        plan.push((eps, frame, spec, exact, sp));
    }
    rep.derive("snapped", &snapped)?;
    for (eps, frame, spec, exact, sp) in plan {
        let samples: Vec<(f64, f64)> = (0..cfg.replicas)
            .into_par_iter()
            .map(|r| {
                let env = sample_environment(spec.with_seed(derive_seed(cfg.seed, r)), sp.point.i)?;
                let s = rescaled_rwre(&env, &frame, cfg.t, cfg.x)?;
                Ok((s.value, s.ln_value))
            })
            .collect::<Result<_>>()?;
        let values: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let squares: Vec<f64> = values.iter().map(|v| v * v).collect();
        let heights: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let (s, s2, h) = (
            SummaryStats::from_values(&values),
            SummaryStats::from_values(&squares),
            SummaryStats::from_values(&heights),
        );
        let sigma = omega_stats(spec, OMEGA_SAMPLES, cfg.seed)?.sigma;
        let target2 = she_second_moment_series(cfg.v, sigma, cfg.t, cfg.x, SERIES_TERMS)?;
        let mut row = vec![eps.into(), sp.point.i.into(), sp.point.j.into(), cfg.replicas.into()];
        row.extend(stat_cells(&s));
        row.extend([
            exact.into(),
            s2.mean.into(),
            s2.stderr.into(),
            h.mean.into(),
            h.stderr.into(),
            sigma.into(),
            heat.into(),
            target2.into(),
        ]);
        rep.push(row);
    }
    Ok(rep.finish(started))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SheRunConfig {
    pub v: f64,
    pub sigma: f64,
    pub t: f64,
    pub x: f64,
    pub dx: f64,
    pub half_width: f64,
    pub replicas: u64,
    pub seed: u64,
    pub noise: NoiseKind,
}

impl Default for SheRunConfig {
    fn default() -> Self {
        SheRunConfig {
            v: 0.5,
            sigma: std::f64::consts::SQRT_2,
            t: 0.5,
            x: 0.0,
            dx: 0.02,
            half_width: 6.0,
            replicas: 100,
            seed: 1,
            noise: NoiseKind::Gaussian,
        }
    }
}

/// Replicas of the finite-difference SHE, with the field at `x` and the
/// mass per replica, and moment targets in the summary.
pub fn she_run(cfg: &SheRunConfig) -> Result<Report> {
    let started = Instant::now();
    check_replicas(cfg.replicas)?;
    let params = SheParams::new(cfg.v, cfg.sigma, cfg.t, cfg.dx, cfg.half_width).with_noise(cfg.noise);
    let grid = params.grid()?;
    let heat = heat_solution(cfg.v, cfg.t, cfg.x)?;
    let target2 = she_second_moment_series(cfg.v, cfg.sigma, cfg.t, cfg.x, SERIES_TERMS)?;
    let samples = she_replicas(&params, cfg.seed, cfg.replicas, cfg.x)?;
    let mut rep = Report::new("she-solve", Some(cfg.seed), cfg, vec!["replica", "value", "mass"])?;
    rep.derive("grid", grid)?;
    for s in &samples {
        rep.push(vec![s.replica.into(), s.value.into(), s.mass.into()]);
    }
    let values: Vec<f64> = samples.iter().map(|s| s.value).collect();
    let squares: Vec<f64> = values.iter().map(|v| v * v).collect();
    let (s, s2) = (SummaryStats::from_values(&values), SummaryStats::from_values(&squares));
    rep.note("mean", s.mean)?;
    rep.note("stderr", s.stderr)?;
    rep.note("second_moment", s2.mean)?;
    rep.note("second_moment_stderr", s2.stderr)?;
    rep.note("mean_target", heat)?;
    rep.note("second_moment_target", target2)?;
    Ok(rep.finish(started))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentsConfig {
    pub k: usize,
    pub gamma: f64,
    pub t: f64,
    pub x: Vec<f64>,
    pub eps: Vec<f64>,
    /// Nodes per circle.
    pub quad_points: usize,
    /// Nodes per vertical line of the SHE integral.
    pub she_points: usize,
    pub method: BetaMethod,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        MomentsConfig {
            k: 1,
            gamma: 0.25,
            t: 1.0,
            x: vec![0.0],
            eps: vec![0.2, 0.1, 0.05],
            quad_points: 1024,
            she_points: 400,
            method: BetaMethod::Contour,
        }
    }
}

/// Rescaled Beta-polymer moments against the SHE moment along `ε`.
pub fn moments(cfg: &MomentsConfig) -> Result<Report> {
    let started = Instant::now();
    check_eps_list(&cfg.eps)?;
    let xs = match (cfg.k, cfg.x.len()) {
        (k, n) if k == n => cfg.x.clone(),
        (k, 1) => vec![cfg.x[0]; k],
        (k, n) => return Err(Error::invalid("x", format!("{n} points for k = {k}"))),
    };
    let rows = moment_convergence_table(&TableSpec {
        gamma: cfg.gamma,
        t: cfg.t,
        xs,
        epsilons: cfg.eps.clone(),
        n_points: cfg.quad_points,
        she_points: cfg.she_points,
        k2_separation: 1.5,
        method: cfg.method,
    })?;
    let mut rep = Report::new(
        "moments",
        None,
        cfg,
        vec![
            "epsilon",
            "k",
            "rescaled_beta_moment",
            "she_moment",
            "ratio",
            "steps",
            "sites",
            "imag_residual",
        ],
    )?;
    for r in &rows {
        let sites: Vec<String> = r.sites.iter().map(|s| s.to_string()).collect();
        rep.push(vec![
            r.epsilon.into(),
            r.k.into(),
            r.rescaled_beta_moment.into(),
            r.she_moment.into(),
            r.ratio.into(),
            r.steps.into(),
            Cell::Text(sites.join(";")),
            r.imag_residual.into(),
        ]);
    }
    let errs: Vec<f64> = rows.iter().map(|r| (r.ratio - 1.0).abs()).collect();
    rep.note("ratio_error_decreasing", strictly_decreasing(&errs))?;
    Ok(rep.finish(started))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalPointConfig {
    pub gamma: f64,
    pub eps: Vec<f64>,
    pub t: f64,
    pub x: f64,
    /// Bound on `|f'(z0)|`.
    pub residual_tolerance: f64,
    /// Bound on the relative gap between the displayed quadratic coefficient
    /// and its finite-difference estimate.
    pub quadratic_tolerance: f64,
}

impl Default for CriticalPointConfig {
    fn default() -> Self {
        CriticalPointConfig {
            gamma: 0.25,
            eps: vec![0.1, 0.05, 0.02],
            t: 1.0,
            x: 0.0,
            residual_tolerance: 1e-12,
            quadratic_tolerance: 1e-4,
        }
    }
}

/// The finite-difference quadratic coefficient picks up higher-order terms
/// of relative size `O(ε²)`; it is held to tolerance only from here down.
pub const QUADRATIC_CHECK_EPS: f64 = 0.05;

/// Saddle point of the Beta-polymer exponent and its quadratic expansion.
pub fn critical_point_run(cfg: &CriticalPointConfig) -> Result<Report> {
    let started = Instant::now();
    check_eps_list(&cfg.eps)?;
    let mut rep = Report::new(
        "critical-point",
        None,
        cfg,
        vec![
            "epsilon",
            "steps",
            "site",
            "z0_asymptotic",
            "z0_numeric",
            "exact_root",
            "derivative_residual",
            "quadratic_coefficient",
            "fd_quadratic_coefficient",
            "quadratic_rel_error",
            "zeroth_order_deviation",
        ],
    )?;
    let mut passed = true;
    for &eps in &cfg.eps {
        let cp = critical_point(cfg.gamma, eps, cfg.t, cfg.x)?;
        let tr = taylor_check(cfg.gamma, eps, cfg.t, cfg.x, &[0.0])?;
        let f = cp.exponent;
        let quad_err = (tr.fd_quadratic_coefficient / tr.quadratic_coefficient - 1.0).abs();
        passed &= cp.derivative_residual <= cfg.residual_tolerance;
        if eps <= QUADRATIC_CHECK_EPS {
            passed &= quad_err <= cfg.quadratic_tolerance;
        }
        rep.push(vec![
            eps.into(),
            f.steps.into(),
            f.site.into(),
            cp.z0_asymptotic.into(),
            cp.z0_numeric.into(),
            f.exact_root().into(),
            cp.derivative_residual.into(),
            tr.quadratic_coefficient.into(),
            tr.fd_quadratic_coefficient.into(),
            quad_err.into(),
            tr.zeroth_order_deviation.into(),
        ]);
    }
    let dev = rep.column("zeroth_order_deviation");
    rep.note("zeroth_order_decreasing", strictly_decreasing(&dev))?;
    rep.passed = passed;
    Ok(rep.finish(started))
}
