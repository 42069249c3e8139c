//! The limiting objects: the heat flow of `2δ`, an explicit Itô scheme for
//! `∂_t U = ½(1−v²) ∂_xx U + vσ U Ẇ`, and its second moment from the Wiener
//! chaos.
//!
//! Second moment. Chaos terms are orthogonal, and `p_a(s,y)² =
//! (4πas)^{-1/2} p_{a/2}(s,y)`. The spatial integrals then chain into
//! `p_{a/2}(t,x)`. What remains is the Dirichlet integral
//! `∫_{Σ τ_l = t} ∏ τ_l^{-1/2} = Γ(½)^{k+1} t^{(k−1)/2} / Γ((k+1)/2)`, so
//!
//! `E U(t,x)² = 4 p_{a/2}(t,x) Σ_k (vσ)^{2k} (4a)^{-(k+1)/2} t^{(k−1)/2} / Γ((k+1)/2)`.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::derive_seed;
use crate::error::{check_open, check_positive, Error, Result};
use crate::ldp::heat_kernel;
use crate::quadrature::GaussLegendre;

/// `2 p_{1−v²}(t, x)`: the solution of the noiseless equation from `2δ`.
pub fn heat_solution(v: f64, t: f64, x: f64) -> Result<f64> {
    check_open("v", v, -1.0, 1.0)?;
    Ok(2.0 * heat_kernel(1.0 - v * v, t, x)?)
}

/// Law of the per-node noise increments.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Standard normal.
    #[default]
    Gaussian,
    /// ±1 with probability ½. Same mean and covariance as the Gaussian, so
    /// first and second moments of the linear scheme are identical.
    TwoPoint,
}

/// Minimum ratio between the stability limit `dx²/(2a)` and `dt`.
pub const MIN_SAFETY: f64 = 1.25;

/// Fraction of the total mass allowed next to the absorbing boundary.
pub const LEAK_LIMIT: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SheParams {
    pub v: f64,
    pub sigma: f64,
    pub t: f64,
    pub dx: f64,
    pub half_width: f64,
    /// Requested time step; `None` takes the largest stable one.
    pub dt: Option<f64>,
    pub noise: NoiseKind,
}

/// Derived discretisation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SheGrid {
    pub nodes: usize,
    pub centre: usize,
    pub dt: f64,
    pub n_steps: usize,
    /// `dt ½a / dx²`.
    pub diffusion: f64,
    /// `vσ √(dt/dx)`.
    pub noise_gain: f64,
}

impl SheParams {
    pub fn new(v: f64, sigma: f64, t: f64, dx: f64, half_width: f64) -> Self {
        SheParams {
            v,
            sigma,
            t,
            dx,
            half_width,
            dt: None,
            noise: NoiseKind::Gaussian,
        }
    }

    pub fn with_noise(self, noise: NoiseKind) -> Self {
        SheParams { noise, ..self }
    }

    /// Smallest admissible half-width, `6 √((1−v²) t)`.
    pub fn min_half_width(v: f64, t: f64) -> f64 {
        6.0 * ((1.0 - v * v) * t).sqrt()
    }

    pub fn grid(&self) -> Result<SheGrid> {
        check_open("v", self.v, -1.0, 1.0)?;
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid("sigma", format!("{} is not ≥ 0", self.sigma)));
        }
        check_positive("t", self.t)?;
        check_positive("dx", self.dx)?;
        let min_l = Self::min_half_width(self.v, self.t);
        if !(self.half_width >= min_l) {
            return Err(Error::invalid(
                "half_width",
                format!("{} < 6√((1−v²)t) = {min_l}", self.half_width),
            ));
        }
        let a = 1.0 - self.v * self.v;
        let bound = self.dx * self.dx / (2.0 * a * MIN_SAFETY);
        let target = match self.dt {
            Some(dt) if !(dt > 0.0) => return Err(Error::invalid("dt", format!("{dt} is not positive"))),
            Some(dt) if dt > bound => return Err(Error::Unstable { dt, bound }),
            Some(dt) => dt,
            None => bound,
        };
        let n_steps = (self.t / target).ceil() as usize;
        let dt = self.t / n_steps as f64;
        let half = (self.half_width / self.dx).round() as usize;
        Ok(SheGrid {
            nodes: 2 * half + 1,
            centre: half,
            dt,
            n_steps,
            diffusion: dt * 0.5 * a / (self.dx * self.dx),
            noise_gain: self.v * self.sigma * (dt / self.dx).sqrt(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldGrid {
    pub dx: f64,
    pub dt: f64,
    pub half_width: f64,
    pub n_steps: usize,
    /// Values at `x_k = (k − centre) dx`.
    pub values: Vec<f64>,
}

impl FieldGrid {
    fn centre(&self) -> usize {
        self.values.len() / 2
    }

    pub fn x(&self, k: usize) -> f64 {
        (k as f64 - self.centre() as f64) * self.dx
    }

    /// Value at the node nearest `x`.
    pub fn value_at(&self, x: f64) -> f64 {
        let k = self.centre() as f64 + (x / self.dx).round();
        if k < 0.0 || k >= self.values.len() as f64 {
            0.0
        } else {
            self.values[k as usize]
        }
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx
    }
}

/// One step with ±1 noise: `w_k = u_k (1 − 2c ± g) + c (u_{k−1} + u_{k+1})`,
/// one random bit per node taken 64 at a time. A set bit draws −g.
#[inline(always)]
fn step_two_point(u: &[f64], w: &mut [f64], rng: &mut Xoshiro256PlusPlus, c: f64, g: f64) {
    let n = u.len();
    let a = 1.0 - 2.0 * c;
    let gb = g.to_bits();
    w[0] = 0.0;
    w[n - 1] = 0.0;
    let mut k0 = 1;
    while k0 < n - 1 {
        let len = (n - 1 - k0).min(64);
        let bits = rng.next_u64();
        let uu = &u[k0 - 1..k0 + len + 1];
        let ww = &mut w[k0..k0 + len];
        for j in 0..len {
            // Flip the sign bit of g to draw ±g without a branch.
            let s = f64::from_bits(gb | (((bits >> j) & 1) << 63));
            ww[j] = uu[j + 1] * (a + s) + c * (uu[j] + uu[j + 2]);
        }
        k0 += len;
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn run_two_point_avx2(
    u: &mut Vec<f64>,
    w: &mut Vec<f64>,
    rng: &mut Xoshiro256PlusPlus,
    c: f64,
    g: f64,
    steps: usize,
) {
    for _ in 0..steps {
        step_two_point(u, w, rng, c, g);
        std::mem::swap(u, w);
    }
}

fn run_two_point(u: &mut Vec<f64>, w: &mut Vec<f64>, rng: &mut Xoshiro256PlusPlus, c: f64, g: f64, steps: usize) {
    #[cfg(target_arch = "x86_64")]
    if is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma") {
        // SAFETY: the required CPU features were detected at runtime. Rust
        // never contracts `a*b + c` into an FMA, so both paths round alike.
        unsafe { run_two_point_avx2(u, w, rng, c, g, steps) };
        return;
    }
    for _ in 0..steps {
        step_two_point(u, w, rng, c, g);
        std::mem::swap(u, w);
    }
}

fn first_negative(values: &[f64]) -> Option<(usize, f64)> {
    values.iter().position(|&v| v < 0.0).map(|k| (k, values[k]))
}

/// Runs the explicit Itô scheme from `u⁰ = (2/dx) 1{x = 0}` with zero
/// boundary values. Noise is drawn from a generator seeded with `seed`.
pub fn she_solve(params: &SheParams, seed: u64) -> Result<FieldGrid> {
    let grid = params.grid()?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut u = vec![0.0; grid.nodes];
    let mut w = vec![0.0; grid.nodes];
    u[grid.centre] = 2.0 / params.dx;
    let (c, g) = (grid.diffusion, grid.noise_gain);
    match params.noise {
        NoiseKind::TwoPoint if 1.0 - 2.0 * c - g >= 0.0 => {
            // Every coefficient of the update is nonnegative, so the field
            // cannot change sign and the per-step check is skipped.
            run_two_point(&mut u, &mut w, &mut rng, c, g, grid.n_steps);
        }
        NoiseKind::TwoPoint => {
            for step in 0..grid.n_steps {
                step_two_point(&u, &mut w, &mut rng, c, g);
                std::mem::swap(&mut u, &mut w);
                if let Some((node, value)) = first_negative(&u) {
                    return Err(Error::NegativeField { step, node, value });
                }
            }
        }
        NoiseKind::Gaussian => {
            let n = grid.nodes;
            for step in 0..grid.n_steps {
                w[0] = 0.0;
                w[n - 1] = 0.0;
                for k in 1..n - 1 {
                    let xi: f64 = rng.sample(StandardNormal);
                    w[k] = u[k] + c * (u[k + 1] - 2.0 * u[k] + u[k - 1]) + g * u[k] * xi;
                }
                std::mem::swap(&mut u, &mut w);
                if let Some((node, value)) = first_negative(&u) {
                    return Err(Error::NegativeField { step, node, value });
                }
            }
        }
    }
    let field = FieldGrid {
        dx: params.dx,
        dt: grid.dt,
        half_width: grid.centre as f64 * params.dx,
        n_steps: grid.n_steps,
        values: u,
    };
    let n = field.values.len();
    let total: f64 = field.values.iter().sum();
    let edge = field.values[1] + field.values[n - 2];
    if total > 0.0 && edge > LEAK_LIMIT * total {
        return Err(Error::BoundaryLeak {
            leak: edge / total,
            limit: LEAK_LIMIT,
        });
    }
    Ok(field)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReplicaSample {
    pub replica: u64,
    pub value: f64,
    pub mass: f64,
}

/// Runs `replicas` independent solves (replica `r` seeded by
/// `derive_seed(seed, r)`) and records the field at the node nearest `x`
/// and the total mass, in replica order.
pub fn she_replicas(params: &SheParams, seed: u64, replicas: u64, x: f64) -> Result<Vec<ReplicaSample>> {
    params.grid()?;
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let f = she_solve(params, derive_seed(seed, r))?;
            Ok(ReplicaSample {
                replica: r,
                value: f.value_at(x),
                mass: f.mass(),
            })
        })
        .collect()
}

/// `ln Γ(m/2)` for integer `m ≥ 1`, by the recursion from `Γ(½)` or `Γ(1)`.
fn ln_gamma_half(m: u32) -> f64 {
    if m.is_multiple_of(2) {
        (1..m / 2).map(|i| (i as f64).ln()).sum()
    } else {
        0.5 * PI.ln() + (0..(m - 1) / 2).map(|i| (i as f64 + 0.5).ln()).sum::<f64>()
    }
}

fn check_moment_args(v: f64, sigma: f64, t: f64) -> Result<()> {
    check_open("v", v, -1.0, 1.0)?;
    check_positive("t", t)?;
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid("sigma", format!("{sigma} is not ≥ 0")));
    }
    Ok(())
}

/// Term `k` of the second-moment series.
pub fn she_second_moment_term(v: f64, sigma: f64, t: f64, x: f64, k: u32) -> Result<f64> {
    check_moment_args(v, sigma, t)?;
    let a = 1.0 - v * v;
    let vs = (v * sigma).abs();
    if vs == 0.0 && k > 0 {
        return Ok(0.0);
    }
    let kf = k as f64;
    let ln_term = 2.0 * kf * if k > 0 { vs.ln() } else { 0.0 } - 0.5 * (kf + 1.0) * (4.0 * a).ln()
        + 0.5 * (kf - 1.0) * t.ln()
        - ln_gamma_half(k + 1);
    Ok(4.0 * heat_kernel(0.5 * a, t, x)? * ln_term.exp())
}

/// `E U(t, x)²` summed over chaos orders `0..=k_max`.
pub fn she_second_moment_series(v: f64, sigma: f64, t: f64, x: f64, k_max: u32) -> Result<f64> {
    (0..=k_max).map(|k| she_second_moment_term(v, sigma, t, x, k)).sum()
}

/// Direct numerical value of `(vσ)^{2k} ∫_{Δ_k(t)} ∫_{ℝ^k} ∏_{l=1}^{k+1}
/// p_a(Δt_l, Δx_l)² dx dt`, `a = 1 − v²`, for `k ≤ 3`.
///
/// The Gaussian integrals are done in closed form link by link; the time
/// simplex is integrated numerically. (The chaos term of `E U²` is four
/// times this, from the `2δ` initial mass.)
pub fn she_second_moment_quadrature(v: f64, sigma: f64, t: f64, x: f64, k: u32) -> Result<f64> {
    check_moment_args(v, sigma, t)?;
    if k > 3 {
        return Err(Error::invalid("k", format!("{k} > 3")));
    }
    let a = 1.0 - v * v;
    let spatial = heat_kernel(0.5 * a, t, x)? * (4.0 * PI * a).powf(-0.5 * (k as f64 + 1.0));
    let gl = GaussLegendre::new(32);
    Ok((v * sigma).powi(2 * k as i32) * spatial * simplex_integral(&gl, k as usize + 1, t))
}

/// `∫_{τ_1+…+τ_m = T, τ ≥ 0} ∏ τ_l^{-1/2}` by peeling off one time at a
/// time. Each split `[0, T/2] ∪ [T/2, T]` gets the substitution `τ = s²` or
/// `T − τ = s²`, which removes the inverse-square-root endpoint behaviour.
fn simplex_integral(gl: &GaussLegendre, m: usize, total: f64) -> f64 {
    if m == 1 {
        return total.powf(-0.5);
    }
    let h = (0.5 * total).sqrt();
    let near_zero = gl.integrate(0.0, h, |s| 2.0 * simplex_integral(gl, m - 1, total - s * s));
    let near_total = gl.integrate(0.0, h, |s| {
        2.0 * s * (total - s * s).powf(-0.5) * simplex_integral(gl, m - 1, s * s)
    });
    near_zero + near_total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::SummaryStats;

    #[test]
    fn heat_solution_values() {
        let h = heat_solution(0.5, 1.0, 0.0).unwrap();
        assert!((h - 0.921_318).abs() < 1e-6);
        assert_eq!(
            heat_solution(0.5, 1.0, 0.4).unwrap(),
            heat_solution(0.5, 1.0, -0.4).unwrap()
        );
        assert!(heat_solution(0.5, 0.0, 0.0).is_err());
        let gl = GaussLegendre::new(200);
        let mass = gl.integrate(-12.0, 12.0, |x| heat_solution(0.5, 1.0, x).unwrap());
        assert!((mass - 2.0).abs() < 1e-10);
    }

    #[test]
    fn grid_validation() {
        let p = SheParams::new(0.5, 1.0, 0.5, 0.02, 4.0);
        let g = p.grid().unwrap();
        assert!(g.dt <= 0.02f64.powi(2) / (2.0 * 0.75 * MIN_SAFETY) * (1.0 + 1e-12));
        assert_eq!(g.nodes, 401);
        assert!(SheParams { dt: Some(1e-3), ..p }.grid().is_err());
        assert!(matches!(
            SheParams { dt: Some(1e-3), ..p }.grid(),
            Err(Error::Unstable { .. })
        ));
        assert!(SheParams::new(0.5, 1.0, 0.5, 0.02, 1.0).grid().is_err());
    }

    #[test]
    fn noiseless_run_matches_heat_flow() {
        let p = SheParams::new(0.5, 0.0, 0.5, 0.01, 4.0);
        let f = she_solve(&p, 0).unwrap();
        for k in 0..f.values.len() {
            let x = f.x(k);
            if x.abs() <= 1.0 + 1e-12 {
                let h = heat_solution(0.5, 0.5, x).unwrap();
                assert!((f.values[k] / h - 1.0).abs() <= 0.01, "x={x}");
            }
        }
        assert!((f.mass() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_field() {
        let p = SheParams::new(0.5, 1.0, 0.1, 0.05, 3.0);
        let a = she_solve(&p, 9).unwrap();
        let b = she_solve(&p, 9).unwrap();
        assert_eq!(a, b);
        let tp = p.with_noise(NoiseKind::TwoPoint);
        assert_eq!(she_solve(&tp, 9).unwrap(), she_solve(&tp, 9).unwrap());
    }

    #[test]
    fn replicas_do_not_depend_on_thread_count() {
        let p = SheParams::new(0.5, 1.0, 0.1, 0.05, 3.0).with_noise(NoiseKind::TwoPoint);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| she_replicas(&p, 5, 40, 0.0)).unwrap();
        let b = three.install(|| she_replicas(&p, 5, 40, 0.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn two_point_and_gaussian_noise_share_moments() {
        let p = SheParams::new(0.5, 2f64.sqrt(), 0.25, 0.05, 3.0);
        let stats = |noise| {
            let r = she_replicas(&p.with_noise(noise), 17, 4000, 0.0).unwrap();
            let v: Vec<f64> = r.iter().map(|s| s.value).collect();
            let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
            (SummaryStats::from_values(&v), SummaryStats::from_values(&sq))
        };
        let (gm, gs) = stats(NoiseKind::Gaussian);
        let (tm, ts) = stats(NoiseKind::TwoPoint);
        let se = |a: &SummaryStats, b: &SummaryStats| (a.stderr.unwrap().powi(2) + b.stderr.unwrap().powi(2)).sqrt();
        assert!((gm.mean - tm.mean).abs() <= 4.0 * se(&gm, &tm));
        assert!((gs.mean - ts.mean).abs() <= 4.0 * se(&gs, &ts));
    }

    #[test]
    fn series_values() {
        let a = 0.75;
        let direct = 4.0 * heat_kernel(a, 0.7, 0.2).unwrap().powi(2);
        let s = she_second_moment_series(0.5, 0.0, 0.7, 0.2, 10).unwrap();
        assert!((s / direct - 1.0).abs() < 1e-14);
        let mut prev = 0.0;
        for k in 0..=40 {
            let s = she_second_moment_series(0.5, 2f64.sqrt(), 0.5, 0.0, k).unwrap();
            assert!(s >= prev);
            prev = s;
        }
        let t39 = she_second_moment_term(0.5, 2f64.sqrt(), 0.5, 0.0, 39).unwrap();
        let t40 = she_second_moment_term(0.5, 2f64.sqrt(), 0.5, 0.0, 40).unwrap();
        assert!(t40 / t39 < 1e-8 || t40 / prev < 1e-16);
        assert!((prev - 2.483_464_454_778_606).abs() < 1e-12);
        assert!(she_second_moment_series(0.5, 1.0, 0.0, 0.0, 3).is_err());
    }

    #[test]
    fn quadrature_matches_series_terms() {
        let (v, s, t, x) = (0.5, 2f64.sqrt(), 0.5, 0.0);
        let q0 = she_second_moment_quadrature(v, s, t, x, 0).unwrap();
        assert!((q0 / heat_kernel(0.75, t, x).unwrap().powi(2) - 1.0).abs() < 1e-14);
        for (k, tol) in [(1, 1e-8), (2, 1e-6), (3, 1e-6)] {
            let q = 4.0 * she_second_moment_quadrature(v, s, t, x, k).unwrap();
            let term = she_second_moment_term(v, s, t, x, k).unwrap();
            assert!((q / term - 1.0).abs() < tol, "k={k}: {q} vs {term}");
        }
        let q = 4.0 * she_second_moment_quadrature(0.3, 1.0, 1.7, 0.4, 2).unwrap();
        assert!((q / she_second_moment_term(0.3, 1.0, 1.7, 0.4, 2).unwrap() - 1.0).abs() < 1e-6);
        assert!(she_second_moment_quadrature(v, s, t, x, 4).is_err());
    }

    #[test]
    fn gamma_at_half_integers() {
        assert!((ln_gamma_half(1) - 0.5 * PI.ln()).abs() < 1e-15);
        assert_eq!(ln_gamma_half(2), 0.0);
        assert!((ln_gamma_half(7) - (3.323_350_970_447_843f64).ln()).abs() < 1e-14);
        assert!((ln_gamma_half(10) - 24f64.ln()).abs() < 1e-14);
    }
}
