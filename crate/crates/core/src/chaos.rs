//! Polynomial chaos of the walk's transition probability.
//!
//! `P^ω(S_N = y) = Σ_k ε^{k/2} Σ_{z_1..z_k} ψ_k(z) ω_{z_1}⋯ω_{z_k}` where the
//! coefficients are products of simple-walk probabilities. Two independent
//! evaluations are provided: a dynamic program over polynomials in `η = √ε`
//! and a direct enumeration of point tuples.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::Serialize;

use crate::environment::Disorder;
use crate::error::{Error, Result};
use crate::ldp::{heat_kernel, rescaled_ssrw_ln_at, ssrw_log_prob};
use crate::logspace::SignedLog;
use crate::rwre::evolve_rwre;
use crate::scaling::{LatticePoint, ScalingFrame};

pub const MAX_RING_STEPS: u64 = 24;
pub const MAX_ENUMERATION_STEPS: u64 = 8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChaosTerm {
    pub points: Vec<LatticePoint>,
    pub coefficient: f64,
}

fn check_target(n_steps: u64, y: i64) -> Result<LatticePoint> {
    LatticePoint::new(n_steps, y)
}

fn check_points(n_steps: u64, points: &[LatticePoint]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::invalid("points", "need at least one point"));
    }
    for w in points.windows(2) {
        if w[1].i <= w[0].i {
            return Err(Error::invalid("points", "times must be strictly increasing"));
        }
    }
    if points[points.len() - 1].i >= n_steps {
        return Err(Error::invalid("points", "last time must be at most N − 1"));
    }
    Ok(())
}

/// `P⁰(S_{Δi−1} = Δj−1) − P⁰(S_{Δi−1} = Δj+1)` for the step `from → to`.
fn bracket(from: LatticePoint, to: LatticePoint) -> SignedLog {
    let n = to.i - from.i - 1;
    let dj = to.j - from.j;
    SignedLog::diff_exp(ssrw_log_prob(n, dj - 1).ln(), ssrw_log_prob(n, dj + 1).ln())
}

pub fn psi_k_signed(n_steps: u64, y: i64, points: &[LatticePoint]) -> Result<SignedLog> {
    let target = check_target(n_steps, y)?;
    check_points(n_steps, points)?;
    let first = points[0];
    let mut acc = SignedLog::from_ln(-(points.len() as f64) * LN_2 + ssrw_log_prob(first.i, first.j).ln());
    for w in points.windows(2) {
        acc = acc * bracket(w[0], w[1]);
    }
    Ok(acc * bracket(points[points.len() - 1], target))
}

/// `ψ_k(z_1, …, z_k)` for the target `(N, y)`.
pub fn psi_k(n_steps: u64, y: i64, points: &[LatticePoint]) -> Result<f64> {
    psi_k_signed(n_steps, y, points).map(SignedLog::value)
}

/// Coefficients of `P^ω(S_N = y)` as a polynomial in `η = √ε`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolyExpansion {
    pub n_steps: u64,
    pub y: i64,
    pub coefficients: Vec<f64>,
    /// Low-order parts: coefficient `d` is `coefficients[d] + tails[d]`.
    pub tails: Vec<f64>,
}

impl PolyExpansion {
    /// Horner's rule in double-double arithmetic. The expansion alternates
    /// in sign, so plain Horner loses digits to cancellation.
    pub fn eval(&self, eta: f64) -> f64 {
        self.coefficients
            .iter()
            .zip(&self.tails)
            .rev()
            .fold(Dd::ZERO, |acc, (&hi, &lo)| acc.mul(eta).add(Dd { hi, lo }))
            .value()
    }
}

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn renorm(a: f64, b: f64) -> Dd {
        let hi = a + b;
        Dd { hi, lo: b - (hi - a) }
    }

    fn add(self, o: Dd) -> Dd {
        let s = self.hi + o.hi;
        let bb = s - self.hi;
        let err = (self.hi - (s - bb)) + (o.hi - bb);
        Dd::renorm(s, err + self.lo + o.lo)
    }

    fn mul(self, b: f64) -> Dd {
        let p = self.hi * b;
        let err = self.hi.mul_add(b, -p);
        Dd::renorm(p, err + self.lo * b)
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// Runs the walk recursion over polynomials in `η` with site weights
/// `(1 ± η ω)/2`.
pub fn chaos_poly_dp<D: Disorder + ?Sized>(env: &D, n_steps: u64, y: i64) -> Result<PolyExpansion> {
    if n_steps > MAX_RING_STEPS {
        return Err(Error::invalid("n_steps", format!("{n_steps} > {MAX_RING_STEPS}")));
    }
    check_target(n_steps, y)?;
    let deg = n_steps as usize + 1;
    let mut row: Vec<Vec<Dd>> = vec![{
        let mut p = vec![Dd::ZERO; deg];
        p[0].hi = 1.0;
        p
    }];
    for n in 0..n_steps {
        let mut next = vec![vec![Dd::ZERO; deg]; row.len() + 1];
        for (k, poly) in row.iter().enumerate() {
            let j = -(n as i64) + 2 * k as i64;
            let w = env.omega(n, j);
            // Up move to index k + 1 with weight (1 + ηω)/2, down move to k
            // with weight (1 − ηω)/2.
            for d in 0..deg {
                let c = poly[d].mul(0.5);
                next[k + 1][d] = next[k + 1][d].add(c);
                next[k][d] = next[k][d].add(c);
                if d + 1 < deg {
                    let cw = c.mul(w);
                    next[k + 1][d + 1] = next[k + 1][d + 1].add(cw);
                    next[k][d + 1] = next[k][d + 1].add(cw.mul(-1.0));
                }
            }
        }
        row = next;
    }
    let idx = ((y + n_steps as i64) / 2) as usize;
    let poly = row.get(idx).cloned().unwrap_or_else(|| vec![Dd::ZERO; deg]);
    Ok(PolyExpansion {
        n_steps,
        y,
        coefficients: poly.iter().map(|c| c.hi).collect(),
        tails: poly.iter().map(|c| c.lo).collect(),
    })
}

/// Whether `(N, y)` is reachable from `p`.
fn reaches(p: LatticePoint, n_steps: u64, y: i64) -> bool {
    p.i <= n_steps && (y - p.j).unsigned_abs() <= n_steps - p.i
}

/// Possible first points of a tuple: inside the origin's cone and able to
/// reach `(N, y)`.
fn first_points(n_steps: u64, y: i64) -> Vec<LatticePoint> {
    (0..n_steps)
        .flat_map(|i| {
            (0..=i).map(move |k| LatticePoint {
                i,
                j: -(i as i64) + 2 * k as i64,
            })
        })
        .filter(|p| reaches(*p, n_steps, y))
        .collect()
}

fn successors(p: LatticePoint, n_steps: u64, y: i64) -> impl Iterator<Item = LatticePoint> {
    (p.i + 1..n_steps).flat_map(move |i| {
        let d = (i - p.i) as i64;
        (0..=d).filter_map(move |k| {
            let q = LatticePoint { i, j: p.j - d + 2 * k };
            reaches(q, n_steps, y).then_some(q)
        })
    })
}

/// Per-degree sums `Σ ψ_k(z) ∏ ω_z` by calling [`psi_k`] on every tuple.
/// Exponential in `N`; meant as an oracle for small `N`.
pub fn degree_sums_by_tuples<D: Disorder + ?Sized>(env: &D, n_steps: u64, y: i64) -> Result<Vec<f64>> {
    if n_steps > 6 {
        return Err(Error::invalid("n_steps", "tuple-by-tuple oracle is limited to N ≤ 6"));
    }
    check_target(n_steps, y)?;
    let mut sums = vec![0.0; n_steps as usize + 1];
    sums[0] = ssrw_log_prob(n_steps, y).prob();
    fn walk<D: Disorder + ?Sized>(
        env: &D,
        n_steps: u64,
        y: i64,
        tuple: &mut Vec<LatticePoint>,
        sums: &mut [f64],
    ) -> Result<()> {
        let omega: f64 = tuple.iter().map(|p| env.omega(p.i, p.j)).product();
        sums[tuple.len()] += psi_k(n_steps, y, tuple)? * omega;
        let last = tuple[tuple.len() - 1];
        for q in successors(last, n_steps, y).collect::<Vec<_>>() {
            tuple.push(q);
            walk(env, n_steps, y, tuple, sums)?;
            tuple.pop();
        }
        Ok(())
    }
    for p in first_points(n_steps, y) {
        let mut tuple = vec![p];
        walk(env, n_steps, y, &mut tuple, &mut sums)?;
    }
    Ok(sums)
}

/// Linear-domain table of `P⁰(S_n = m)` for `n ≤ N`.
struct SsrwTable {
    n_max: u64,
    rows: Vec<Vec<f64>>,
}

impl SsrwTable {
    fn new(n_max: u64) -> Self {
        let rows = (0..=n_max)
            .map(|n| (-(n as i64)..=n as i64).map(|m| ssrw_log_prob(n, m).prob()).collect())
            .collect();
        SsrwTable { n_max, rows }
    }

    fn prob(&self, n: u64, m: i64) -> f64 {
        if n > self.n_max || m.unsigned_abs() > n {
            return 0.0;
        }
        self.rows[n as usize][(m + n as i64) as usize]
    }

    fn bracket(&self, from: LatticePoint, to: LatticePoint) -> f64 {
        let n = to.i - from.i - 1;
        let dj = to.j - from.j;
        self.prob(n, dj - 1) - self.prob(n, dj + 1)
    }
}

/// `Σ_k η^k Σ_z ψ_k(z) ∏ ω_z` by depth-first enumeration of tuples, with
/// partial products carried down the tree and branches with an exactly zero
/// partial product pruned.
pub fn chaos_sum_enumerated<D: Disorder + ?Sized>(env: &D, n_steps: u64, y: i64) -> Result<f64> {
    if n_steps > MAX_ENUMERATION_STEPS {
        return Err(Error::invalid(
            "n_steps",
            format!("{n_steps} > {MAX_ENUMERATION_STEPS}"),
        ));
    }
    let target = check_target(n_steps, y)?;
    let table = SsrwTable::new(n_steps);
    let eta = env.root_eps();

    fn descend<D: Disorder + ?Sized>(
        env: &D,
        table: &SsrwTable,
        eta: f64,
        target: LatticePoint,
        last: LatticePoint,
        partial: f64,
    ) -> f64 {
        let mut total = partial * table.bracket(last, target);
        for q in successors(last, target.i, target.j) {
            let step = 0.5 * eta * env.omega(q.i, q.j) * table.bracket(last, q);
            if step != 0.0 {
                total += descend(env, table, eta, target, q, partial * step);
            }
        }
        total
    }

    let starts = first_points(n_steps, y);
    let parts: Vec<f64> = starts
        .par_iter()
        .map(|&p| {
            let partial = 0.5 * eta * env.omega(p.i, p.j) * table.prob(p.i, p.j);
            if partial == 0.0 {
                0.0
            } else {
                descend(env, &table, eta, target, p, partial)
            }
        })
        .collect();
    Ok(table.prob(n_steps, y) + parts.iter().sum::<f64>())
}

/// `|P^ω(S_N = y) − chaos sum|`.
pub fn chaos_identity_residual<D: Disorder + ?Sized>(env: &D, n_steps: u64, y: i64) -> Result<f64> {
    let series = chaos_sum_enumerated(env, n_steps, y)?;
    let dp = evolve_rwre(env, n_steps)?.get(y).exp();
    Ok((dp - series).abs())
}

/// Rescaled coefficient `ε^{-(1+k)} exp[(t_ε/ε²) I + (x_ε/ε) I'] ψ_{ε,k}` at
/// continuum points, built factor by factor from shifted rescaled walk
/// probabilities. Zero when two snapped times coincide.
pub fn rescaled_psi(frame: &ScalingFrame, points: &[(f64, f64)], t: f64, x: f64) -> Result<f64> {
    check_continuum_points(points, t)?;
    let mut lattice = Vec::with_capacity(points.len() + 1);
    for &(tl, xl) in points.iter().chain(std::iter::once(&(t, x))) {
        lattice.push(frame.snap(tl, xl)?.point);
    }
    if lattice.windows(2).any(|w| w[1].i <= w[0].i) {
        return Ok(0.0);
    }
    let k = points.len();
    let mut acc = SignedLog::from_ln(-(k as f64) * LN_2 + rescaled_ssrw_ln_at(frame, lattice[0], 0, 0));
    for w in lattice.windows(2) {
        let delta = LatticePoint {
            i: w[1].i - w[0].i,
            j: w[1].j - w[0].j,
        };
        acc = acc
            * SignedLog::diff_exp(
                rescaled_ssrw_ln_at(frame, delta, -1, -1),
                rescaled_ssrw_ln_at(frame, delta, -1, 1),
            );
    }
    Ok(acc.value())
}

fn check_continuum_points(points: &[(f64, f64)], t: f64) -> Result<()> {
    let mut prev = 0.0;
    for &(tl, xl) in points.iter().chain(std::iter::once(&(t, 0.0))) {
        if !(tl > prev) || !xl.is_finite() {
            return Err(Error::invalid("points", "need 0 < t_1 < … < t_k < t"));
        }
        prev = tl;
    }
    Ok(())
}

/// `2 (2v)^k ∏_{l=1}^{k+1} p_{1−v²}(t_l − t_{l−1}, x_l − x_{l−1})`.
pub fn conco_limit(v: f64, points: &[(f64, f64)], t: f64, x: f64) -> Result<f64> {
    check_continuum_points(points, t)?;
    let a = 1.0 - v * v;
    let mut prev = (0.0, 0.0);
    let mut acc = 2.0 * (2.0 * v).powi(points.len() as i32);
    for &(tl, xl) in points.iter().chain(std::iter::once(&(t, x))) {
        acc *= heat_kernel(a, tl - prev.0, xl - prev.1)?;
        prev = (tl, xl);
    }
    Ok(acc)
}
