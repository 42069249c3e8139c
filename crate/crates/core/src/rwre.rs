//! Exact transition probabilities of the walk in a random environment, the
//! time-reversed polymer partition function, and their rescalings.

use std::collections::HashMap;

use serde::Serialize;

use crate::environment::Disorder;
use crate::error::{check_open, Error, Result};
use crate::ldp::rate_pair;
use crate::logspace::{log_add_exp, log_sum_exp};
use crate::scaling::{ScalingFrame, SnappedPoint, EDGE_ULPS};

/// One time slice of a log-domain vector over sites `first, first+step, …`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogProbRow {
    pub n: u64,
    pub first: i64,
    pub step: i64,
    pub ln_values: Vec<f64>,
}

impl LogProbRow {
    /// Log value at `site`; `-inf` off the support.
    pub fn get(&self, site: i64) -> f64 {
        let off = site - self.first;
        if off < 0 || off % self.step != 0 {
            return f64::NEG_INFINITY;
        }
        self.ln_values
            .get((off / self.step) as usize)
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    }

    pub fn sites(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.ln_values
            .iter()
            .enumerate()
            .map(|(k, &v)| (self.first + k as i64 * self.step, v))
    }

    pub fn ln_total(&self) -> f64 {
        log_sum_exp(self.ln_values.iter().copied())
    }
}

fn check_horizon<D: Disorder + ?Sized>(env: &D, n: u64) -> Result<()> {
    match env.horizon() {
        Some(h) if n > h => Err(Error::invalid(
            "n_steps",
            format!("{n} exceeds the environment horizon {h}"),
        )),
        _ => Ok(()),
    }
}

fn ln_jump<D: Disorder + ?Sized>(env: &D, i: u64, j: i64) -> Result<(f64, f64)> {
    let (up, down) = env.jump(i, j);
    for value in [up, down] {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::ProbabilityOutOfRange { i, j, value });
        }
    }
    Ok((up.ln(), down.ln()))
}

/// `ln P^ω(S_N = ·)` over the full cone `{−N, −N+2, …, N}`, from
/// `P_{n+1}(y) = P_n(y−1) p↑(n, y−1) + P_n(y+1) p↓(n, y+1)`.
pub fn evolve_rwre<D: Disorder + ?Sized>(env: &D, n_steps: u64) -> Result<LogProbRow> {
    check_horizon(env, n_steps)?;
    let len = n_steps as usize + 1;
    let mut row = Vec::with_capacity(len);
    let mut next = Vec::with_capacity(len);
    let mut ups = Vec::with_capacity(len);
    row.push(0.0);
    for n in 0..n_steps {
        // Row n holds j = −n + 2k; an up move from k lands on k + 1 in row
        // n + 1, a down move on k.
        ups.clear();
        next.clear();
        next.resize(row.len() + 1, f64::NEG_INFINITY);
        for (k, &lp) in row.iter().enumerate() {
            let j = -(n as i64) + 2 * k as i64;
            let (lu, ld) = ln_jump(env, n, j)?;
            next[k] = log_add_exp(next[k], lp + ld);
            ups.push(lp + lu);
        }
        for (k, &u) in ups.iter().enumerate() {
            next[k + 1] = log_add_exp(next[k + 1], u);
        }
        std::mem::swap(&mut row, &mut next);
    }
    Ok(LogProbRow {
        n: n_steps,
        first: -(n_steps as i64),
        step: 2,
        ln_values: row,
    })
}

/// A rescaled observable together with its logarithm (the KPZ height).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Rescaled {
    pub value: f64,
    pub ln_value: f64,
    pub snapped: SnappedPoint,
}

fn check_epsilon<D: Disorder + ?Sized>(env: &D, eps: f64) -> Result<()> {
    match env.epsilon() {
        Some(e) if (e - eps).abs() > 1e-12 * eps => Err(Error::invalid(
            "epsilon",
            format!("environment built for ε = {e}, frame uses ε = {eps}"),
        )),
        _ => Ok(()),
    }
}

/// `(1/ε) exp[(t_ε/ε²) I(v) + (x_ε/ε) I'(v)] P^ω(S_N = j)` at the snapped
/// point `(N, j)` of `(t, x)`.
pub fn rescaled_rwre<D: Disorder + ?Sized>(env: &D, frame: &ScalingFrame, t: f64, x: f64) -> Result<Rescaled> {
    check_epsilon(env, frame.epsilon())?;
    if !(t > 0.0) {
        return Err(Error::invalid("t", format!("{t} is not positive")));
    }
    let snapped = frame.snap(t, x)?;
    let p = snapped.point;
    let row = evolve_rwre(env, p.i)?;
    let rp = rate_pair(frame.v())?;
    let i = p.i as f64;
    let ln_value = -frame.epsilon().ln() + i * rp.rate + (p.j as f64 - frame.v() * i) * rp.slope + row.get(p.j);
    Ok(Rescaled {
        value: ln_value.exp(),
        ln_value,
        snapped,
    })
}

/// `ln Z(N, x)` for `x = 1..=N+1`, from
/// `Z(n, x) = Z(n−1, x) B_{n,x} + Z(n−1, x−1) (1 − B_{n,x})`, `Z(0, x) = 1{x=1}`.
/// `B_{n,x}` is the up probability of `env` at `(n, x)`.
pub fn polymer_evolve<D: Disorder + ?Sized>(env: &D, n_steps: u64) -> Result<LogProbRow> {
    check_horizon(env, n_steps)?;
    let mut row = vec![0.0];
    for n in 1..=n_steps {
        let mut next = vec![f64::NEG_INFINITY; row.len() + 1];
        for (idx, slot) in next.iter_mut().enumerate() {
            let x = idx as i64 + 1;
            let (lb, lnb) = ln_jump(env, n, x)?;
            let stay = row.get(idx).map_or(f64::NEG_INFINITY, |z| z + lb);
            let step = if idx >= 1 {
                row[idx - 1] + lnb
            } else {
                f64::NEG_INFINITY
            };
            *slot = log_add_exp(stay, step);
        }
        row = next;
    }
    Ok(LogProbRow {
        n: n_steps,
        first: 1,
        step: 1,
        ln_values: row,
    })
}

/// Scaling for the Beta polymer with drift parameter `γ`; lattice snapping
/// happens in the frame `v = 1 − 2γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PolymerFrame {
    gamma: f64,
    frame: ScalingFrame,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PolymerPoint {
    /// `T = t_ε/ε²`.
    pub steps: u64,
    /// `n = γT + x_ε/ε`, the polymer endpoint.
    pub site: i64,
    pub t_eps: f64,
    pub x_eps: f64,
}

impl PolymerFrame {
    pub fn new(gamma: f64, epsilon: f64) -> Result<Self> {
        check_open("gamma", gamma, 0.0, 0.5)?;
        Ok(PolymerFrame {
            gamma,
            frame: ScalingFrame::new(epsilon, 1.0 - 2.0 * gamma)?,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn epsilon(&self) -> f64 {
        self.frame.epsilon()
    }

    pub fn rwre_frame(&self) -> &ScalingFrame {
        &self.frame
    }

    /// Snaps `(t, x)`. The polymer endpoint `n` sits at walk site
    /// `j = T − 2n + 2`, so polymer cells are the walk's parallelogram cells
    /// seen through `x ↦ ε − x/2`. That reflection reverses orientation; the
    /// cell of `n` is taken closed on its own lower edge,
    /// `n ≤ γs + x/ε − (s − T)/2 < n + 1` with `s = t/ε²`.
    pub fn snap(&self, t: f64, x: f64) -> Result<PolymerPoint> {
        let eps = self.epsilon();
        let sp = self.frame.snap(t, 0.0)?;
        let steps = sp.point.i;
        let s = (t / (eps * eps)).max(steps as f64);
        if !x.is_finite() {
            return Err(Error::invalid("x", format!("{x} is not finite")));
        }
        let w = self.gamma * s + x / eps - 0.5 * (s - steps as f64);
        let scale = (self.gamma * s).max((x / eps).abs()).max(1.0);
        let mut site = w.floor();
        if site + 1.0 - w <= EDGE_ULPS * f64::EPSILON * scale {
            site += 1.0;
        }
        let site = site as i64;
        Ok(PolymerPoint {
            steps,
            site,
            t_eps: sp.t_eps,
            x_eps: eps * (site as f64 - self.gamma * steps as f64),
        })
    }

    /// `−ln ε + T I(v) − 2 (n − γT) I'(v)`.
    pub fn ln_prefactor(&self, p: &PolymerPoint) -> f64 {
        let rp = rate_pair(self.frame.v()).expect("v in (0, 1)");
        let steps = p.steps as f64;
        -self.epsilon().ln() + steps * rp.rate - 2.0 * (p.site as f64 - self.gamma * steps) * rp.slope
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RescaledPolymer {
    pub value: f64,
    pub ln_value: f64,
    pub point: PolymerPoint,
}

/// `(1/ε) exp[(t_ε/ε²) I(1−2γ) − (2x_ε/ε) I'(1−2γ)] Z(T, γT + x_ε/ε)`.
pub fn rescaled_polymer<D: Disorder + ?Sized>(
    env: &D,
    pframe: &PolymerFrame,
    t: f64,
    x: f64,
) -> Result<RescaledPolymer> {
    if !(t > 0.0) {
        return Err(Error::invalid("t", format!("{t} is not positive")));
    }
    let point = pframe.snap(t, x)?;
    let row = polymer_evolve(env, point.steps)?;
    let ln_value = pframe.ln_prefactor(&point) + row.get(point.site);
    Ok(RescaledPolymer {
        value: ln_value.exp(),
        ln_value,
        point,
    })
}

/// Two-point environment read from a bit mask over an explicit site list.
struct BitEnvironment<'a> {
    index: &'a HashMap<(u64, i64), u32>,
    bits: u64,
    root_eps: f64,
}

impl Disorder for BitEnvironment<'_> {
    fn omega(&self, i: u64, j: i64) -> f64 {
        match self.index.get(&(i, j)) {
            Some(&b) if (self.bits >> b) & 1 == 1 => 1.0,
            Some(_) => -1.0,
            None => 0.0,
        }
    }

    fn root_eps(&self) -> f64 {
        self.root_eps
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LawRow {
    pub x: i64,
    pub walk_site: i64,
    pub support: usize,
    pub max_value_gap: f64,
    pub max_weight_gap: f64,
    pub equal: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LawReport {
    pub n: u64,
    pub epsilon: f64,
    pub rows: Vec<LawRow>,
    pub all_equal: bool,
}

/// Tolerance for identifying two atoms of a discrete law.
const LAW_TOL: f64 = 1e-12;

/// Atoms `(value, mass)` of a law given equally likely samples.
fn atoms(mut values: Vec<f64>) -> Vec<(f64, f64)> {
    let w = 1.0 / values.len() as f64;
    values.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, f64)> = Vec::new();
    for v in values {
        match out.last_mut() {
            Some((a, m)) if (v - *a).abs() <= LAW_TOL => *m += w,
            _ => out.push((v, w)),
        }
    }
    out
}

fn enumerate_law<F>(sites: &[(u64, i64)], epsilon: f64, n_out: usize, eval: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&BitEnvironment) -> Result<Vec<f64>>,
{
    let index: HashMap<(u64, i64), u32> = sites.iter().enumerate().map(|(b, &s)| (s, b as u32)).collect();
    let mut out = vec![Vec::with_capacity(1 << sites.len()); n_out];
    for bits in 0..1u64 << sites.len() {
        let env = BitEnvironment {
            index: &index,
            bits,
            root_eps: epsilon.sqrt(),
        };
        for (slot, v) in out.iter_mut().zip(eval(&env)?) {
            slot.push(v);
        }
    }
    Ok(out)
}

/// Exhaustive check that `Z(N, x)` and `P^ω(S_N = N − 2x + 2)` have the same
/// law for every `x`, over all `±1` environments.
pub fn time_reversal_law_check(n: u64, epsilon: f64) -> Result<LawReport> {
    if !(1..=4).contains(&n) {
        return Err(Error::invalid("n", format!("{n} is not in 1..=4")));
    }
    check_open("epsilon", epsilon, 0.0, 1.0 + f64::EPSILON)?;
    let walk_sites: Vec<(u64, i64)> = (0..n)
        .flat_map(|i| (0..=i).map(move |k| (i, -(i as i64) + 2 * k as i64)))
        .collect();
    let polymer_sites: Vec<(u64, i64)> = (1..=n).flat_map(|i| (1..=i as i64 + 1).map(move |x| (i, x))).collect();
    let xs: Vec<i64> = (1..=n as i64 + 1).collect();

    let walk = enumerate_law(&walk_sites, epsilon, xs.len(), |env| {
        let row = evolve_rwre(env, n)?;
        Ok(xs.iter().map(|x| row.get(n as i64 - 2 * x + 2).exp()).collect())
    })?;
    let polymer = enumerate_law(&polymer_sites, epsilon, xs.len(), |env| {
        let row = polymer_evolve(env, n)?;
        Ok(xs.iter().map(|&x| row.get(x).exp()).collect())
    })?;

    let rows: Vec<LawRow> = xs
        .iter()
        .zip(walk.into_iter().zip(polymer))
        .map(|(&x, (w, z))| {
            let (a, b) = (atoms(w), atoms(z));
            let same_len = a.len() == b.len();
            let (mut dv, mut dm) = (0.0f64, 0.0f64);
            for ((va, ma), (vb, mb)) in a.iter().zip(&b) {
                dv = dv.max((va - vb).abs());
                dm = dm.max((ma - mb).abs());
            }
            LawRow {
                x,
                walk_site: n as i64 - 2 * x + 2,
                support: a.len(),
                max_value_gap: dv,
                max_weight_gap: dm,
                equal: same_len && dv <= LAW_TOL && dm <= LAW_TOL,
            }
        })
        .collect();
    Ok(LawReport {
        n,
        epsilon,
        all_equal: rows.iter().all(|r| r.equal),
        rows,
    })
}
