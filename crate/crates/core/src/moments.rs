//! Contour-integral moment formulas for the Beta polymer and for the SHE,
//! a path-enumeration oracle, the saddle point of the Beta-polymer
//! exponent, and the rescaled-moment convergence table.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_open, check_positive, Error, Result};
use crate::ldp::{heat_kernel, rate_pair};
use crate::quadrature::GaussLegendre;
use crate::rwre::PolymerFrame;

/// Minimum distance between a contour and any pole of its integrand.
pub const POLE_MARGIN: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Contour {
    Circle {
        center: Complex64,
        radius: f64,
    },
    /// A clockwise circle. On the Riemann sphere its inside is the outside
    /// of the circle, so it encloses what the circle excludes, including ∞.
    Reversed {
        center: Complex64,
        radius: f64,
    },
    /// `offset + iy`, `|y| ≤ half_length`.
    Vertical {
        offset: f64,
        half_length: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContourSpec {
    pub contour: Contour,
    pub n_points: usize,
}

impl ContourSpec {
    pub fn circle(radius: f64, n_points: usize) -> Self {
        ContourSpec {
            contour: Contour::Circle {
                center: Complex64::new(0.0, 0.0),
                radius,
            },
            n_points,
        }
    }

    pub fn vertical(offset: f64, half_length: f64, n_points: usize) -> Self {
        ContourSpec {
            contour: Contour::Vertical { offset, half_length },
            n_points,
        }
    }

    /// Nodes `z` and weights `w` with `∫ f dz ≈ Σ w f(z)`: the trapezoid
    /// rule (offset by half a step) on circles, Gauss–Legendre on lines.
    pub fn nodes(&self) -> Vec<(Complex64, Complex64)> {
        let m = self.n_points;
        match self.contour {
            Contour::Circle { center, radius } => (0..m)
                .map(|k| {
                    let theta = 2.0 * PI * (k as f64 + 0.5) / m as f64;
                    let e = Complex64::from_polar(radius, theta);
                    (center + e, Complex64::i() * e * (2.0 * PI / m as f64))
                })
                .collect(),
            Contour::Reversed { center, radius } => ContourSpec {
                contour: Contour::Circle { center, radius },
                n_points: m,
            }
            .nodes()
            .into_iter()
            .map(|(z, w)| (z, -w))
            .collect(),
            Contour::Vertical { offset, half_length } => GaussLegendre::new(m)
                .mapped(-half_length, half_length)
                .map(|(y, w)| (Complex64::new(offset, y), Complex64::new(0.0, w)))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentResult {
    pub value: f64,
    /// `ln value`, finite even when `value` underflows.
    pub ln_value: f64,
    pub imag_residual: f64,
    pub n_points: Vec<usize>,
}

impl MomentResult {
    pub fn is_real(&self) -> bool {
        self.imag_residual <= 1e-8 * self.value.abs()
    }
}

/// `E[Z(T, n_1) ⋯ Z(T, n_k)]` for the Beta(α, β) polymer, `k ≤ 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaMomentJob {
    pub steps: u64,
    /// `n_1 ≥ n_2 ≥ …`.
    pub sites: Vec<i64>,
    pub alpha: f64,
    pub beta: f64,
    /// One contour per variable, outermost first.
    pub contours: Vec<ContourSpec>,
}

impl BetaMomentJob {
    /// Contours are picked to keep the peak integrand modulus, and with it
    /// the cancellation in the quadrature sum, small. If no admissible pair
    /// is found, two variables get concentric circles of radii
    /// `1 + 2(ν−1)/3` and `(ν−1)/3`.
    pub fn new(steps: u64, sites: Vec<i64>, alpha: f64, beta: f64, n_points: usize) -> Self {
        let nu = alpha + beta;
        let contours = match sites.len() {
            1 => vec![ContourSpec {
                contour: min_peak_circle(steps, sites[0], alpha, nu, n_points),
                n_points,
            }],
            _ => {
                let inner = (nu - 1.0) / 3.0;
                let fallback = [1.0 + 2.0 * inner, inner].map(|r| Contour::Circle {
                    center: Complex64::new(0.0, 0.0),
                    radius: r,
                });
                min_peak_pair(steps, sites[0], sites[1], alpha, nu, n_points)
                    .unwrap_or(fallback)
                    .into_iter()
                    .map(|contour| ContourSpec { contour, n_points })
                    .collect()
            }
        };
        BetaMomentJob {
            steps,
            sites,
            alpha,
            beta,
            contours,
        }
    }
}

/// `ln` of the leading aliasing term of the `M`-point trapezoid rule for a
/// pole of order `p` at relative distance `q = |pole − centre|/r` (or its
/// reciprocal for poles outside): `C(p+M−1, p−1) q^M`.
fn ln_alias(order: i64, q: f64, m: usize) -> f64 {
    if order <= 0 {
        return f64::NEG_INFINITY;
    }
    let ln_binom: f64 = (1..order).map(|i| ((m as i64 + i) as f64 / i as f64).ln()).sum();
    ln_binom + m as f64 * q.ln()
}

/// Searches circles crossing the real axis at `−L ∈ (−ν, 0)` and
/// `R ∈ (0, 6ν)`, and reversed circles crossing at `−ν − R` and `−L`, for
/// the contour on which the largest `|g(z) dz|` is smallest. Near the edges
/// of the support the residue at 0 is a strongly alternating sum, and
/// circles centred at the origin lose up to ten digits to cancellation.
/// Candidates whose aliasing error from either pole could exceed `e^{−70}`
/// of the peak are skipped.
fn min_peak_circle(steps: u64, n: i64, mu: f64, nu: f64, n_points: usize) -> Contour {
    let probe: Vec<Complex64> = (0..64)
        .map(|m| Complex64::from_polar(1.0, 2.0 * PI * (m as f64 + 0.5) / 64.0))
        .collect();
    let peak = |c: f64, r: f64| {
        probe
            .iter()
            .map(|&e| beta_integrand(c + e * r, n, steps, mu, nu).0)
            .fold(f64::NEG_INFINITY, f64::max)
            + r.ln()
    };
    let outer_order = steps as i64 + 2 - n;
    let mut best = (
        Contour::Circle {
            center: Complex64::new(0.0, 0.0),
            radius: 0.5 * nu,
        },
        f64::INFINITY,
    );
    for a in 1..=49 {
        let left = 0.02 * a as f64 * nu;
        for b in 1..=40 {
            let right = 0.15 * b as f64 * nu;
            let (c, r) = (0.5 * (right - left), 0.5 * (right + left));
            let alias = ln_alias(n, c.abs() / r, n_points).max(ln_alias(outer_order, r / (c + nu), n_points));
            if alias <= -70.0 {
                let p = peak(c, r);
                if p < best.1 {
                    best = (
                        Contour::Circle {
                            center: Complex64::new(c, 0.0),
                            radius: r,
                        },
                        p,
                    );
                }
            }
            let (c, r) = (-0.5 * (nu + right + left), 0.5 * (nu + right - left));
            let alias = ln_alias(outer_order, (c + nu).abs() / r, n_points).max(ln_alias(n, r / c.abs(), n_points));
            if alias <= -70.0 {
                let p = peak(c, r);
                if p < best.1 {
                    best = (
                        Contour::Reversed {
                            center: Complex64::new(c, 0.0),
                            radius: r,
                        },
                        p,
                    );
                }
            }
        }
    }
    best.0
}

/// Real-centred circle through `−left` and `right`.
fn circle_through(left: f64, right: f64) -> (f64, f64) {
    (0.5 * (right - left), 0.5 * (right + left))
}

/// Two-variable analogue of [`min_peak_circle`]: circles through `−L_j` and
/// `R_j` with the shifted inner circle inside the outer one, minimising the
/// sum of the two peaks. The pole of the cross factor enters the aliasing
/// bound of both variables.
fn min_peak_pair(steps: u64, n1: i64, n2: i64, mu: f64, nu: f64, m: usize) -> Option<[Contour; 2]> {
    let probe: Vec<Complex64> = (0..64)
        .map(|k| Complex64::from_polar(1.0, 2.0 * PI * (k as f64 + 0.5) / 64.0))
        .collect();
    let candidates = |n: i64| -> Vec<(f64, f64, f64, f64, f64)> {
        let mut out = Vec::new();
        for a in 1..=24 {
            let left = a as f64 / 25.0 * nu;
            for b in 1..=30 {
                let right = 0.2 * b as f64 * (nu + 1.0);
                let (c, r) = circle_through(left, right);
                let alias = ln_alias(n, c.abs() / r, m).max(ln_alias(steps as i64 + 2 - n, r / (c + nu), m));
                if alias > -70.0 {
                    continue;
                }
                let peak = probe
                    .iter()
                    .map(|&e| beta_integrand(c + e * r, n, steps, mu, nu).0)
                    .fold(f64::NEG_INFINITY, f64::max)
                    + r.ln();
                out.push((left, right, c, r, peak));
            }
        }
        out
    };
    let (outer, inner) = (candidates(n1), candidates(n2));
    let mut best: Option<([Contour; 2], f64)> = None;
    for &(l1, r1e, c1, r1, p1) in &outer {
        for &(l2, r2e, c2, r2, p2) in &inner {
            // Inner circle shifted by +1 spans [1 − L₂, R₂ + 1].
            if !(-l1 < 1.0 - l2 - POLE_MARGIN && r2e + 1.0 + POLE_MARGIN < r1e) {
                continue;
            }
            let outer_q = ((c2 + 1.0 - c1).abs() + r2) / r1;
            let inner_q = r2 / (r1 - (c1 - 1.0 - c2).abs());
            if ln_alias(1, outer_q, m).max(ln_alias(1, inner_q, m)) > -70.0 {
                continue;
            }
            if best.as_ref().is_none_or(|b| p1 + p2 < b.1) {
                let circle = |c: f64, r: f64| Contour::Circle {
                    center: Complex64::new(c, 0.0),
                    radius: r,
                };
                best = Some(([circle(c1, r1), circle(c2, r2)], p1 + p2));
            }
        }
    }
    best.map(|b| b.0)
}

fn check_k(k: usize) -> Result<()> {
    if (1..=2).contains(&k) {
        Ok(())
    } else {
        Err(Error::invalid("k", format!("{k} is not 1 or 2")))
    }
}

fn check_sorted_desc<T: PartialOrd + Copy>(name: &'static str, xs: &[T]) -> Result<()> {
    if xs.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::invalid(name, "must be non-increasing"));
    }
    Ok(())
}

fn too_close(distance: f64, pole: &str) -> Error {
    Error::ContourTooClose {
        distance,
        pole: pole.to_string(),
    }
}

/// Circles must enclose 0, exclude −ν, and each outer circle must enclose
/// the next one shifted by +1. A single variable may instead use a reversed
/// circle around −ν that leaves 0 outside: the integrand is `O(z⁻²)`, so the
/// residue at ∞ vanishes and both contours give the same value.
fn check_beta_contours(contours: &[ContourSpec], nu: f64) -> Result<()> {
    let mut circles = Vec::new();
    for c in contours {
        if c.n_points < 8 {
            return Err(Error::invalid("n_points", "need at least 8 nodes"));
        }
        match c.contour {
            Contour::Circle { center, radius } => {
                let d0 = radius - center.norm();
                if d0 < POLE_MARGIN {
                    return Err(too_close(d0, "0"));
                }
                let dnu = (center + nu).norm() - radius;
                if dnu < POLE_MARGIN {
                    return Err(too_close(dnu, "-nu"));
                }
                circles.push((center, radius));
            }
            Contour::Reversed { center, radius } => {
                if contours.len() != 1 {
                    return Err(Error::invalid("contours", "reversed circles need k = 1"));
                }
                let d0 = center.norm() - radius;
                if d0 < POLE_MARGIN {
                    return Err(too_close(d0, "0"));
                }
                let dnu = radius - (center + nu).norm();
                if dnu < POLE_MARGIN {
                    return Err(too_close(dnu, "-nu"));
                }
            }
            Contour::Vertical { .. } => return Err(Error::invalid("contours", "Beta moments use circles")),
        }
    }
    for (a, &(ca, ra)) in circles.iter().enumerate() {
        for &(cb, rb) in &circles[a + 1..] {
            let gap = ra - ((cb + 1.0) - ca).norm() - rb;
            if gap < POLE_MARGIN {
                return Err(too_close(gap, "z_B+1"));
            }
        }
    }
    Ok(())
}

/// `((ν+z)/z)^n ((μ+z)/(ν+z))^T / (ν+z)²` as `(ln modulus, unit phase)`.
/// The phase is built by integer powers of unit numbers instead of as one
/// large angle, whose rounding would dominate once the contour sum cancels.
fn beta_integrand(z: Complex64, n: i64, steps: u64, mu: f64, nu: f64) -> (f64, Complex64) {
    let zn = z + nu;
    let (a, b) = (zn / z, (z + mu) / zn);
    let (ra, rb, rn) = (a.norm(), b.norm(), zn.norm());
    let ln_mod = n as f64 * ra.ln() + steps as f64 * rb.ln() - 2.0 * rn.ln();
    let phase = (a / ra).powi(n as i32) * (b / rb).powi(steps as i32) / (zn / rn).powi(2);
    (ln_mod, phase)
}

/// `(ν)_k = ν(ν+1)⋯(ν+k−1)` in log form.
fn ln_pochhammer(nu: f64, k: usize) -> f64 {
    (0..k).map(|i| (nu + i as f64).ln()).sum()
}

/// Weighted integrand values `(ln modulus, phase)` for one variable,
/// normalised by their largest modulus; returns the log of that scale.
fn scaled_terms(terms: Vec<(f64, Complex64)>) -> (f64, Vec<Complex64>) {
    let shift = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
    (shift, terms.into_iter().map(|(l, p)| p * (l - shift).exp()).collect())
}

fn polar_ln(w: Complex64) -> (f64, Complex64) {
    let r = w.norm();
    (r.ln(), w / r)
}

/// Combines one or two scaled node sets with the cross factor
/// `(z_1 − z_2)/(z_1 − z_2 − 1)`; outer nodes are summed in parallel and
/// reduced in node order.
fn nested_sum(nodes: &[Vec<Complex64>], terms: &[Vec<Complex64>]) -> Complex64 {
    match terms.len() {
        1 => terms[0].iter().sum(),
        _ => {
            let partial: Vec<Complex64> = nodes[0]
                .par_iter()
                .zip(terms[0].par_iter())
                .map(|(&z1, &f1)| {
                    let inner: Complex64 = nodes[1]
                        .iter()
                        .zip(&terms[1])
                        .map(|(&z2, &f2)| f2 * (z1 - z2) / (z1 - z2 - 1.0))
                        .sum();
                    f1 * inner
                })
                .collect();
            partial.iter().sum()
        }
    }
}

fn finish(shift: f64, ln_const: f64, sum: Complex64, n_points: Vec<usize>) -> MomentResult {
    let scale = (shift + ln_const).exp();
    let ln_value = shift + ln_const + sum.re.ln();
    MomentResult {
        value: scale * sum.re,
        ln_value,
        imag_residual: scale * sum.im.abs(),
        n_points,
    }
}

/// Evaluates `(ν)_k/(2πi)^k ∮⋯∮ ∏_{A<B} (z_A−z_B)/(z_A−z_B−1)
/// ∏_j ((ν+z_j)/z_j)^{n_j} ((μ+z_j)/(ν+z_j))^T dz_j/(ν+z_j)²` with
/// `μ = α`, `ν = α + β`.
pub fn beta_moment_contour(job: &BetaMomentJob) -> Result<MomentResult> {
    let k = job.sites.len();
    check_k(k)?;
    check_positive("alpha", job.alpha)?;
    check_positive("beta", job.beta)?;
    check_sorted_desc("sites", &job.sites)?;
    if job.contours.len() != k {
        return Err(Error::invalid("contours", "need one contour per variable"));
    }
    let (mu, nu) = (job.alpha, job.alpha + job.beta);
    check_beta_contours(&job.contours, nu)?;

    let mut shift = 0.0;
    let mut nodes = Vec::with_capacity(k);
    let mut terms = Vec::with_capacity(k);
    for (c, &n) in job.contours.iter().zip(&job.sites) {
        let pts = c.nodes();
        let ln_terms = pts
            .iter()
            .map(|&(z, w)| {
                let (lm, ph) = beta_integrand(z, n, job.steps, mu, nu);
                let (lw, pw) = polar_ln(w);
                (lm + lw, ph * pw)
            })
            .collect();
        let (s, scaled) = scaled_terms(ln_terms);
        shift += s;
        nodes.push(pts.into_iter().map(|(z, _)| z).collect::<Vec<_>>());
        terms.push(scaled);
    }
    // Divide by (2πi)^k.
    let sum = nested_sum(&nodes, &terms) / (Complex64::i() * 2.0 * PI).powi(k as i32);
    let n_points = job.contours.iter().map(|c| c.n_points).collect();
    Ok(finish(shift, ln_pochhammer(nu, k), sum, n_points))
}

/// `C(T, n−1) (μ/ν)^{T−n+1} ((ν−μ)/ν)^{n−1}`: the annealed single-path
/// expectation.
pub fn beta_moment_k1_closed(steps: u64, n: i64, alpha: f64, beta: f64) -> f64 {
    if n < 1 || n as u64 > steps + 1 {
        return 0.0;
    }
    let d = (n - 1) as u64;
    let nu = alpha + beta;
    let ln_binom: f64 = (0..d).map(|r| ((steps - r) as f64 / (r + 1) as f64).ln()).sum();
    (ln_binom + (steps - d) as f64 * (alpha / nu).ln() + d as f64 * (beta / nu).ln()).exp()
}

/// `E[B^a (1−B)^b] = (α)_a (β)_b / (α+β)_{a+b}`.
fn beta_joint_moment(alpha: f64, beta: f64, a: u32, b: u32) -> f64 {
    let rise = |x: f64, m: u32| (0..m).map(|i| x + i as f64).product::<f64>();
    rise(alpha, a) * rise(beta, b) / rise(alpha + beta, a + b)
}

/// Paths from `(0, 1)` to `(T, n)` as the sequence of positions `x_1..x_T`;
/// step `i` is diagonal when bit `i` of the mask is set.
fn polymer_paths(steps: u64, n: i64) -> Vec<Vec<(i64, bool)>> {
    if n < 1 || n as u64 > steps + 1 {
        return Vec::new();
    }
    (0u32..1 << steps)
        .filter(|m| m.count_ones() as i64 == n - 1)
        .map(|mask| {
            let mut x = 1;
            (0..steps)
                .map(|i| {
                    let diag = (mask >> i) & 1 == 1;
                    x += diag as i64;
                    (x, diag)
                })
                .collect()
        })
        .collect()
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + comp
}

pub const MAX_ORACLE_STEPS: u64 = 8;

/// `E[Z(T, n_1) ⋯ Z(T, n_k)]`, `k ≤ 2`, by summing over all (pairs of)
/// polymer paths with exact Beta moments at every vertex. A vertex at time
/// `i`, position `x` carries `B_{i,x}`; a horizontal step into it weighs
/// `B`, a diagonal step `1 − B`.
pub fn beta_moment_oracle(steps: u64, sites: &[i64], alpha: f64, beta: f64) -> Result<f64> {
    if steps > MAX_ORACLE_STEPS {
        return Err(Error::invalid("steps", format!("{steps} > {MAX_ORACLE_STEPS}")));
    }
    check_k(sites.len())?;
    check_positive("alpha", alpha)?;
    check_positive("beta", beta)?;
    let single = |diag: bool| beta_joint_moment(alpha, beta, !diag as u32, diag as u32);
    let first = polymer_paths(steps, sites[0]);
    if sites.len() == 1 {
        return Ok(compensated_sum(
            first.iter().map(|p| p.iter().map(|&(_, d)| single(d)).product()),
        ));
    }
    let second = polymer_paths(steps, sites[1]);
    let terms = first.iter().flat_map(|p| {
        second.iter().map(move |q| {
            p.iter()
                .zip(q)
                .map(|(&(xa, da), &(xb, db))| {
                    if xa == xb {
                        let ups = (!da) as u32 + (!db) as u32;
                        beta_joint_moment(alpha, beta, ups, 2 - ups)
                    } else {
                        single(da) * single(db)
                    }
                })
                .product::<f64>()
        })
    });
    Ok(compensated_sum(terms))
}

/// `E[V(t, x_1) ⋯ V(t, x_k)]` for the limiting SHE, `k ≤ 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct SheMomentJob {
    pub t: f64,
    /// `x_1 ≥ x_2 ≥ …`.
    pub xs: Vec<f64>,
    pub gamma: f64,
    /// One vertical line per variable, `r_1 > r_2 + 1 > …`.
    pub contours: Vec<ContourSpec>,
}

/// Coefficients `(A, B)` of the exponent `A t z² − B x z`.
fn she_exponent(gamma: f64) -> (f64, f64) {
    let v2 = (1.0 - 2.0 * gamma).powi(2);
    let g = gamma * (1.0 - gamma);
    (v2 * v2 / (8.0 * g), v2 / (2.0 * g))
}

/// Half-length at which `exp(A t (r+iy)²)` has decayed by `1e-16`.
pub fn she_required_half_length(gamma: f64, t: f64) -> f64 {
    let (a, _) = she_exponent(gamma);
    (16.0 * 10f64.ln() / (a * t)).sqrt()
}

impl SheMomentJob {
    /// Each line passes through the saddle `2x_j/((1−2γ)² t)` of its Gaussian
    /// factor, pushed right where needed to keep `r_j ≥ r_{j+1} + 3`; a gap of 2
    /// from the pole of the cross factor keeps the integrand smooth.
    pub fn new(t: f64, xs: Vec<f64>, gamma: f64, n_points: usize) -> Self {
        let half = she_required_half_length(gamma, t.max(f64::MIN_POSITIVE));
        let v2 = (1.0 - 2.0 * gamma).powi(2);
        let mut offsets: Vec<f64> = xs.iter().map(|x| 2.0 * x / (v2 * t)).collect();
        for j in (0..offsets.len().saturating_sub(1)).rev() {
            offsets[j] = offsets[j].max(offsets[j + 1] + 3.0);
        }
        let contours = offsets
            .into_iter()
            .map(|r| ContourSpec::vertical(r, half, n_points))
            .collect();
        SheMomentJob { t, xs, gamma, contours }
    }
}

pub fn she_moment_contour(job: &SheMomentJob) -> Result<MomentResult> {
    let k = job.xs.len();
    check_k(k)?;
    check_open("gamma", job.gamma, 0.0, 0.5)?;
    check_positive("t", job.t)?;
    check_sorted_desc("xs", &job.xs)?;
    if job.contours.len() != k {
        return Err(Error::invalid("contours", "need one contour per variable"));
    }
    let required = she_required_half_length(job.gamma, job.t);
    let mut offsets = Vec::with_capacity(k);
    for c in &job.contours {
        match c.contour {
            Contour::Vertical { offset, half_length } => {
                if half_length < required {
                    return Err(Error::InsufficientTruncation {
                        required,
                        given: half_length,
                    });
                }
                offsets.push(offset);
            }
            Contour::Circle { .. } | Contour::Reversed { .. } => {
                return Err(Error::invalid("contours", "SHE moments use vertical lines"))
            }
        }
    }
    for w in offsets.windows(2) {
        let gap = w[0] - w[1] - 1.0;
        if gap < POLE_MARGIN {
            return Err(too_close(gap, "z_B+1"));
        }
    }
    let (a, b) = she_exponent(job.gamma);
    let mut shift = 0.0;
    let mut nodes = Vec::with_capacity(k);
    let mut terms = Vec::with_capacity(k);
    for (c, &x) in job.contours.iter().zip(&job.xs) {
        let pts = c.nodes();
        let ln_terms = pts
            .iter()
            .map(|&(z, w)| {
                let e = z * z * (a * job.t) - z * (b * x);
                let (lw, pw) = polar_ln(w);
                (e.re + lw, Complex64::from_polar(1.0, e.im) * pw)
            })
            .collect();
        let (s, scaled) = scaled_terms(ln_terms);
        shift += s;
        nodes.push(pts.into_iter().map(|(z, _)| z).collect::<Vec<_>>());
        terms.push(scaled);
    }
    let sum = nested_sum(&nodes, &terms) / (Complex64::i() * 2.0 * PI).powi(k as i32);
    let kf = k as f64;
    let g = job.gamma;
    let ln_const = 2.0 * kf * (1.0 - 2.0 * g).ln() - kf * 2f64.ln() - 2.0 * kf * (1.0 - g).ln();
    let n_points = job.contours.iter().map(|c| c.n_points).collect();
    Ok(finish(shift, ln_const, sum, n_points))
}

/// `(γ/(1−γ)) p_{γ(1−γ)}(t, x)`: the one-point SHE moment in closed form.
pub fn she_moment_k1_closed(gamma: f64, t: f64, x: f64) -> Result<f64> {
    check_open("gamma", gamma, 0.0, 0.5)?;
    Ok(gamma / (1.0 - gamma) * heat_kernel(gamma * (1.0 - gamma), t, x)?)
}

/// `f_ε(z, n) = ln((α+z)/(2α+z)) + (n/T) ln((2α+z)/z)` with `α = 1/ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SaddleExponent {
    pub alpha: f64,
    pub steps: u64,
    pub site: i64,
}

impl SaddleExponent {
    fn ratio(&self) -> f64 {
        self.site as f64 / self.steps as f64
    }

    pub fn value(&self, z: f64) -> f64 {
        let a = self.alpha;
        ((a + z) / (2.0 * a + z)).ln() + self.ratio() * ((2.0 * a + z) / z).ln()
    }

    pub fn derivative(&self, z: f64) -> f64 {
        let a = self.alpha;
        1.0 / (a + z) - 1.0 / (2.0 * a + z) + self.ratio() * (1.0 / (2.0 * a + z) - 1.0 / z)
    }

    /// `2nα/(T − 2n)`, the root of `f'`.
    pub fn exact_root(&self) -> f64 {
        2.0 * self.site as f64 * self.alpha / (self.steps as f64 - 2.0 * self.site as f64)
    }
}

fn saddle_setup(gamma: f64, epsilon: f64, t: f64, x: f64) -> Result<(PolymerFrame, SaddleExponent, f64, f64)> {
    let pf = PolymerFrame::new(gamma, epsilon)?;
    check_positive("t", t)?;
    let p = pf.snap(t, x)?;
    if p.steps == 0 {
        return Err(Error::invalid("t", "snaps to zero steps"));
    }
    let f = SaddleExponent {
        alpha: 1.0 / epsilon,
        steps: p.steps,
        site: p.site,
    };
    Ok((pf, f, p.t_eps, p.x_eps))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriticalPoint {
    /// `2γ/((1−2γ) ε)`.
    pub z0_asymptotic: f64,
    pub z0_numeric: f64,
    /// `|f'(z0_numeric)|`.
    pub derivative_residual: f64,
    pub exponent: SaddleExponent,
}

/// Locates the root of `f_ε'` on `(0, 4 z0)` by bisection, with `(T, n)`
/// from the polymer snapping of `(t, x)`.
pub fn critical_point(gamma: f64, epsilon: f64, t: f64, x: f64) -> Result<CriticalPoint> {
    if !(epsilon <= 0.2) {
        return Err(Error::invalid("epsilon", format!("{epsilon} > 0.2")));
    }
    let (_, f, _, _) = saddle_setup(gamma, epsilon, t, x)?;
    let z0 = 2.0 * gamma / ((1.0 - 2.0 * gamma) * epsilon);
    let (mut lo, mut hi) = (z0 * 1e-9, 4.0 * z0);
    if !(f.derivative(lo) < 0.0 && f.derivative(hi) > 0.0) {
        return Err(Error::BracketFailure { lo, hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f.derivative(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let z = if f.derivative(lo).abs() <= f.derivative(hi).abs() {
        lo
    } else {
        hi
    };
    Ok(CriticalPoint {
        z0_asymptotic: z0,
        z0_numeric: z,
        derivative_residual: f.derivative(z).abs(),
        exponent: f,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaylorReport {
    pub z0: f64,
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
    /// `(1−2γ)⁴ ε² / (8γ(1−γ))`.
    pub quadratic_coefficient: f64,
    /// `(f(z0+h) − 2f(z0) + f(z0−h)) / (2h²)`.
    pub fd_quadratic_coefficient: f64,
    /// `|f(z0) + I(1−2γ)|`.
    pub zeroth_order_deviation: f64,
}

/// Finite-difference step for the quadratic coefficient.
pub const TAYLOR_FD_STEP: f64 = 0.1;

/// Compares `f_ε(z0 + z̃)` with its displayed second-order expansion on a
/// grid of `z̃`.
pub fn taylor_check(gamma: f64, epsilon: f64, t: f64, x: f64, grid: &[f64]) -> Result<TaylorReport> {
    let (pf, f, t_eps, x_eps) = saddle_setup(gamma, epsilon, t, x)?;
    let limit = 0.1 / epsilon;
    if let Some(z) = grid.iter().find(|z| !(z.abs() <= limit)) {
        return Err(Error::invalid("grid", format!("|{z}| exceeds 1/(10ε) = {limit}")));
    }
    let v = 1.0 - 2.0 * gamma;
    let rp = rate_pair(v)?;
    let g = gamma * (1.0 - gamma);
    let e2 = epsilon * epsilon;
    let quad = v.powi(4) * e2 / (8.0 * g);
    let lin = v * v * e2 * x_eps / (2.0 * g * t_eps);
    let constant = -rp.rate + 2.0 * rp.slope * epsilon * x_eps / t_eps;
    let z0 = 2.0 * gamma / (v * epsilon);
    let deviations: Vec<f64> = grid
        .iter()
        .map(|&z| (f.value(z0 + z) - (constant + quad * z * z - lin * z)).abs())
        .collect();
    let h = TAYLOR_FD_STEP;
    let fd = (f.value(z0 + h) - 2.0 * f.value(z0) + f.value(z0 - h)) / (2.0 * h * h);
    let _ = pf;
    Ok(TaylorReport {
        z0,
        max_deviation: deviations.iter().copied().fold(0.0, f64::max),
        deviations,
        quadratic_coefficient: quad,
        fd_quadratic_coefficient: fd,
        zeroth_order_deviation: (f.value(z0) + rp.rate).abs(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMethod {
    #[default]
    Contour,
    /// `k = 1` only.
    ClosedForm,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableSpec {
    pub gamma: f64,
    pub t: f64,
    /// Non-increasing; the length is the moment order `k`.
    pub xs: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// Nodes per circle.
    pub n_points: usize,
    /// Nodes per vertical line for the SHE moment.
    pub she_points: usize,
    /// Radius difference of the two circles when `k = 2`.
    pub k2_separation: f64,
    pub method: BetaMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub k: usize,
    pub steps: u64,
    pub sites: Vec<i64>,
    pub rescaled_beta_moment: f64,
    pub she_moment: f64,
    pub ratio: f64,
    pub imag_residual: f64,
}

/// For each `ε`, the moment `E ∏_j (1/ε) e^{T I − 2(n_j − γT) I'} Z(T, n_j)`
/// (with `α = β = 1/ε`) next to the SHE moment it should approach.
pub fn moment_convergence_table(spec: &TableSpec) -> Result<Vec<ConvergenceRow>> {
    let k = spec.xs.len();
    check_k(k)?;
    check_sorted_desc("xs", &spec.xs)?;
    if spec.method == BetaMethod::ClosedForm && k != 1 {
        return Err(Error::invalid("method", "closed form exists for k = 1 only"));
    }
    for &eps in &spec.epsilons {
        check_open("epsilon", eps, 0.0, 0.5 + f64::EPSILON)?;
        if k == 2 && eps < 0.05 {
            return Err(Error::invalid("epsilon", "k = 2 needs ε ≥ 0.05"));
        }
    }
    let she = she_moment_contour(&SheMomentJob::new(spec.t, spec.xs.clone(), spec.gamma, spec.she_points))?;
    spec.epsilons
        .iter()
        .map(|&eps| {
            let pf = PolymerFrame::new(spec.gamma, eps)?;
            let points = spec
                .xs
                .iter()
                .map(|&x| pf.snap(spec.t, x))
                .collect::<Result<Vec<_>>>()?;
            let steps = points[0].steps;
            let sites: Vec<i64> = points.iter().map(|p| p.site).collect();
            let ln_pref: f64 = points.iter().map(|p| pf.ln_prefactor(p)).sum();
            let alpha = 1.0 / eps;
            let (ln_moment, imag_residual) = match spec.method {
                BetaMethod::ClosedForm => (beta_moment_k1_closed(steps, sites[0], alpha, alpha).ln(), 0.0),
                BetaMethod::Contour => {
                    let z0 = 2.0 * spec.gamma / ((1.0 - 2.0 * spec.gamma) * eps);
                    let contours = match k {
                        1 => vec![ContourSpec::circle(z0, spec.n_points)],
                        _ => vec![
                            ContourSpec::circle(z0 + spec.k2_separation, spec.n_points),
                            ContourSpec::circle(z0, spec.n_points),
                        ],
                    };
                    let job = BetaMomentJob {
                        steps,
                        sites: sites.clone(),
                        alpha,
                        beta: alpha,
                        contours,
                    };
                    let r = beta_moment_contour(&job)?;
                    (r.ln_value, r.imag_residual / r.value.abs())
                }
            };
            let rescaled = (ln_pref + ln_moment).exp();
            Ok(ConvergenceRow {
                epsilon: eps,
                k,
                steps,
                sites,
                rescaled_beta_moment: rescaled,
                she_moment: she.value,
                ratio: rescaled / she.value,
                imag_residual,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, r| acc * (n - r) as f64 / (r + 1) as f64)
    }

    #[test]
    fn k1_path_count() {
        let r = beta_moment_contour(&BetaMomentJob::new(4, vec![2], 1.0, 1.0, 128)).unwrap();
        assert!((r.value - 0.25).abs() < 1e-13);
        assert!(r.is_real());
        assert!((binom(4, 1) * 0.5f64.powi(4) - 0.25).abs() < 1e-16);
    }

    #[test]
    fn k1_matches_closed_form() {
        for (alpha, beta) in [(1.0, 1.0), (2.0, 3.0), (0.7, 1.9)] {
            for steps in 0..=20u64 {
                for n in 1..=steps as i64 + 1 {
                    let r = beta_moment_contour(&BetaMomentJob::new(steps, vec![n], alpha, beta, 512)).unwrap();
                    let want = beta_moment_k1_closed(steps, n, alpha, beta);
                    assert!(
                        (r.value / want - 1.0).abs() < 1e-10,
                        "T={steps} n={n}: {} {want}",
                        r.value
                    );
                }
            }
        }
    }

    #[test]
    fn closed_form_examples() {
        let mu_nu: f64 = 2.0 / 5.0;
        let want = binom(6, 2) * mu_nu.powi(4) * (1.0 - mu_nu).powi(2);
        assert!((beta_moment_k1_closed(6, 3, 2.0, 3.0) - want).abs() < 1e-15);
        assert_eq!(beta_moment_k1_closed(6, 8, 2.0, 3.0), 0.0);
    }

    #[test]
    fn oracle_basics() {
        assert!((beta_joint_moment(1.0, 1.0, 2, 0) - 1.0 / 3.0).abs() < 1e-16);
        for steps in 0..=8u64 {
            for n in 1..=steps as i64 + 1 {
                let o = beta_moment_oracle(steps, &[n], 2.0, 3.0).unwrap();
                assert!((o / beta_moment_k1_closed(steps, n, 2.0, 3.0) - 1.0).abs() < 1e-13);
            }
        }
        // Straight-across and all-diagonal paths touch disjoint vertices.
        let (a, b) = (2.0, 1.5);
        let joint = beta_moment_oracle(6, &[7, 1], a, b).unwrap();
        let prod = beta_moment_oracle(6, &[7], a, b).unwrap() * beta_moment_oracle(6, &[1], a, b).unwrap();
        assert!((joint / prod - 1.0).abs() < 1e-14);
        assert!(beta_moment_oracle(9, &[3], 1.0, 1.0).is_err());
    }

    #[test]
    fn oracle_k2_by_monte_carlo() {
        // Independent check of the pair oracle against sampled environments.
        use crate::environment::Disorder;
        use rand::SeedableRng;
        use rand_distr::{Beta, Distribution};
        use rand_xoshiro::Xoshiro256PlusPlus;
        struct Table(Vec<Vec<f64>>);
        impl Disorder for Table {
            fn omega(&self, _: u64, _: i64) -> f64 {
                unreachable!()
            }
            fn root_eps(&self) -> f64 {
                1.0
            }
            fn jump(&self, i: u64, j: i64) -> (f64, f64) {
                let b = self.0[i as usize][j as usize];
                (b, 1.0 - b)
            }
        }
        let (alpha, beta, steps) = (2.0, 2.0, 6u64);
        let dist = Beta::new(alpha, beta).unwrap();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        let samples: Vec<f64> = (0..100_000)
            .map(|_| {
                let t = Table(
                    (0..=steps)
                        .map(|_| (0..=steps + 1).map(|_| dist.sample(&mut rng)).collect())
                        .collect(),
                );
                let row = crate::rwre::polymer_evolve(&t, steps).unwrap();
                row.get(3).exp().powi(2)
            })
            .collect();
        let s = crate::stats::SummaryStats::from_values(&samples);
        let o = beta_moment_oracle(steps, &[3, 3], alpha, beta).unwrap();
        assert!(s.within(o, 4.0), "{} ± {:?} vs {o}", s.mean, s.stderr);
    }

    #[test]
    fn k2_matches_oracle() {
        let r = beta_moment_contour(&BetaMomentJob::new(6, vec![3, 3], 2.0, 2.0, 256)).unwrap();
        let o = beta_moment_oracle(6, &[3, 3], 2.0, 2.0).unwrap();
        assert!((r.value / o - 1.0).abs() < 1e-8, "{} {o}", r.value);
        assert!(r.is_real());
    }

    #[test]
    fn contour_geometry_is_checked() {
        let bad_inner = BetaMomentJob {
            contours: vec![ContourSpec::circle(2.0, 64), ContourSpec::circle(1.5, 64)],
            ..BetaMomentJob::new(4, vec![2, 2], 2.0, 2.0, 64)
        };
        assert!(matches!(
            beta_moment_contour(&bad_inner),
            Err(Error::ContourTooClose { .. })
        ));
        let through_nu = BetaMomentJob {
            contours: vec![ContourSpec::circle(2.0, 64)],
            ..BetaMomentJob::new(4, vec![2], 1.0, 1.0, 64)
        };
        assert!(beta_moment_contour(&through_nu).is_err());
        let unsorted = BetaMomentJob::new(4, vec![1, 2], 2.0, 2.0, 64);
        assert!(beta_moment_contour(&unsorted).is_err());
    }

    #[test]
    fn contour_and_resolution_invariance() {
        let base = beta_moment_contour(&BetaMomentJob::new(10, vec![4], 2.0, 2.0, 256)).unwrap();
        let wider = BetaMomentJob {
            contours: vec![ContourSpec::circle(3.0, 512)],
            ..BetaMomentJob::new(10, vec![4], 2.0, 2.0, 256)
        };
        let narrow = BetaMomentJob {
            contours: vec![ContourSpec::circle(1.5, 512)],
            ..wider.clone()
        };
        let (w, n) = (
            beta_moment_contour(&wider).unwrap(),
            beta_moment_contour(&narrow).unwrap(),
        );
        assert!((w.value / n.value - 1.0).abs() < 1e-10);
        let fine = beta_moment_contour(&BetaMomentJob::new(10, vec![4], 2.0, 2.0, 512)).unwrap();
        assert!((fine.value / base.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn she_k1_closed_form() {
        for gamma in [0.1, 0.25, 0.4] {
            for (t, x) in [(1.0, 0.0), (1.0, 0.5), (2.0, -1.0)] {
                let r = she_moment_contour(&SheMomentJob::new(t, vec![x], gamma, 200)).unwrap();
                let want = she_moment_k1_closed(gamma, t, x).unwrap();
                assert!((r.value - want).abs() <= 1e-10 * want.max(1e-300), "{gamma} {t} {x}");
                assert!(r.is_real());
            }
        }
        let want = (1.0 / 3.0) / (2.0 * PI * 0.1875).sqrt();
        assert!((she_moment_k1_closed(0.25, 1.0, 0.0).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn she_truncation_is_enforced() {
        let mut job = SheMomentJob::new(1.0, vec![0.0], 0.25, 100);
        job.contours[0] = ContourSpec::vertical(0.0, 5.0, 100);
        assert!(matches!(
            she_moment_contour(&job),
            Err(Error::InsufficientTruncation { .. })
        ));
        let mut job = SheMomentJob::new(1.0, vec![0.0, 0.0], 0.25, 100);
        job.contours[0] = ContourSpec::vertical(0.5, 30.0, 100);
        assert!(she_moment_contour(&job).is_err());
    }

    #[test]
    fn she_k2_invariances() {
        let gamma = 0.25;
        for xs in [vec![0.0, 0.0], vec![0.5, -0.2], vec![2.0, -2.0]] {
            let base = she_moment_contour(&SheMomentJob::new(1.0, xs.clone(), gamma, 300)).unwrap();
            assert!(base.is_real());
            let fine = she_moment_contour(&SheMomentJob::new(1.0, xs.clone(), gamma, 600)).unwrap();
            assert!((fine.value / base.value - 1.0).abs() < 1e-8, "{xs:?}");
            let mut shifted = SheMomentJob::new(1.0, xs.clone(), gamma, 600);
            for c in &mut shifted.contours {
                if let Contour::Vertical { offset, .. } = &mut c.contour {
                    *offset += 0.7;
                }
            }
            let s = she_moment_contour(&shifted).unwrap();
            assert!((s.value / base.value - 1.0).abs() < 1e-8, "{xs:?}");
            let mirror = she_moment_contour(&SheMomentJob::new(1.0, vec![-xs[1], -xs[0]], gamma, 300)).unwrap();
            assert!((mirror.value / base.value - 1.0).abs() < 1e-8);
            // Positively correlated, and more so the closer the points.
            let prod =
                she_moment_k1_closed(gamma, 1.0, xs[0]).unwrap() * she_moment_k1_closed(gamma, 1.0, xs[1]).unwrap();
            assert!(base.value > prod);
        }
    }

    #[test]
    fn she_k2_decorrelates() {
        let gamma: f64 = 0.25;
        let excess = |mult: f64| {
            let h = 0.5 * mult * (gamma * (1.0 - gamma)).sqrt();
            let v = she_moment_contour(&SheMomentJob::new(1.0, vec![h, -h], gamma, 800))
                .unwrap()
                .value;
            let p = she_moment_k1_closed(gamma, 1.0, h).unwrap() * she_moment_k1_closed(gamma, 1.0, -h).unwrap();
            v / p - 1.0
        };
        let (e10, e20, e40) = (excess(10.0), excess(20.0), excess(40.0));
        assert!(e10 > e20 && e20 > e40 && e40 > 0.0);
        assert!(e10 < 0.05);
        // Overlap time of the two paths shrinks like 1/separation.
        for r in [e10 / e20, e20 / e40] {
            assert!((1.8..2.2).contains(&r), "{r}");
        }
    }

    #[test]
    fn critical_point_examples() {
        let cp = critical_point(0.25, 0.1, 1.0, 0.0).unwrap();
        assert!((cp.z0_asymptotic - 10.0).abs() < 1e-12);
        assert!((cp.z0_numeric - cp.exponent.exact_root()).abs() <= 1e-9 * cp.z0_asymptotic);
        assert!(cp.derivative_residual <= 1e-12);
        assert!(critical_point(0.25, 0.3, 1.0, 0.0).is_err());
        assert!(matches!(
            critical_point(0.25, 0.1, 1.0, 3.0),
            Err(Error::BracketFailure { .. })
        ));
    }

    #[test]
    fn taylor_expansion_checks() {
        let r = taylor_check(0.25, 0.05, 1.0, 0.0, &[0.0]).unwrap();
        assert!((r.fd_quadratic_coefficient / r.quadratic_coefficient - 1.0).abs() <= 1e-4);
        assert!(r.zeroth_order_deviation < 1e-14);
        // Remainder is cubic in z̃ with an ε³ coefficient.
        let dev = |eps| taylor_check(0.25, eps, 1.0, 0.0, &[1.0]).unwrap().max_deviation;
        let order = (dev(0.1) / dev(0.05)).log2();
        assert!(order >= 2.5, "{order}");
        let off = |eps| {
            taylor_check(0.25, eps, 1.0, 0.5, &[0.0])
                .unwrap()
                .zeroth_order_deviation
        };
        assert!(off(0.1) > off(0.05) && off(0.05) > off(0.02));
        assert!(taylor_check(0.25, 0.1, 1.0, 0.0, &[2.0]).is_err());
    }

    #[test]
    fn table_closed_form_matches_contour() {
        let spec = TableSpec {
            gamma: 0.25,
            t: 1.0,
            xs: vec![0.0],
            epsilons: vec![0.2, 0.1],
            n_points: 512,
            she_points: 200,
            k2_separation: 1.5,
            method: BetaMethod::Contour,
        };
        let a = moment_convergence_table(&spec).unwrap();
        let b = moment_convergence_table(&TableSpec {
            method: BetaMethod::ClosedForm,
            ..spec
        })
        .unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            assert!((ra.rescaled_beta_moment / rb.rescaled_beta_moment - 1.0).abs() < 1e-10);
        }
    }
}
