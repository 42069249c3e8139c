//! Simple symmetric random walk probabilities, the rate function, heat
//! kernels and the sharp large-deviation asymptotics of the walk.

use std::f64::consts::{LN_2, PI};

use serde::Serialize;

use crate::error::{check_open, check_positive, Error, Result};
use crate::scaling::{LatticePoint, ScalingFrame};

/// Natural log of a probability; `-inf` encodes zero.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct LogProb(f64);

impl LogProb {
    pub const ZERO: LogProb = LogProb(f64::NEG_INFINITY);

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn prob(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

/// `ln P⁰(S_n = m)` for the simple symmetric walk started at 0.
///
/// Uses the saddle-point form `ln C(n,k) 2^{-n}` = Stirling errors minus two
/// deviance terms, which keeps full relative accuracy of the log even for
/// `n` in the millions where differences of `lgamma` lose ~10 digits.
pub fn ssrw_log_prob(n: u64, m: i64) -> LogProb {
    if m.unsigned_abs() > n || (n as i64 + m).rem_euclid(2) != 0 {
        return LogProb::ZERO;
    }
    let k = (n as i64 + m) as u64 / 2;
    if k == 0 || k == n {
        return LogProb(-(n as f64) * LN_2);
    }
    let (nf, kf, rf) = (n as f64, k as f64, (n - k) as f64);
    let half = nf / 2.0;
    let lc = stirlerr(n) - stirlerr(k) - stirlerr(n - k) - bd0(kf, half) - bd0(rf, half);
    let lf = (2.0 * PI).ln() + kf.ln() + (-kf / nf).ln_1p();
    LogProb(lc - 0.5 * lf)
}

#[allow(clippy::excessive_precision)]
const STIRLERR_SMALL: [f64; 16] = [
    0.0,
    0.081_061_466_795_327_258_22,
    0.041_340_695_955_409_294_09,
    0.027_677_925_684_998_339_15,
    0.020_790_672_103_765_093_11,
    0.016_644_691_189_821_192_16,
    0.013_876_128_823_070_747_99,
    0.011_896_709_945_891_770_10,
    0.010_411_265_261_972_096_50,
    0.009_255_462_182_712_732_918,
    0.008_330_563_433_362_871_256,
    0.007_573_675_487_951_840_795,
    0.006_942_840_107_209_529_866,
    0.006_408_994_188_004_207_068,
    0.005_951_370_112_758_847_736,
    0.005_554_733_551_962_801_371,
];

/// `ln n! − ln(√(2πn) (n/e)^n)`.
fn stirlerr(n: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15 {
        return STIRLERR_SMALL[n as usize];
    }
    let n = n as f64;
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance `x ln(x/np) + np − x`, summed as a series near `x = np`.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let next = s + ej / (2 * j + 1) as f64;
            if next == s {
                break;
            }
            s = next;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatePair {
    /// `I(v) = (1−v)/2 ln(1−v) + (1+v)/2 ln(1+v)`.
    pub rate: f64,
    /// `I'(v) = ½ ln((1+v)/(1−v))`.
    pub slope: f64,
}

pub fn rate_pair(v: f64) -> Result<RatePair> {
    check_open("v", v, -1.0, 1.0)?;
    Ok(RatePair {
        // Evaluated at |v| so that I is exactly even.
        rate: {
            let a = v.abs();
            0.5 * ((1.0 - a) * (-a).ln_1p() + (1.0 + a) * a.ln_1p())
        },
        slope: v.abs().atanh().copysign(v),
    })
}

/// Density of `N(0, σ² t)` at `x`.
pub fn heat_kernel(sigma2: f64, t: f64, x: f64) -> Result<f64> {
    check_positive("sigma2", sigma2)?;
    check_positive("t", t)?;
    let var = sigma2 * t;
    Ok((-x * x / (2.0 * var)).exp() / (2.0 * PI * var).sqrt())
}

fn check_shift(name: &'static str, m: i32) -> Result<()> {
    if (-1..=1).contains(&m) {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{m} is not in {{-1, 0, 1}}")))
    }
}

fn check_shifts(m1: i32, m2: i32) -> Result<()> {
    check_shift("m1", m1)?;
    check_shift("m2", m2)?;
    if (m1 - m2) % 2 != 0 {
        return Err(Error::invalid("m2", "m1 - m2 must be even"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LdpQuery {
    pub frame: ScalingFrame,
    pub t: f64,
    pub x: f64,
    pub m1: i32,
    pub m2: i32,
}

impl LdpQuery {
    pub fn new(frame: ScalingFrame, t: f64, x: f64, m1: i32, m2: i32) -> Result<Self> {
        check_positive("t", t)?;
        if !x.is_finite() {
            return Err(Error::invalid("x", "not finite"));
        }
        check_shifts(m1, m2)?;
        Ok(LdpQuery { frame, t, x, m1, m2 })
    }
}

/// Log of the rescaled, shifted walk probability at a lattice point:
/// `−ln ε + i I(v) + (j − v i) I'(v) + ln P⁰(S_{i+m1} = j+m2)`.
pub fn rescaled_ssrw_ln_at(frame: &ScalingFrame, p: LatticePoint, m1: i32, m2: i32) -> f64 {
    let n = p.i as i64 + m1 as i64;
    if n < 0 {
        return f64::NEG_INFINITY;
    }
    let lp = ssrw_log_prob(n as u64, p.j + m2 as i64);
    if lp.is_zero() {
        return f64::NEG_INFINITY;
    }
    let v = frame.v();
    let rp = rate_pair(v).expect("frame keeps v in (0, 1)");
    let i = p.i as f64;
    -frame.epsilon().ln() + i * rp.rate + (p.j as f64 - v * i) * rp.slope + lp.ln()
}

/// Log of `rescaled_ssrw`.
pub fn rescaled_ssrw_ln(q: &LdpQuery) -> Result<f64> {
    let sp = q.frame.snap(q.t, q.x)?;
    Ok(rescaled_ssrw_ln_at(&q.frame, sp.point, q.m1, q.m2))
}

/// `(1/ε) exp[(t_ε/ε²) I(v) + (x_ε/ε) I'(v)] P⁰(S_{i+m1} = j+m2)` at the
/// snapped point `(i, j)` of `(t, x)`.
pub fn rescaled_ssrw(q: &LdpQuery) -> Result<f64> {
    rescaled_ssrw_ln(q).map(f64::exp)
}

/// `2 p_{1−v²}(t,x) / ((1+v)^{(m1+m2)/2} (1−v)^{(m1−m2)/2})`.
pub fn ldp_limit(v: f64, t: f64, x: f64, m1: i32, m2: i32) -> Result<f64> {
    check_open("v", v, -1.0, 1.0)?;
    check_positive("t", t)?;
    check_shifts(m1, m2)?;
    let p = heat_kernel(1.0 - v * v, t, x)?;
    let a = (m1 + m2) / 2;
    let b = (m1 - m2) / 2;
    Ok(2.0 * p / ((1.0 + v).powi(a) * (1.0 - v).powi(b)))
}

/// The three shifts appearing in the chaos coefficients.
pub const SHIFTS: [(i32, i32); 3] = [(0, 0), (-1, -1), (-1, 1)];

/// Ladder of candidate constants for the uniform bound.
pub const BOUND_LADDER: [f64; 7] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundSample {
    pub t: f64,
    pub x: f64,
    pub epsilon: f64,
}

/// Right-hand side of the uniform bound with constant `c`.
fn bound_rhs(c: f64, s: &BoundSample) -> f64 {
    if s.t <= 100.0 * s.epsilon * s.epsilon {
        if s.x.abs() <= c * s.epsilon {
            c / s.epsilon
        } else {
            0.0
        }
    } else {
        c * (-s.x * s.x / (c * s.t)).exp() / s.t.sqrt()
    }
}

/// Smallest ladder constant `C` for which every sample and every shift obeys
/// the uniform bound; `None` when even `C = 100` fails.
pub fn uniform_bound_fit(v: f64, samples: &[BoundSample]) -> Result<Option<f64>> {
    let mut lhs = Vec::with_capacity(samples.len() * SHIFTS.len());
    for s in samples {
        check_positive("t", s.t)?;
        let frame = ScalingFrame::new(s.epsilon, v)?;
        for (m1, m2) in SHIFTS {
            let q = LdpQuery::new(frame, s.t, s.x, m1, m2)?;
            lhs.push((rescaled_ssrw(&q)?, *s));
        }
    }
    Ok(BOUND_LADDER
        .into_iter()
        .find(|&c| lhs.iter().all(|(value, s)| *value <= bound_rhs(c, s))))
}

/// `F(k) = (1+k) ln((1+k)/(1+v)) + (1−k) ln((1−k)/(1−v))`, twice the
/// relative entropy of a `(1+k)/2` coin against a `(1+v)/2` coin.
pub fn speed_divergence(k: f64, v: f64) -> Result<f64> {
    check_open("k", k, -1.0, 1.0)?;
    check_open("v", v, 0.0, 1.0)?;
    Ok((1.0 + k) * ((1.0 + k) / (1.0 + v)).ln() + (1.0 - k) * ((1.0 - k) / (1.0 - v)).ln())
}
