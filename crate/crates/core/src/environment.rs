//! Seeded i.i.d. disorder fields.
//!
//! Every value is a pure function of `(seed, i, j)`: a keyed 64-bit mixer
//! hashes the site, and the hash either is the variate (two-point and
//! uniform laws) or seeds a per-site generator (Beta law). Access order
//! and thread count therefore never change the field.

use rand::SeedableRng;
use rand_distr::{Beta, Distribution};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};
use crate::stats::SummaryStats;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisorderKind {
    /// ±1 with probability ½ each.
    Rademacher,
    /// Uniform on `[−a, a]`.
    UniformBounded { a: f64 },
    /// `ω = 2 ε^{-1/2} (B − ½)` with `B ~ Beta(1/ε, 1/ε)`.
    BetaSymmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    #[serde(flatten)]
    pub kind: DisorderKind,
    pub epsilon: f64,
    pub seed: u64,
}

impl EnvironmentSpec {
    pub fn new(kind: DisorderKind, epsilon: f64, seed: u64) -> Result<Self> {
        let spec = EnvironmentSpec { kind, epsilon, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("epsilon", self.epsilon)?;
        let root = self.epsilon.sqrt();
        match self.kind {
            DisorderKind::Rademacher if root > 1.0 => Err(Error::invalid(
                "epsilon",
                format!("{} > 1 puts ±√ε outside [−1, 1]", self.epsilon),
            )),
            DisorderKind::UniformBounded { a } if !(a > 0.0) || a * root > 1.0 => {
                Err(Error::invalid("a", format!("need 0 < a·√ε ≤ 1, got a = {a}")))
            }
            DisorderKind::BetaSymmetric if self.epsilon > 1.0 => {
                Err(Error::invalid("epsilon", "Beta(1/ε, 1/ε) sampling needs shape 1/ε ≥ 1"))
            }
            _ => Ok(()),
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        EnvironmentSpec { seed, ..self }
    }
}

/// Read access to a disorder field on `Z²`.
pub trait Disorder: Sync {
    fn omega(&self, i: u64, j: i64) -> f64;

    /// Disorder strength `√ε` multiplying `ω` in the jump probabilities.
    fn root_eps(&self) -> f64;

    /// `(p_up, p_down)` at `(i, j)`: `((1 + √ε ω)/2, (1 − √ε ω)/2)`.
    fn jump(&self, i: u64, j: i64) -> (f64, f64) {
        let s = self.root_eps() * self.omega(i, j);
        (0.5 * (1.0 + s), 0.5 * (1.0 - s))
    }

    /// Largest time index the field is declared for.
    fn horizon(&self) -> Option<u64> {
        None
    }

    /// `ε` the field was built for, if it has one.
    fn epsilon(&self) -> Option<f64> {
        None
    }
}

/// A sampled field, declared on `i < n_max`, `|j| ≤ n_max`.
#[derive(Clone, Debug)]
pub struct Environment {
    spec: EnvironmentSpec,
    law: Law,
    n_max: u64,
    key: u64,
    root_eps: f64,
}

#[derive(Clone, Debug)]
enum Law {
    Rademacher,
    Uniform(f64),
    /// Law of the up-probability `B`.
    Beta(Beta<f64>),
}

pub fn sample_environment(spec: EnvironmentSpec, n_max: u64) -> Result<Environment> {
    spec.validate()?;
    if n_max == 0 {
        return Err(Error::invalid("n_max", "must be at least 1"));
    }
    let law = match spec.kind {
        DisorderKind::Rademacher => Law::Rademacher,
        DisorderKind::UniformBounded { a } => Law::Uniform(a),
        DisorderKind::BetaSymmetric => {
            let shape = 1.0 / spec.epsilon;
            Law::Beta(Beta::new(shape, shape).map_err(|e| Error::invalid("epsilon", e.to_string()))?)
        }
    };
    Ok(Environment {
        spec,
        law,
        n_max,
        key: mix64(spec.seed ^ 0x6a09_e667_f3bc_c909),
        root_eps: spec.epsilon.sqrt(),
    })
}

impl Environment {
    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    fn site_hash(&self, i: u64, j: i64) -> u64 {
        debug_assert!(i <= self.n_max && j.unsigned_abs() <= self.n_max + 1);
        let h = mix64(self.key ^ i.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        mix64(h ^ (j as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f))
    }
}

impl Disorder for Environment {
    fn omega(&self, i: u64, j: i64) -> f64 {
        let h = self.site_hash(i, j);
        match &self.law {
            Law::Rademacher => {
                if h >> 63 == 1 {
                    1.0
                } else {
                    -1.0
                }
            }
            Law::Uniform(a) => a * (2.0 * unit_interval(h) - 1.0),
            Law::Beta(beta) => 2.0 * (beta_weight(beta, h) - 0.5) / self.root_eps,
        }
    }

    fn root_eps(&self) -> f64 {
        self.root_eps
    }

    fn jump(&self, i: u64, j: i64) -> (f64, f64) {
        if let Law::Beta(beta) = &self.law {
            // Keep B and 1 − B exact instead of round-tripping through ω.
            let b = beta_weight(beta, self.site_hash(i, j));
            return (b, 1.0 - b);
        }
        let s = self.root_eps * self.omega(i, j);
        (0.5 * (1.0 + s), 0.5 * (1.0 - s))
    }

    fn horizon(&self) -> Option<u64> {
        Some(self.n_max)
    }

    fn epsilon(&self) -> Option<f64> {
        Some(self.spec.epsilon)
    }
}

/// `ω ≡ 0`: the simple symmetric walk.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullEnvironment;

impl Disorder for NullEnvironment {
    fn omega(&self, _: u64, _: i64) -> f64 {
        0.0
    }

    fn root_eps(&self) -> f64 {
        0.0
    }
}

/// Explicit site values; missing sites read as 0. Used by enumeration
/// oracles and tests.
#[derive(Clone, Debug, Default)]
pub struct TableEnvironment {
    pub root_eps: f64,
    pub values: std::collections::HashMap<(u64, i64), f64>,
}

impl TableEnvironment {
    pub fn new(epsilon: f64) -> Self {
        TableEnvironment {
            root_eps: epsilon.sqrt(),
            values: Default::default(),
        }
    }

    pub fn set(&mut self, i: u64, j: i64, omega: f64) {
        self.values.insert((i, j), omega);
    }
}

impl Disorder for TableEnvironment {
    fn omega(&self, i: u64, j: i64) -> f64 {
        self.values.get(&(i, j)).copied().unwrap_or(0.0)
    }

    fn root_eps(&self) -> f64 {
        self.root_eps
    }

    fn epsilon(&self) -> Option<f64> {
        Some(self.root_eps * self.root_eps)
    }
}

/// SplitMix64 finaliser.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of stream `index` under master seed `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed) ^ mix64(index.wrapping_add(0x510e_527f_ade6_82d1)))
}

/// Top 53 bits of `h` as a double in `[0, 1)`.
fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// `B` at a site, drawn from a generator seeded by the site hash.
fn beta_weight(beta: &Beta<f64>, h: u64) -> f64 {
    beta.sample(&mut Xoshiro256PlusPlus::seed_from_u64(h))
}

#[derive(Clone, Debug, Serialize)]
pub struct OmegaStats {
    pub mean: SummaryStats,
    /// Estimate of `2 E ω²`, with the stats of `2 ω²`.
    pub two_m2: SummaryStats,
    /// `√(2 E ω²)` from the estimate.
    pub sigma: f64,
}

/// Monte Carlo moments of `ω` from `n_samples` sites of the field keyed by
/// `seed`.
pub fn omega_stats(spec: EnvironmentSpec, n_samples: u64, seed: u64) -> Result<OmegaStats> {
    if n_samples < 1000 {
        return Err(Error::invalid("n_samples", "need at least 1000 samples"));
    }
    let env = sample_environment(spec.with_seed(seed), n_samples)?;
    let omegas: Vec<f64> = (0..n_samples).map(|k| env.omega(k, (k & 1) as i64)).collect();
    let mean = SummaryStats::from_values(&omegas);
    let two_m2 = SummaryStats::from_values(&omegas.iter().map(|w| 2.0 * w * w).collect::<Vec<_>>());
    Ok(OmegaStats {
        sigma: two_m2.mean.sqrt(),
        mean,
        two_m2,
    })
}
