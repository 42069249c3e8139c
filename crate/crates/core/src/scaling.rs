//! Lattice geometry: the even sublattice, the affine map `A_ε` and snapping
//! of continuum points to the lattice point of their cell.
//!
//! `A_ε(i, j) = (i ε², (j − v i) ε)`. The image of the rectangle
//! `[i, i+1) × [j, j+2)` is a parallelogram cell; a point `(t, x)` lies in the
//! cell of `(i, j)` when `i ε² ≤ t < (i+1) ε²` and, with `s = t/ε²`,
//! `(j − v s) ε ≤ x < (j + 2 − v s) ε`. Bottom and left edges belong to the
//! cell.

use serde::{Deserialize, Serialize};

use crate::error::{check_open, check_positive, Error, Result};

/// Comparisons against a cell edge treat values within this many ulps of the
/// edge as lying on it, so that `A_ε(i, j)` snaps back to `(i, j)` even when
/// `ε²` is not representable.
pub(crate) const EDGE_ULPS: f64 = 8.0;

/// A point of `Z²₂ = {(i, j) : i ≥ 0, i + j even}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticePoint {
    pub i: u64,
    pub j: i64,
}

impl LatticePoint {
    pub fn new(i: u64, j: i64) -> Result<Self> {
        if (i as i64 + j).rem_euclid(2) != 0 {
            return Err(Error::invalid("j", format!("({i}, {j}) has odd parity")));
        }
        Ok(LatticePoint { i, j })
    }

    /// Whether a walk started at the origin can be here.
    pub fn in_cone(&self) -> bool {
        j_abs(self.j) <= self.i
    }
}

fn j_abs(j: i64) -> u64 {
    j.unsigned_abs()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFrame {
    epsilon: f64,
    v: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnappedPoint {
    pub t_eps: f64,
    pub x_eps: f64,
    pub point: LatticePoint,
}

impl ScalingFrame {
    pub fn new(epsilon: f64, v: f64) -> Result<Self> {
        check_positive("epsilon", epsilon)?;
        check_open("v", v, 0.0, 1.0)?;
        Ok(ScalingFrame { epsilon, v })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn affine_map(&self, p: LatticePoint) -> (f64, f64) {
        self.map_real(p.i as f64, p.j as f64)
    }

    pub fn snap(&self, t: f64, x: f64) -> Result<SnappedPoint> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::invalid("t", format!("{t} is not a finite time ≥ 0")));
        }
        if !x.is_finite() {
            return Err(Error::invalid("x", format!("{x} is not finite")));
        }
        let e2 = self.epsilon * self.epsilon;
        let s = t / e2;
        let mut i = s.floor();
        if on_edge((i + 1.0) * e2, t) {
            i += 1.0;
        }
        let s = if on_edge(i * e2, t) { i } else { s };
        let i = i as u64;

        let w = x / self.epsilon + self.v * s;
        let mut j = w.floor() as i64;
        if (i as i64 + j).rem_euclid(2) != 0 {
            j -= 1;
        }
        let scale = (x / self.epsilon).abs().max(self.v * s).max(1.0);
        if (j + 2) as f64 - w <= EDGE_ULPS * f64::EPSILON * scale {
            j += 2;
        }
        let point = LatticePoint { i, j };
        let (t_eps, x_eps) = self.affine_map(point);
        Ok(SnappedPoint { t_eps, x_eps, point })
    }

    /// Area of the image of one lattice cell, computed from its corners.
    pub fn cell_area(&self) -> f64 {
        let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 2.0), (0.0, 2.0)].map(|(i, j)| self.map_real(i, j));
        shoelace(&corners)
    }

    fn map_real(&self, i: f64, j: f64) -> (f64, f64) {
        (i * self.epsilon * self.epsilon, (j - self.v * i) * self.epsilon)
    }
}

fn on_edge(edge: f64, value: f64) -> bool {
    (edge - value).abs() <= EDGE_ULPS * f64::EPSILON * edge.abs().max(value.abs())
}

fn shoelace(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    let twice: f64 = (0..n)
        .map(|k| {
            let (a, b) = (poly[k], poly[(k + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    twice.abs() / 2.0
}
