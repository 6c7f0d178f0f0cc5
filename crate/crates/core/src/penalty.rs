//! Box and sum-to-one constraints of the simplex product, their penalties,
//! subgradient selections, the violation signal and the objective gate.
//!
//! `G(x) = Σ max(0, -x_k) + max(0, x_k - 1)` penalizes the box `[0, 1]^m`,
//! `H(x) = ‖Cx - d‖` penalizes the per-player sums, where `C` is the block
//! indicator matrix and `d` the all-ones vector.

use crate::error::{Error, Result};
use crate::game::GameTensor;
use crate::scalar::{norm2, Scalar};

/// Block structure of the equality constraints `Cx = d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintGeometry {
    counts: Vec<usize>,
    offsets: Vec<usize>,
}

impl ConstraintGeometry {
    pub fn new(strategy_counts: &[usize]) -> Result<Self> {
        if strategy_counts.is_empty() || strategy_counts.contains(&0) {
            return Err(Error::InvalidGame(
                "strategy counts must be non-empty and positive".into(),
            ));
        }
        let mut offsets = vec![0];
        for &m in strategy_counts {
            offsets.push(offsets.last().unwrap() + m);
        }
        Ok(Self {
            counts: strategy_counts.to_vec(),
            offsets,
        })
    }

    pub fn for_game<T: Scalar>(game: &GameTensor<T>) -> Self {
        Self::new(game.strategy_counts()).expect("games have valid counts")
    }

    pub fn strategy_counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_blocks(&self) -> usize {
        self.counts.len()
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn block(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Smallest eigenvalue of `C Cᵀ = diag(m_1, .., m_N)`.
    pub fn lambda_min(&self) -> usize {
        *self.counts.iter().min().unwrap()
    }

    /// Dense `C`, row per player. Only used to cross-check the block formulas.
    pub fn indicator_matrix<T: Scalar>(&self) -> Vec<Vec<T>> {
        (0..self.num_blocks())
            .map(|i| {
                let mut row = vec![T::zero(); self.dim()];
                self.block(i).for_each(|k| row[k] = T::one());
                row
            })
            .collect()
    }

    /// Per-player sums minus one, `h(x) = Cx - d`.
    pub fn equality_map<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        (0..self.num_blocks())
            .map(|i| x[self.block(i)].iter().copied().sum::<T>() - T::one())
            .collect()
    }

    /// The interior reference point `x̄`, uniform within each block.
    pub fn uniform_point<T: Scalar>(&self) -> Vec<T> {
        let mut x = Vec::with_capacity(self.dim());
        for &m in &self.counts {
            x.extend(std::iter::repeat_n(T::one() / T::lit(m as f64), m));
        }
        x
    }
}

pub fn box_violation<T: Scalar>(x: &[T]) -> T {
    x.iter()
        .map(|&v| (-v).max(T::zero()) + (v - T::one()).max(T::zero()))
        .sum()
}

/// Entrywise element of `∂G(x)`: -1 below 0, +1 above 1, 0 inside the box
/// including its kinks.
pub fn box_subgradient<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter()
        .map(|&v| {
            if v < T::zero() {
                -T::one()
            } else if v > T::one() {
                T::one()
            } else {
                T::zero()
            }
        })
        .collect()
}

/// `h(x)` and `H(x) = ‖h(x)‖`.
pub fn equality_residual<T: Scalar>(geometry: &ConstraintGeometry, x: &[T]) -> (Vec<T>, T) {
    let h = geometry.equality_map(x);
    let norm = norm2(&h);
    (h, norm)
}

/// `η = Cᵀh / ‖h‖` when `h != 0`, the zero vector otherwise.
pub fn equality_subgradient<T: Scalar>(geometry: &ConstraintGeometry, x: &[T]) -> Vec<T> {
    let (h, norm) = equality_residual(geometry, x);
    let mut eta = vec![T::zero(); geometry.dim()];
    if norm > T::zero() {
        for (i, &hi) in h.iter().enumerate() {
            let w = hi / norm;
            geometry.block(i).for_each(|k| eta[k] = w);
        }
    }
    eta
}

/// `ε(x) = G(x) + H(x)`.
pub fn violation_signal<T: Scalar>(geometry: &ConstraintGeometry, x: &[T]) -> T {
    box_violation(x) + equality_residual(geometry, x).1
}

/// The objective gate `ξ`: `1 - nu` while `G(x) ≤ 1`, zero beyond.
pub fn gate<T: Scalar>(box_value: T, nu: T) -> Result<T> {
    check_nu(nu)?;
    Ok(if box_value > T::one() {
        T::zero()
    } else {
        T::one() - nu
    })
}

pub(crate) fn check_nu<T: Scalar>(nu: T) -> Result<()> {
    if !(nu >= T::zero() && nu < T::one()) {
        return Err(Error::Config(format!(
            "gate parameter nu = {nu} not in [0, 1)"
        )));
    }
    Ok(())
}

/// Growth rate of the adaptive penalty: `sign(ε)`.
pub fn zeta_rate<T: Scalar>(epsilon: T) -> T {
    if epsilon > T::zero() {
        T::one()
    } else {
        T::zero()
    }
}

/// Result of [`penalty_prox`]: the new point and the subgradient elements
/// `κ ∈ ∂G(x)`, `η ∈ ∂H(x)` it realizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxStep<T> {
    pub x: Vec<T>,
    pub kappa: Vec<T>,
    pub eta: Vec<T>,
}

/// Proximal map of `box_weight * G + sum_weight * H`:
///
/// `argmin_x ½‖x - v‖² + box_weight·G(x) + sum_weight·H(x)`.
///
/// The returned `κ`, `η` satisfy `x = v - box_weight·κ - sum_weight·η` with
/// `κ ∈ ∂G(x)` and `η ∈ ∂H(x)`. Points that can reach `Cx = d` within the
/// penalty budget land on it exactly (up to rounding of the block sums).
pub fn penalty_prox<T: Scalar>(
    geometry: &ConstraintGeometry,
    v: &[T],
    box_weight: T,
    sum_weight: T,
) -> ProxStep<T> {
    let a = box_weight.max(T::zero());
    let b = sum_weight.max(T::zero());
    let n = geometry.num_blocks();

    let mut w = vec![T::zero(); n];
    if b > T::zero() {
        let blocks: Vec<BlockSum<T>> = (0..n)
            .map(|i| BlockSum::new(&v[geometry.block(i)], a, b))
            .collect();

        // Try to hit h = 0 with ‖w‖ ≤ 1.
        let w0: Vec<T> = blocks.iter().map(|bl| bl.root(T::zero())).collect();
        if norm2(&w0) <= T::one() {
            w = w0;
        } else {
            // h ≠ 0 and w = h/‖h‖: find t = ‖h‖ with ‖w(t)‖ = 1, where
            // w_i(t) solves t·w = s_i(w). ‖w(t)‖ decreases in t.
            let s0: Vec<T> = blocks.iter().map(|bl| bl.eval(T::zero())).collect();
            let mut lo = T::zero();
            let mut hi = norm2(&s0).max(T::min_positive_value());
            let eps = T::epsilon();
            for _ in 0..200 {
                let mid = lo + (hi - lo) / T::lit(2.0);
                if mid <= lo || mid >= hi || hi - lo <= eps * hi {
                    break;
                }
                let norm = norm2(&blocks.iter().map(|bl| bl.root(mid)).collect::<Vec<_>>());
                if norm > T::one() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            w = blocks.iter().map(|bl| bl.root(hi)).collect();
        }
    }

    let mut x = vec![T::zero(); v.len()];
    let mut kappa = vec![T::zero(); v.len()];
    let mut eta = vec![T::zero(); v.len()];
    for (i, &wi) in w.iter().enumerate() {
        for k in geometry.block(i) {
            let u = v[k] - b * wi;
            let (xk, kk) = box_prox(u, a);
            x[k] = xk;
            kappa[k] = kk;
            eta[k] = wi;
        }
    }
    ProxStep { x, kappa, eta }
}

/// Prox of `a·(max(0,-x) + max(0,x-1))` at `u`, with the subgradient it picks.
fn box_prox<T: Scalar>(u: T, a: T) -> (T, T) {
    let one = T::one();
    let zero = T::zero();
    if u < -a {
        (u + a, -one)
    } else if u <= zero {
        (zero, if a > zero { u / a } else { zero })
    } else if u <= one {
        (u, zero)
    } else if u <= one + a {
        (one, if a > zero { (u - one) / a } else { zero })
    } else {
        (u - a, one)
    }
}

/// `s(w) = Σ_k P_a(v_k - b·w) - 1` for one block; nonincreasing and
/// piecewise linear in `w`.
struct BlockSum<T> {
    v: Vec<T>,
    a: T,
    b: T,
    breaks: Vec<T>,
}

impl<T: Scalar> BlockSum<T> {
    fn new(v: &[T], a: T, b: T) -> Self {
        let mut breaks = Vec::with_capacity(4 * v.len());
        for &vk in v {
            for c in [-a, T::zero(), T::one(), T::one() + a] {
                breaks.push((vk - c) / b);
            }
        }
        breaks.sort_by(|p, q| p.partial_cmp(q).unwrap());
        breaks.dedup();
        Self {
            v: v.to_vec(),
            a,
            b,
            breaks,
        }
    }

    fn eval(&self, w: T) -> T {
        self.v
            .iter()
            .map(|&vk| box_prox(vk - self.b * w, self.a).0)
            .sum::<T>()
            - T::one()
    }

    /// Root of `s(w) - t·w`, nearest zero when the root set is an interval.
    fn root(&self, t: T) -> T {
        let f = |w: T| self.eval(w) - t * w;
        let vals: Vec<T> = self.breaks.iter().map(|&w| f(w)).collect();
        // Outside all breakpoints every coordinate is in a slope-1 piece.
        let outer = self.b * T::lit(self.v.len() as f64) + t;
        let last = self.breaks.len() - 1;

        let lower = match vals.iter().position(|&fv| fv <= T::zero()) {
            Some(0) => self.breaks[0] + vals[0] / outer,
            Some(j) => interpolate(self.breaks[j - 1], vals[j - 1], self.breaks[j], vals[j]),
            None => self.breaks[last] + vals[last] / outer,
        };
        let upper = match vals.iter().rposition(|&fv| fv >= T::zero()) {
            Some(j) if j == last => self.breaks[last] + vals[last] / outer,
            Some(j) => interpolate(self.breaks[j], vals[j], self.breaks[j + 1], vals[j + 1]),
            None => self.breaks[0] + vals[0] / outer,
        };
        T::zero().max(lower).min(upper)
    }
}

fn interpolate<T: Scalar>(w0: T, f0: T, w1: T, f1: T) -> T {
    if f0 == f1 {
        return w0;
    }
    let w = w0 + f0 * (w1 - w0) / (f0 - f1);
    w.max(w0).min(w1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rps_geometry() -> ConstraintGeometry {
        ConstraintGeometry::new(&[3, 3, 3]).unwrap()
    }

    #[test]
    fn box_examples() {
        assert_eq!(box_violation(&[0.0, 0.5, 1.0]), 0.0);
        assert_eq!(box_violation(&[-0.5, 0.5, 1.0]), 0.5);
        assert_eq!(box_violation(&[2.0, -1.0]), 2.0);
        assert_eq!(box_subgradient(&[0.2, 0.9]), vec![0.0, 0.0]);
        assert_eq!(
            box_subgradient(&[-0.5, 1.5, 0.0, 1.0]),
            vec![-1.0, 1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn equality_examples() {
        let g = rps_geometry();
        let t: f64 = 1.0 / 3.0;
        let feasible = [t, t, t, 1.0, 0.0, 0.0, 0.2, 0.3, 0.5];
        let (h, norm) = equality_residual(&g, &feasible);
        assert!(h.iter().all(|v| v.abs() < 1e-15));
        assert!(norm < 1e-15);
        assert!(
            equality_subgradient(&g, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
                .iter()
                .all(|&v| v == 0.0)
        );

        let x = [0.5f64, 0.5, 0.5, 1.0, 0.0, 0.0, 0.2, 0.3, 0.5];
        assert!((equality_residual(&g, &x).1 - 0.5).abs() < 1e-15);

        let x = [1.0, 1.0, 0.0, 0.5, 0.5, 1.0, 0.2, 0.3, 0.5];
        assert!((equality_residual(&g, &x).1 - 2f64.sqrt()).abs() < 1e-15);

        let x = [1.0, 0.5, 0.5, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let eta = equality_subgradient(&g, &x);
        assert_eq!(eta, vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((norm2(&eta) - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn violation_examples() {
        let g = rps_geometry();
        let x = [-0.5f64, 0.5, 0.5, 1.0, 0.0, 0.0, 0.2, 0.3, 0.5];
        assert!((violation_signal(&g, &x) - 1.0).abs() < 1e-15);
        assert_eq!(violation_signal(&g, &g.uniform_point::<f64>()), 0.0);
    }

    #[test]
    fn gate_examples() {
        assert_eq!(gate(0.0, 0.0).unwrap(), 1.0);
        assert_eq!(gate(2.0, 0.0).unwrap(), 0.0);
        assert_eq!(gate(0.5, 0.25).unwrap(), 0.75);
        assert_eq!(gate(1.0, 0.0).unwrap(), 1.0);
        assert!(gate(0.5, 1.0).is_err());
        assert!(gate(0.5, -0.1).is_err());
    }

    #[test]
    fn zeta_rate_examples() {
        assert_eq!(zeta_rate(0.0), 0.0);
        assert_eq!(zeta_rate(1.0), 1.0);
        assert_eq!(zeta_rate(1e-300), 1.0);
    }

    #[test]
    fn lambda_min_matches_gram_matrix() {
        let g = ConstraintGeometry::new(&[4, 2, 3]).unwrap();
        let c = g.indicator_matrix::<f64>();
        for (r, row_r) in c.iter().enumerate() {
            for (s, row_s) in c.iter().enumerate() {
                let dot: f64 = row_r.iter().zip(row_s).map(|(a, b)| a * b).sum();
                let expected = if r == s {
                    g.strategy_counts()[r] as f64
                } else {
                    0.0
                };
                assert_eq!(dot, expected);
            }
        }
        assert_eq!(g.lambda_min(), 2);
    }

    #[test]
    fn prox_without_penalty_is_identity() {
        let g = rps_geometry();
        let v = [3.0, -2.0, 0.5, 0.1, 0.2, 0.3, 9.0, -9.0, 0.0];
        assert_eq!(penalty_prox(&g, &v, 0.0, 0.0).x, v.to_vec());
    }

    #[test]
    fn prox_scalar_case() {
        // One block of one strategy at 2 with a = b = 0.1: slope 2 above 1.
        let g = ConstraintGeometry::new(&[1]).unwrap();
        let p = penalty_prox(&g, &[2.0f64], 0.1, 0.1);
        assert!((p.x[0] - 1.8).abs() < 1e-12);
        assert!((p.kappa[0] - 1.0).abs() < 1e-12);
        assert!((p.eta[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn prox_lands_on_simplex_with_large_weight() {
        let g = rps_geometry();
        let v = [0.5, 0.4, 0.3, 0.1, 0.1, 0.1, 0.9, -0.05, 0.2];
        let p = penalty_prox(&g, &v, 1.0, 1.0);
        assert_eq!(box_violation(&p.x), 0.0);
        assert!(equality_residual(&g, &p.x).1 < 1e-14);
    }
}
