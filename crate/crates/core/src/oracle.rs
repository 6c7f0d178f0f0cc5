//! Independent equilibrium checks and brute-force ground truth.
//!
//! Nothing here goes through the solver's evaluator: payoffs are summed over
//! full profile products and the penalties are recomputed from scratch.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{advance, GameTensor, RegretEvaluator};
use crate::scalar::Scalar;

/// Largest number of pure profiles (or grid points) the oracles will visit.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

/// Largest strategy count per player accepted by support enumeration.
pub const SUPPORT_ENUMERATION_MAX_STRATEGIES: usize = 5;

pub const DEFAULT_TOL_REGRET: f64 = 1e-6;
pub const DEFAULT_TOL_FEAS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumCertificate<T> {
    pub profile: Vec<T>,
    pub objective: T,
    /// `max_j z^i_j` for each player.
    pub max_regret: Vec<T>,
    pub box_violation: T,
    pub equality_violation: T,
    pub tol_regret: T,
    pub tol_feas: T,
    pub verdict: bool,
}

impl<T: Scalar> EquilibriumCertificate<T> {
    pub fn worst_regret(&self) -> T {
        self.max_regret
            .iter()
            .fold(T::neg_infinity(), |m, &v| m.max(v))
    }
}

fn check_len<T: Scalar>(game: &GameTensor<T>, x: &[T]) -> Result<()> {
    if x.len() != game.total_strategies() {
        return Err(Error::DimensionMismatch {
            expected: game.total_strategies(),
            found: x.len(),
        });
    }
    Ok(())
}

/// `Σ_s u^i(s) Π_r x^r_{s_r}`. With `fixed = Some((p, k))` only profiles
/// with `s_p = k` count and player `p`'s factor is dropped.
fn brute_payoff<T: Scalar>(
    game: &GameTensor<T>,
    player: usize,
    x: &[T],
    fixed: Option<(usize, usize)>,
) -> T {
    let mut total = T::zero();
    for s in game.profiles() {
        let mut w = T::one();
        let mut keep = true;
        for (r, &j) in s.iter().enumerate() {
            match fixed {
                Some((p, k)) if p == r => {
                    if j != k {
                        keep = false;
                        break;
                    }
                }
                _ => w = w * x[game.block(r).start + j],
            }
        }
        if keep {
            total = total + game.payoff(player, &s) * w;
        }
    }
    total
}

/// Recomputes regrets, `Q̃` and feasibility at `x` and decides whether `x`
/// is an equilibrium to the given tolerances.
pub fn certify<T: Scalar>(
    game: &GameTensor<T>,
    x: &[T],
    tol_regret: T,
    tol_feas: T,
) -> Result<EquilibriumCertificate<T>> {
    check_len(game, x)?;
    let mut objective = T::zero();
    let mut max_regret = Vec::with_capacity(game.num_players());
    for i in 0..game.num_players() {
        let u = brute_payoff(game, i, x, None);
        let mut worst = T::neg_infinity();
        for j in 0..game.strategy_counts()[i] {
            let z = brute_payoff(game, i, x, Some((i, j))) - u;
            worst = worst.max(z);
            if z > T::zero() {
                objective = objective + z * z;
            }
        }
        max_regret.push(worst);
    }

    let mut box_violation = T::zero();
    for &v in x {
        if v < T::zero() {
            box_violation = box_violation - v;
        } else if v > T::one() {
            box_violation = box_violation + (v - T::one());
        }
    }
    let mut sq = T::zero();
    for i in 0..game.num_players() {
        let mut s = -T::one();
        for k in game.block(i) {
            s = s + x[k];
        }
        sq = sq + s * s;
    }
    let equality_violation = sq.sqrt();

    let verdict = box_violation <= tol_feas
        && equality_violation <= tol_feas
        && max_regret.iter().all(|&r| r <= tol_regret);
    Ok(EquilibriumCertificate {
        profile: x.to_vec(),
        objective,
        max_regret,
        box_violation,
        equality_violation,
        tol_regret,
        tol_feas,
        verdict,
    })
}

/// [`certify`] with the default tolerances (regret 1e-6, feasibility 1e-8).
pub fn certify_default<T: Scalar>(
    game: &GameTensor<T>,
    x: &[T],
) -> Result<EquilibriumCertificate<T>> {
    certify(
        game,
        x,
        T::lit(DEFAULT_TOL_REGRET),
        T::lit(DEFAULT_TOL_FEAS),
    )
}

fn guard(size: u128) -> Result<()> {
    if size > ENUMERATION_LIMIT {
        return Err(Error::SizeGuard {
            size,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

/// All pure profiles where no player has a strictly improving pure deviation.
pub fn enumerate_pure_ne<T: Scalar>(game: &GameTensor<T>) -> Result<Vec<Vec<usize>>> {
    guard(game.num_profiles() as u128)?;
    let mut found = Vec::new();
    for s in game.profiles() {
        let stable = (0..game.num_players()).all(|i| {
            let here = game.payoff(i, &s);
            let mut alt = s.clone();
            (0..game.strategy_counts()[i]).all(|j| {
                alt[i] = j;
                game.payoff(i, &alt) <= here
            })
        });
        if stable {
            found.push(s);
        }
    }
    Ok(found)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportEnumeration<T> {
    /// `(row player mix, column player mix)` pairs.
    pub equilibria: Vec<(Vec<T>, Vec<T>)>,
    /// Support pairs whose indifference system was singular and skipped.
    pub degenerate_supports: usize,
}

impl<T: Scalar> SupportEnumeration<T> {
    /// Equilibria as concatenated mixed profiles.
    pub fn profiles(&self) -> Vec<Vec<T>> {
        self.equilibria
            .iter()
            .map(|(a, b)| a.iter().chain(b).copied().collect())
            .collect()
    }
}

/// Mixed equilibria of a two-player game from equal-size support pairs.
pub fn two_player_support_enumeration<T: Scalar>(
    game: &GameTensor<T>,
) -> Result<SupportEnumeration<T>> {
    if game.num_players() != 2 {
        return Err(Error::Unsupported(format!(
            "support enumeration needs 2 players, game has {}",
            game.num_players()
        )));
    }
    let (m1, m2) = (game.strategy_counts()[0], game.strategy_counts()[1]);
    let cap = SUPPORT_ENUMERATION_MAX_STRATEGIES;
    if m1 > cap || m2 > cap {
        return Err(Error::Unsupported(format!(
            "support enumeration limited to {cap} strategies per player, got {m1}x{m2}"
        )));
    }
    let a = |i: usize, j: usize| game.payoff(0, &[i, j]);
    let b = |i: usize, j: usize| game.payoff(1, &[i, j]);
    let tol = T::lit(1e-9);

    let mut out = SupportEnumeration {
        equilibria: Vec::new(),
        degenerate_supports: 0,
    };
    for size in 1..=m1.min(m2) {
        for rows in subsets(m1, size) {
            for cols in subsets(m2, size) {
                // Column mix making the row player indifferent over `rows`.
                let col = indifference(&rows, &cols, a);
                // Row mix making the column player indifferent over `cols`.
                let row = indifference(&cols, &rows, |c, r| b(r, c));
                let (Some((y_s, v)), Some((x_s, w))) = (col, row) else {
                    out.degenerate_supports += 1;
                    continue;
                };
                if x_s.iter().chain(&y_s).any(|&p| p < -tol) {
                    continue;
                }
                let mut x = vec![T::zero(); m1];
                let mut y = vec![T::zero(); m2];
                rows.iter()
                    .zip(&x_s)
                    .for_each(|(&r, &p)| x[r] = p.max(T::zero()));
                cols.iter()
                    .zip(&y_s)
                    .for_each(|(&c, &p)| y[c] = p.max(T::zero()));

                let row_ok = (0..m1).all(|r| (0..m2).map(|c| a(r, c) * y[c]).sum::<T>() <= v + tol);
                let col_ok = (0..m2).all(|c| (0..m1).map(|r| b(r, c) * x[r]).sum::<T>() <= w + tol);
                if !(row_ok && col_ok) {
                    continue;
                }
                let duplicate = out.equilibria.iter().any(|(px, py)| {
                    px.iter()
                        .zip(&x)
                        .chain(py.iter().zip(&y))
                        .all(|(&p, &q): (&T, &T)| (p - q).abs() <= tol)
                });
                if !duplicate {
                    out.equilibria.push((x, y));
                }
            }
        }
    }
    Ok(out)
}

/// Solves `Σ_{c∈mixed} payoff(r, c) p_c = value` for every `r ∈ indifferent`
/// together with `Σ p = 1`. Returns `(p, value)`, or `None` when singular.
fn indifference<T: Scalar>(
    indifferent: &[usize],
    mixed: &[usize],
    payoff: impl Fn(usize, usize) -> T,
) -> Option<(Vec<T>, T)> {
    let k = mixed.len();
    let mut matrix = Vec::with_capacity(k + 1);
    let mut rhs = Vec::with_capacity(k + 1);
    for &r in indifferent {
        let mut row: Vec<T> = mixed.iter().map(|&c| payoff(r, c)).collect();
        row.push(-T::one());
        matrix.push(row);
        rhs.push(T::zero());
    }
    let mut norm_row = vec![T::one(); k];
    norm_row.push(T::zero());
    matrix.push(norm_row);
    rhs.push(T::one());

    let sol = solve_linear(matrix, rhs)?;
    let value = sol[k];
    Some((sol[..k].to_vec(), value))
}

/// Gaussian elimination with partial pivoting; `None` if numerically singular.
pub(crate) fn solve_linear<T: Scalar>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    let scale = a
        .iter()
        .flatten()
        .fold(T::zero(), |m, &v| m.max(v.abs()))
        .max(T::one());
    let threshold = T::lit(1e-12) * scale;
    for col in 0..n {
        let pivot = (col..n).max_by(|&p, &q| {
            a[p][col]
                .abs()
                .partial_cmp(&a[q][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].abs() <= threshold {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let (upper, lower) = a.split_at_mut(col + 1);
        let pivot_row = &upper[col];
        for (k, row) in lower.iter_mut().enumerate() {
            let f = row[col] / pivot_row[col];
            if f != T::zero() {
                for (dst, &src) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *dst = *dst - f * src;
                }
                b[col + 1 + k] = b[col + 1 + k] - f * b[col];
            }
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let tail: T = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - tail) / a[r][r];
    }
    Some(x)
}

fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(size);
    fn rec(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, size, cur, out);
            cur.pop();
        }
    }
    rec(0, n, size, &mut current, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridScan<T> {
    pub objective: T,
    pub argmin: Vec<T>,
    pub points_visited: u128,
}

/// Minimizes `Q̃` over the product of per-player simplex grids with step
/// `1 / resolution`. Ties keep the lexicographically smallest point.
pub fn grid_regret_scan<T: Scalar>(game: &GameTensor<T>, resolution: usize) -> Result<GridScan<T>> {
    if resolution == 0 {
        return Err(Error::Config("grid resolution must be at least 1".into()));
    }
    let mut total: u128 = 1;
    for &m in game.strategy_counts() {
        total = total.saturating_mul(binomial(resolution + m - 1, m - 1));
        guard(total)?;
    }

    let grids: Vec<Vec<Vec<T>>> = game
        .strategy_counts()
        .iter()
        .map(|&m| {
            compositions(resolution, m)
                .into_iter()
                .map(|c| {
                    c.into_iter()
                        .map(|k| T::lit(k as f64) / T::lit(resolution as f64))
                        .collect()
                })
                .collect()
        })
        .collect();
    let sizes: Vec<usize> = grids.iter().map(Vec::len).collect();

    let mut eval = RegretEvaluator::new(game);
    let mut index = vec![0usize; sizes.len()];
    let mut x = vec![T::zero(); game.total_strategies()];
    let mut best: Option<(T, Vec<T>)> = None;
    let mut visited = 0u128;
    loop {
        for (i, &k) in index.iter().enumerate() {
            x[game.block(i)].copy_from_slice(&grids[i][k]);
        }
        eval.evaluate(game, &x, false);
        visited += 1;
        if best.as_ref().is_none_or(|(q, _)| eval.objective < *q) {
            best = Some((eval.objective, x.clone()));
        }
        if !advance(&mut index, &sizes) {
            break;
        }
    }
    let (objective, argmin) = best.expect("grid is never empty");
    Ok(GridScan {
        objective,
        argmin,
        points_visited: visited,
    })
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Nonnegative integer vectors of length `parts` summing to `total`.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}
