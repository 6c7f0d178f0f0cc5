//! Finite N-player normal-form games and the regret-squared objective.
//!
//! Payoff tables are flat and row-major over pure profiles: player 1's
//! strategy index is outermost and player N's innermost, so the profile
//! `(j_1, .., j_N)` lives at `((j_1 * m_2 + j_2) * m_3 + ..) + j_N`.
//!
//! Every evaluation is a direct enumeration of the pure profiles. Mixed
//! profiles are never clamped or renormalized; the multilinear form is
//! evaluated as-is, which is what the flow needs outside the simplices.

use std::ops::{Deref, DerefMut, Range};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Payoff data of a finite normal-form game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameTensor<T> {
    counts: Vec<usize>,
    offsets: Vec<usize>,
    num_profiles: usize,
    payoffs: Vec<Vec<T>>,
    labels: Option<Vec<Vec<String>>>,
}

impl<T: Scalar> GameTensor<T> {
    /// Builds a game from per-player strategy counts and one flat payoff
    /// table per player.
    pub fn new(strategy_counts: Vec<usize>, payoffs: Vec<Vec<T>>) -> Result<Self> {
        if strategy_counts.is_empty() {
            return Err(Error::InvalidGame(
                "a game needs at least one player".into(),
            ));
        }
        if let Some(i) = strategy_counts.iter().position(|&m| m == 0) {
            return Err(Error::InvalidGame(format!(
                "player {} has no strategies",
                i + 1
            )));
        }
        let num_profiles = strategy_counts
            .iter()
            .try_fold(1usize, |acc, &m| acc.checked_mul(m))
            .ok_or_else(|| Error::InvalidGame("profile count overflows".into()))?;
        if payoffs.len() != strategy_counts.len() {
            return Err(Error::InvalidGame(format!(
                "{} payoff tables for {} players",
                payoffs.len(),
                strategy_counts.len()
            )));
        }
        for (i, table) in payoffs.iter().enumerate() {
            if table.len() != num_profiles {
                return Err(Error::InvalidGame(format!(
                    "payoff table of player {} has {} entries, expected {}",
                    i + 1,
                    table.len(),
                    num_profiles
                )));
            }
            if let Some(k) = table.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidGame(format!(
                    "payoff of player {} at flat index {} is not finite",
                    i + 1,
                    k
                )));
            }
        }
        let mut offsets = Vec::with_capacity(strategy_counts.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &m in &strategy_counts {
            acc += m;
            offsets.push(acc);
        }
        Ok(Self {
            counts: strategy_counts,
            offsets,
            num_profiles,
            payoffs,
            labels: None,
        })
    }

    /// Attaches strategy labels, one list per player.
    pub fn with_labels(mut self, labels: Vec<Vec<String>>) -> Result<Self> {
        if labels.len() != self.num_players()
            || labels.iter().zip(&self.counts).any(|(l, &m)| l.len() != m)
        {
            return Err(Error::InvalidGame(
                "labels must match the strategy counts".into(),
            ));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn num_players(&self) -> usize {
        self.counts.len()
    }

    pub fn strategy_counts(&self) -> &[usize] {
        &self.counts
    }

    /// Length `m` of a mixed profile, the sum of all strategy counts.
    pub fn total_strategies(&self) -> usize {
        self.offsets[self.counts.len()]
    }

    pub fn num_profiles(&self) -> usize {
        self.num_profiles
    }

    pub fn labels(&self) -> Option<&[Vec<String>]> {
        self.labels.as_deref()
    }

    /// Coordinates of player `i`'s block inside a mixed profile.
    pub fn block(&self, player: usize) -> Range<usize> {
        self.offsets[player]..self.offsets[player + 1]
    }

    pub fn payoff_table(&self, player: usize) -> &[T] {
        &self.payoffs[player]
    }

    pub fn flat_index(&self, profile: &[usize]) -> usize {
        profile
            .iter()
            .zip(&self.counts)
            .fold(0, |acc, (&j, &m)| acc * m + j)
    }

    /// Payoff `u^i(s)` of a pure profile.
    pub fn payoff(&self, player: usize, profile: &[usize]) -> T {
        self.payoffs[player][self.flat_index(profile)]
    }

    /// All pure profiles in flat-index order.
    pub fn profiles(&self) -> PureProfiles<'_> {
        PureProfiles {
            counts: &self.counts,
            current: vec![0; self.counts.len()],
            done: false,
        }
    }

    /// The profile where every player mixes uniformly.
    pub fn uniform_profile(&self) -> MixedProfile<T> {
        let mut x = Vec::with_capacity(self.total_strategies());
        for &m in &self.counts {
            let p = T::one() / T::lit(m as f64);
            x.extend(std::iter::repeat_n(p, m));
        }
        MixedProfile(x)
    }

    /// One-hot blocks for a pure profile.
    pub fn pure_profile(&self, profile: &[usize]) -> Result<MixedProfile<T>> {
        self.check_pure(profile)?;
        let mut x = vec![T::zero(); self.total_strategies()];
        for (i, &j) in profile.iter().enumerate() {
            x[self.offsets[i] + j] = T::one();
        }
        Ok(MixedProfile(x))
    }

    pub(crate) fn check_pure(&self, profile: &[usize]) -> Result<()> {
        if profile.len() != self.num_players() {
            return Err(Error::DimensionMismatch {
                expected: self.num_players(),
                found: profile.len(),
            });
        }
        for (&j, &m) in profile.iter().zip(&self.counts) {
            if j >= m {
                return Err(Error::IndexOutOfRange {
                    what: "strategy",
                    index: j,
                    limit: m,
                });
            }
        }
        Ok(())
    }

    pub(crate) fn check_profile(&self, x: &[T]) -> Result<()> {
        if x.len() != self.total_strategies() {
            return Err(Error::DimensionMismatch {
                expected: self.total_strategies(),
                found: x.len(),
            });
        }
        Ok(())
    }

    fn check_player(&self, player: usize) -> Result<()> {
        if player >= self.num_players() {
            return Err(Error::IndexOutOfRange {
                what: "player",
                index: player,
                limit: self.num_players(),
            });
        }
        Ok(())
    }

    /// Expected payoff `u^i(x)` of `player` at a (possibly infeasible) profile.
    pub fn expected_payoff(&self, player: usize, x: &[T]) -> Result<T> {
        self.check_player(player)?;
        self.check_profile(x)?;
        let mut eval = RegretEvaluator::new(self);
        eval.evaluate(self, x, false);
        Ok(eval.expected_payoffs[player])
    }

    /// Expected payoff `u^i(s^i_j, x^{-i})` of `player` deviating to the pure
    /// strategy `strategy` against the opponents' mixture.
    pub fn partial_expected_payoff(&self, player: usize, strategy: usize, x: &[T]) -> Result<T> {
        self.check_player(player)?;
        if strategy >= self.counts[player] {
            return Err(Error::IndexOutOfRange {
                what: "strategy",
                index: strategy,
                limit: self.counts[player],
            });
        }
        self.check_profile(x)?;
        let mut eval = RegretEvaluator::new(self);
        eval.evaluate(self, x, false);
        Ok(eval.deviation[self.offsets[player] + strategy])
    }

    pub fn regret_report(&self, x: &[T]) -> Result<RegretReport<T>> {
        self.check_profile(x)?;
        let mut eval = RegretEvaluator::new(self);
        eval.evaluate(self, x, false);
        Ok(RegretReport {
            z: eval.z.clone(),
            q: eval.q.clone(),
            objective: eval.objective,
        })
    }

    /// The regret-squared objective `Q̃(x)`.
    pub fn objective(&self, x: &[T]) -> Result<T> {
        self.check_profile(x)?;
        let mut eval = RegretEvaluator::new(self);
        eval.evaluate(self, x, false);
        Ok(eval.objective)
    }

    /// Analytic gradient of `Q̃` at `x`.
    pub fn objective_gradient(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_profile(x)?;
        let mut eval = RegretEvaluator::new(self);
        eval.evaluate(self, x, true);
        Ok(eval.gradient)
    }
}

/// Odometer over pure profiles, last player fastest.
pub struct PureProfiles<'a> {
    counts: &'a [usize],
    current: Vec<usize>,
    done: bool,
}

impl Iterator for PureProfiles<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        self.done = !advance(&mut self.current, self.counts);
        Some(out)
    }
}

/// Advances an odometer; returns `false` after wrapping past the last profile.
pub(crate) fn advance(index: &mut [usize], counts: &[usize]) -> bool {
    for r in (0..index.len()).rev() {
        index[r] += 1;
        if index[r] < counts[r] {
            return true;
        }
        index[r] = 0;
    }
    false
}

/// Concatenated mixed strategies, one block of length `m_i` per player.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MixedProfile<T>(pub Vec<T>);

impl<T> MixedProfile<T> {
    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for MixedProfile<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for MixedProfile<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}

impl<T> From<Vec<T>> for MixedProfile<T> {
    fn from(v: Vec<T>) -> Self {
        Self(v)
    }
}

/// Regrets `z`, clamped regrets `q = max(z, 0)` and `Q̃ = Σ q²`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport<T> {
    pub z: Vec<T>,
    pub q: Vec<T>,
    pub objective: T,
}

impl<T: Scalar> RegretReport<T> {
    /// Largest regret of each player, `max_j z^i_j`.
    pub fn max_regret_per_player(&self, game: &GameTensor<T>) -> Vec<T> {
        (0..game.num_players())
            .map(|i| {
                self.z[game.block(i)]
                    .iter()
                    .fold(T::neg_infinity(), |m, &v| m.max(v))
            })
            .collect()
    }
}

/// Reusable buffers for evaluating payoffs, regrets and `∇Q̃`.
///
/// The integrator calls this once per step, so it avoids allocating.
#[derive(Debug, Clone)]
pub struct RegretEvaluator<T> {
    /// `u^i(s^i_j, x^{-i})`, laid out like a mixed profile.
    pub deviation: Vec<T>,
    /// `u^i(x)` per player.
    pub expected_payoffs: Vec<T>,
    pub z: Vec<T>,
    pub q: Vec<T>,
    pub objective: T,
    /// Valid only after `evaluate(.., true)`.
    pub gradient: Vec<T>,
    coeff: Vec<T>,
    index: Vec<usize>,
    picked: Vec<T>,
    prefix: Vec<T>,
    suffix: Vec<T>,
}

impl<T: Scalar> RegretEvaluator<T> {
    pub fn new(game: &GameTensor<T>) -> Self {
        let m = game.total_strategies();
        let n = game.num_players();
        Self {
            deviation: vec![T::zero(); m],
            expected_payoffs: vec![T::zero(); n],
            z: vec![T::zero(); m],
            q: vec![T::zero(); m],
            objective: T::zero(),
            gradient: vec![T::zero(); m],
            coeff: vec![T::zero(); m],
            index: vec![0; n],
            picked: vec![T::zero(); n],
            prefix: vec![T::zero(); n + 1],
            suffix: vec![T::zero(); n + 1],
        }
    }

    /// Fills products of `picked` with one entry left out:
    /// `prefix[r] * suffix[r + 1] = Π_{t != r} picked[t]`.
    fn exclusion_products(&mut self) {
        let n = self.picked.len();
        self.prefix[0] = T::one();
        for r in 0..n {
            self.prefix[r + 1] = self.prefix[r] * self.picked[r];
        }
        self.suffix[n] = T::one();
        for r in (0..n).rev() {
            self.suffix[r] = self.suffix[r + 1] * self.picked[r];
        }
    }

    fn load_profile(&mut self, game: &GameTensor<T>, x: &[T]) {
        for (r, &j) in self.index.iter().enumerate() {
            self.picked[r] = x[game.offsets[r] + j];
        }
    }

    /// Evaluates regrets and `Q̃` at `x`; also `∇Q̃` when `with_gradient`.
    /// `x` must have the game's profile length.
    pub fn evaluate(&mut self, game: &GameTensor<T>, x: &[T], with_gradient: bool) {
        debug_assert_eq!(x.len(), game.total_strategies());
        let n = game.num_players();

        self.deviation.iter_mut().for_each(|v| *v = T::zero());
        self.index.iter_mut().for_each(|v| *v = 0);
        for flat in 0..game.num_profiles {
            self.load_profile(game, x);
            self.exclusion_products();
            for i in 0..n {
                let w = self.prefix[i] * self.suffix[i + 1];
                let slot = game.offsets[i] + self.index[i];
                self.deviation[slot] = self.deviation[slot] + game.payoffs[i][flat] * w;
            }
            advance(&mut self.index, &game.counts);
        }

        let mut objective = T::zero();
        for i in 0..n {
            let block = game.block(i);
            let u: T = block.clone().map(|k| x[k] * self.deviation[k]).sum();
            self.expected_payoffs[i] = u;
            for k in block {
                let z = self.deviation[k] - u;
                let q = z.max(T::zero());
                self.z[k] = z;
                self.q[k] = q;
                objective = objective + q * q;
            }
        }
        self.objective = objective;

        if with_gradient {
            self.accumulate_gradient(game, x);
        }
    }

    // ∂Q̃/∂x^p_l = -2 U_{p,l} Σ_j q_{p,j}
    //            + Σ_{i≠p} 2 Σ_j (q_{i,j} - x^i_j Σ_k q_{i,k}) u^i(s^i_j, s^p_l, x^{-i,-p})
    fn accumulate_gradient(&mut self, game: &GameTensor<T>, x: &[T]) {
        let n = game.num_players();
        let two = T::lit(2.0);
        for i in 0..n {
            let block = game.block(i);
            let total: T = block.clone().map(|k| self.q[k]).sum();
            for k in block {
                self.gradient[k] = -two * self.deviation[k] * total;
                self.coeff[k] = two * (self.q[k] - x[k] * total);
            }
        }
        if n < 2 {
            return;
        }

        self.index.iter_mut().for_each(|v| *v = 0);
        for flat in 0..game.num_profiles {
            self.load_profile(game, x);
            for p in 0..n {
                let saved = self.picked[p];
                self.picked[p] = T::one();
                self.exclusion_products();
                self.picked[p] = saved;
                let mut acc = T::zero();
                for i in (0..n).filter(|&i| i != p) {
                    let c = self.coeff[game.offsets[i] + self.index[i]];
                    if c != T::zero() {
                        let w = self.prefix[i] * self.suffix[i + 1];
                        acc = acc + c * game.payoffs[i][flat] * w;
                    }
                }
                let slot = game.offsets[p] + self.index[p];
                self.gradient[slot] = self.gradient[slot] + acc;
            }
            advance(&mut self.index, &game.counts);
        }
    }
}

/// The three-player rock-paper-scissors game used throughout the tests and
/// shipped as `games/rps3.toml`. Strategy order is (R, P, S).
pub fn rock_paper_scissors_3<T: Scalar>() -> GameTensor<T> {
    // (u1, u2, u3) indexed [p3][p1][p2]
    const TABLE: [[[(i8, i8, i8); 3]; 3]; 3] = [
        [
            [(0, 0, 0), (-1, 2, -1), (1, -2, 1)],
            [(2, -1, -1), (1, 1, -2), (0, 0, 0)],
            [(-2, 1, 1), (0, 0, 0), (-1, -1, 2)],
        ],
        [
            [(-1, -1, 2), (-2, 1, 1), (0, 0, 0)],
            [(1, -2, 1), (0, 0, 0), (-1, 2, -1)],
            [(0, 0, 0), (2, -1, -1), (1, 1, -2)],
        ],
        [
            [(1, 1, -2), (0, 0, 0), (2, -1, -1)],
            [(0, 0, 0), (-1, -1, 2), (-2, 1, 1)],
            [(-1, 2, -1), (1, -2, 1), (0, 0, 0)],
        ],
    ];
    let mut payoffs: Vec<Vec<T>> = (0..3).map(|_| Vec::with_capacity(27)).collect();
    for a in 0..3 {
        for b in 0..3 {
            for by_p3 in &TABLE {
                let (u1, u2, u3) = by_p3[a][b];
                payoffs[0].push(T::lit(u1 as f64));
                payoffs[1].push(T::lit(u2 as f64));
                payoffs[2].push(T::lit(u3 as f64));
            }
        }
    }
    let labels = vec![vec!["R".to_string(), "P".into(), "S".into()]; 3];
    GameTensor::new(vec![3, 3, 3], payoffs)
        .and_then(|g| g.with_labels(labels))
        .expect("static table is valid")
}

/// Two-player matching pennies.
pub fn matching_pennies<T: Scalar>() -> GameTensor<T> {
    let p1: Vec<T> = [1.0, -1.0, -1.0, 1.0].iter().map(|&v| T::lit(v)).collect();
    let p2 = p1.iter().map(|&v| -v).collect();
    GameTensor::new(vec![2, 2], vec![p1, p2]).expect("static table is valid")
}
