//! Particle-swarm multi-start around the neurodynamic flow.
//!
//! Each outer iteration runs every particle's flow to a critical point,
//! folds the results into personal and group bests, updates the stall
//! counter and re-seeds the particles with the swarm velocity rule
//!
//! ```text
//! v ← α(k) v + c1 l1 (p_best - x) + c2 l2 (g_best - x),   x ← x + v
//! ```
//!
//! Flow runs inside one iteration are independent and run in parallel.
//! Every particle owns a random stream derived from the master seed, so
//! results do not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{run_to_critical, AnaOutcome, AnaSettings, AnaTrace};
use crate::error::{Error, Result};
use crate::game::GameTensor;
use crate::oracle::{certify, EquilibriumCertificate, DEFAULT_TOL_FEAS, DEFAULT_TOL_REGRET};
use crate::penalty::{violation_signal, ConstraintGeometry};
use crate::scalar::Scalar;

/// Which point the velocity update moves from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PsoAnchor {
    /// The critical point the particle's last flow run reached.
    #[default]
    CriticalPoint,
    /// The position the particle's last flow run started from.
    StartPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmSettings<T> {
    pub swarm_size: usize,
    /// Inertia at `k = 0`; decays linearly to `inertia_end` at `k_max`.
    pub inertia_start: T,
    pub inertia_end: T,
    pub c1: T,
    pub c2: T,
    /// Group-best changes at most this large count as a stall.
    pub stall_tol: T,
    /// Stop once the stall counter exceeds this.
    pub stall_limit: usize,
    pub max_iterations: usize,
    /// Stop as soon as the group best reaches this objective.
    pub global_tol: T,
    pub init_low: T,
    pub init_high: T,
    pub seed: u64,
    pub anchor: PsoAnchor,
    pub tol_regret: T,
    pub tol_feas: T,
    pub record_traces: bool,
}

impl<T: Scalar> Default for SwarmSettings<T> {
    fn default() -> Self {
        Self {
            swarm_size: 10,
            inertia_start: T::lit(0.9),
            inertia_end: T::lit(0.4),
            c1: T::lit(2.0),
            c2: T::lit(2.0),
            stall_tol: T::lit(0.1),
            stall_limit: 100,
            max_iterations: 500,
            global_tol: T::lit(1e-12),
            init_low: T::lit(-10.0),
            init_high: T::lit(10.0),
            seed: 0,
            anchor: PsoAnchor::default(),
            tol_regret: T::lit(DEFAULT_TOL_REGRET),
            tol_feas: T::lit(DEFAULT_TOL_FEAS),
            record_traces: false,
        }
    }
}

impl<T: Scalar> SwarmSettings<T> {
    pub fn validate(&self) -> Result<()> {
        if self.swarm_size == 0 {
            return Err(Error::Config("swarm_size must be at least 1".into()));
        }
        for (name, v) in [
            ("stall_tol", self.stall_tol),
            ("global_tol", self.global_tol),
            ("tol_regret", self.tol_regret),
            ("tol_feas", self.tol_feas),
        ] {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.init_low < self.init_high
            && self.init_low.is_finite()
            && self.init_high.is_finite())
        {
            return Err(Error::Config(format!(
                "init range [{}, {}] is empty",
                self.init_low, self.init_high
            )));
        }
        Ok(())
    }

    /// `α(k) = end + (start - end)(1 - k / k_max)`.
    pub fn inertia(&self, k: usize) -> T {
        let frac = if self.max_iterations == 0 {
            T::zero()
        } else {
            T::lit(k as f64) / T::lit(self.max_iterations as f64)
        };
        self.inertia_end + (self.inertia_start - self.inertia_end) * (T::one() - frac)
    }
}

/// A stored critical point and its objective.
#[derive(Debug, Clone, PartialEq)]
pub struct BestPoint<T> {
    pub x: Vec<T>,
    pub objective: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle<T> {
    /// Start point of the next flow run.
    pub position: Vec<T>,
    pub velocity: Vec<T>,
    /// Start point of the last flow run.
    pub last_start: Vec<T>,
    /// Critical point of the last flow run, if it did not fault.
    pub last_critical: Option<Vec<T>>,
    pub best: Option<BestPoint<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState<T> {
    pub particles: Vec<Particle<T>>,
    pub group_best: Option<BestPoint<T>>,
    /// Stall counter `T`.
    pub stall: usize,
    /// Completed outer iterations.
    pub iteration: usize,
}

/// One velocity/position update for a single particle.
#[allow(clippy::too_many_arguments)]
pub fn pso_step<T: Scalar>(
    x: &[T],
    v: &[T],
    personal_best: &[T],
    group_best: &[T],
    alpha: T,
    c1: T,
    c2: T,
    l1: T,
    l2: T,
) -> (Vec<T>, Vec<T>) {
    let v_new: Vec<T> = (0..x.len())
        .map(|k| {
            alpha * v[k] + c1 * l1 * (personal_best[k] - x[k]) + c2 * l2 * (group_best[k] - x[k])
        })
        .collect();
    let x_new = x.iter().zip(&v_new).map(|(&a, &d)| a + d).collect();
    (x_new, v_new)
}

/// Re-seeds every particle with the velocity rule. `l1`, `l2` are drawn
/// uniformly in `[0, 1]` from each particle's own stream.
pub fn pso_update<T: Scalar, R: Rng>(
    state: &mut SwarmState<T>,
    settings: &SwarmSettings<T>,
    rngs: &mut [R],
) {
    let alpha = settings.inertia(state.iteration);
    let group = state.group_best.as_ref().map(|b| b.x.clone());
    for (p, rng) in state.particles.iter_mut().zip(rngs.iter_mut()) {
        let l1 = T::lit(rng.gen_range(0.0..=1.0));
        let l2 = T::lit(rng.gen_range(0.0..=1.0));
        let base = match (settings.anchor, &p.last_critical) {
            (PsoAnchor::CriticalPoint, Some(c)) => c.clone(),
            _ => p.last_start.clone(),
        };
        let pbest = p.best.as_ref().map_or(&base, |b| &b.x);
        let gbest = group.as_ref().unwrap_or(&base);
        let (x, v) = pso_step(
            &base,
            &p.velocity,
            pbest,
            gbest,
            alpha,
            settings.c1,
            settings.c2,
            l1,
            l2,
        );
        p.position = x;
        p.velocity = v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Group best reached `global_tol`.
    GlobalTolerance,
    /// Stall counter exceeded its limit.
    Stalled,
    MaxIterations,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::GlobalTolerance => "global_tolerance",
            Termination::Stalled => "stalled",
            Termination::MaxIterations => "max_iterations",
        }
    }
}

/// Progress report after each outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress<T> {
    pub iteration: usize,
    pub group_best: Option<T>,
    pub stall: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleTrace<T> {
    pub iteration: usize,
    pub particle: usize,
    pub converged: bool,
    pub trace: AnaTrace<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcnaOutcome<T> {
    /// Certificate of the group best, absent if no iteration produced one.
    pub best: Option<EquilibriumCertificate<T>>,
    /// Group-best objective after each iteration (`+∞` before the first one).
    pub history: Vec<T>,
    pub iterations: usize,
    pub faults: usize,
    /// Flow runs that hit `max_steps` before a critical point.
    pub unconverged_runs: usize,
    pub termination: Termination,
    pub traces: Vec<ParticleTrace<T>>,
    pub final_state: SwarmState<T>,
}

pub fn run_acna<T: Scalar>(
    game: &GameTensor<T>,
    settings: &SwarmSettings<T>,
    ana: &AnaSettings<T>,
) -> Result<AcnaOutcome<T>> {
    run_acna_with(game, settings, ana, None, |_| {})
}

fn particle_rng(seed: u64, particle: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(particle as u64);
    rng
}

fn uniform_point<T: Scalar, R: Rng>(
    rng: &mut R,
    dim: usize,
    settings: &SwarmSettings<T>,
) -> Vec<T> {
    let lo = settings.init_low.to_f64_lossy();
    let hi = settings.init_high.to_f64_lossy();
    (0..dim).map(|_| T::lit(rng.gen_range(lo..=hi))).collect()
}

/// [`run_acna`] with optional start positions (one per particle) and a
/// progress callback invoked after every outer iteration.
pub fn run_acna_with<T: Scalar, F>(
    game: &GameTensor<T>,
    settings: &SwarmSettings<T>,
    ana: &AnaSettings<T>,
    initial_positions: Option<Vec<Vec<T>>>,
    mut progress: F,
) -> Result<AcnaOutcome<T>>
where
    F: FnMut(Progress<T>),
{
    settings.validate()?;
    ana.validate()?;
    let dim = game.total_strategies();
    let geometry = ConstraintGeometry::for_game(game);
    let mut rngs: Vec<ChaCha8Rng> = (0..settings.swarm_size)
        .map(|i| particle_rng(settings.seed, i))
        .collect();

    let starts = match initial_positions {
        Some(p) => {
            if p.len() != settings.swarm_size {
                return Err(Error::Config(format!(
                    "{} initial positions for {} particles",
                    p.len(),
                    settings.swarm_size
                )));
            }
            for x in &p {
                game.check_profile(x)?;
            }
            p
        }
        None => rngs
            .iter_mut()
            .map(|rng| uniform_point(rng, dim, settings))
            .collect(),
    };
    let mut state = SwarmState {
        particles: starts
            .into_iter()
            .map(|x| Particle {
                last_start: x.clone(),
                position: x,
                velocity: vec![T::zero(); dim],
                last_critical: None,
                best: None,
            })
            .collect(),
        group_best: None,
        stall: 0,
        iteration: 0,
    };

    let mut history = Vec::new();
    let mut traces = Vec::new();
    let mut faults = 0;
    let mut unconverged_runs = 0;
    let mut termination = Termination::MaxIterations;

    while state.iteration < settings.max_iterations {
        let runs: Vec<Result<AnaOutcome<T>>> = state
            .particles
            .par_iter()
            .map(|p| run_to_critical(game, &p.position, ana))
            .collect();

        for (i, (p, run)) in state.particles.iter_mut().zip(runs).enumerate() {
            p.last_start = p.position.clone();
            match run {
                Ok(out) => {
                    if !out.converged {
                        unconverged_runs += 1;
                    }
                    let eps = violation_signal(&geometry, &out.critical_point);
                    let objective = game.objective(&out.critical_point)?;
                    let improves = p.best.as_ref().is_none_or(|b| b.objective > objective);
                    if eps <= ana.feasibility_tol && improves {
                        p.best = Some(BestPoint {
                            x: out.critical_point.clone(),
                            objective,
                        });
                    }
                    if settings.record_traces {
                        traces.push(ParticleTrace {
                            iteration: state.iteration,
                            particle: i,
                            converged: out.converged,
                            trace: out.trace,
                        });
                    }
                    p.last_critical = Some(out.critical_point);
                }
                Err(Error::IntegrationFault { .. }) => {
                    faults += 1;
                    p.last_critical = None;
                    p.position = uniform_point(&mut rngs[i], dim, settings);
                    p.velocity = vec![T::zero(); dim];
                }
                Err(e) => return Err(e),
            }
        }

        let previous = state.group_best.as_ref().map(|b| b.objective);
        let leader = state.particles.iter().filter_map(|p| p.best.as_ref()).fold(
            None::<&BestPoint<T>>,
            |acc, b| match acc {
                Some(a) if a.objective <= b.objective => Some(a),
                _ => Some(b),
            },
        );
        if let Some(leader) = leader {
            if previous.is_none_or(|q| q > leader.objective) {
                state.group_best = Some(leader.clone());
            }
        }
        let current = state.group_best.as_ref().map(|b| b.objective);
        state.stall = match (previous, current) {
            (Some(a), Some(b)) if (b - a).abs() <= settings.stall_tol => state.stall + 1,
            _ => 0,
        };
        history.push(current.unwrap_or(T::infinity()));
        state.iteration += 1;
        progress(Progress {
            iteration: state.iteration,
            group_best: current,
            stall: state.stall,
        });

        if current.is_some_and(|q| q <= settings.global_tol) {
            termination = Termination::GlobalTolerance;
            break;
        }
        if state.stall > settings.stall_limit {
            termination = Termination::Stalled;
            break;
        }
        if state.iteration < settings.max_iterations {
            // Faulted particles were re-seeded above and keep that position.
            let faulted: Vec<bool> = state
                .particles
                .iter()
                .map(|p| p.last_critical.is_none())
                .collect();
            let kept: Vec<(Vec<T>, Vec<T>)> = state
                .particles
                .iter()
                .map(|p| (p.position.clone(), p.velocity.clone()))
                .collect();
            pso_update(&mut state, settings, &mut rngs);
            for ((p, f), (x, v)) in state.particles.iter_mut().zip(faulted).zip(kept) {
                if f {
                    p.position = x;
                    p.velocity = v;
                }
            }
        }
    }

    let best = match &state.group_best {
        Some(b) => Some(certify(game, &b.x, settings.tol_regret, settings.tol_feas)?),
        None => None,
    };
    Ok(AcnaOutcome {
        best,
        history,
        iterations: state.iteration,
        faults,
        unconverged_runs,
        termination,
        traces,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{matching_pennies, rock_paper_scissors_3};

    #[test]
    fn pso_step_examples() {
        let x = [0.3, -1.0, 2.0];
        let v = [1.0, 2.0, -3.0];
        let p = [5.0, 5.0, 5.0];
        let g = [-5.0, 0.0, 1.0];
        // No inertia, no attraction: v = 0 and x stays.
        let (x1, v1) = pso_step(&x, &v, &p, &g, 0.0f64, 0.0, 0.0, 0.7, 0.2);
        assert_eq!(v1, vec![0.0; 3]);
        assert_eq!(x1, x.to_vec());
        // Already at both bests with zero velocity.
        let (x1, _) = pso_step(&x, &[0.0; 3], &x, &x, 0.9, 2.0, 2.0, 0.5, 0.5);
        assert_eq!(x1, x.to_vec());
        // c1 l1 = 1, c2 = 0: jump onto the personal best.
        let (x1, _) = pso_step(&x, &[0.0; 3], &p, &g, 0.7, 2.0, 0.0, 0.5, 0.9);
        assert_eq!(x1, p.to_vec());
    }

    #[test]
    fn inertia_schedule() {
        let s = SwarmSettings::<f64> {
            max_iterations: 500,
            ..SwarmSettings::default()
        };
        assert!((s.inertia(0) - 0.9).abs() < 1e-15);
        assert!((s.inertia(250) - 0.65).abs() < 1e-15);
        assert!((s.inertia(500) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn single_particle_at_equilibrium_stops_after_one_iteration() {
        let g = rock_paper_scissors_3::<f64>();
        let settings = SwarmSettings {
            swarm_size: 1,
            ..SwarmSettings::default()
        };
        let out = run_acna_with(
            &g,
            &settings,
            &AnaSettings::default(),
            Some(vec![g.uniform_profile().into_inner()]),
            |_| {},
        )
        .unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.termination, Termination::GlobalTolerance);
        let best = out.best.unwrap();
        assert!(best.verdict);
        assert!(best.objective < 1e-24);
    }

    #[test]
    fn zero_budget_gives_no_candidate() {
        let g = matching_pennies::<f64>();
        let settings = SwarmSettings {
            max_iterations: 0,
            ..SwarmSettings::default()
        };
        let out = run_acna(&g, &settings, &AnaSettings::default()).unwrap();
        assert!(out.best.is_none());
        assert!(out.history.is_empty());
        assert_eq!(out.termination, Termination::MaxIterations);
    }

    #[test]
    fn matching_pennies_solved() {
        let g = matching_pennies::<f64>();
        let settings = SwarmSettings {
            seed: 3,
            ..SwarmSettings::default()
        };
        let out = run_acna(&g, &settings, &AnaSettings::default()).unwrap();
        let best = out.best.unwrap();
        assert!(best.verdict);
        assert!(best.worst_regret() <= 1e-6);
        for p in &best.profile {
            assert!((p - 0.5).abs() < 1e-4);
        }
    }

    #[test]
    fn rejects_bad_settings() {
        let g = matching_pennies::<f64>();
        let bad = SwarmSettings {
            swarm_size: 0,
            ..SwarmSettings::default()
        };
        assert!(run_acna(&g, &bad, &AnaSettings::default()).is_err());
        let bad = SwarmSettings {
            init_low: 1.0,
            init_high: 1.0,
            ..SwarmSettings::default()
        };
        assert!(run_acna(&g, &bad, &AnaSettings::default()).is_err());
        let wrong_count = run_acna_with(
            &g,
            &SwarmSettings::default(),
            &AnaSettings::default(),
            Some(vec![vec![0.5; 4]]),
            |_| {},
        );
        assert!(wrong_count.is_err());
    }
}
