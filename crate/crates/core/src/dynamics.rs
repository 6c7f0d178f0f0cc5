//! Time discretization of the adaptive-penalty neurodynamic flow
//!
//! ```text
//! ẋ ∈ -ξ(G(x)) ∇Q̃(x) - ζ (∂G(x) + ζ ∂H(x)),    ζ̇ = sign ε(x)
//! ```
//!
//! from an arbitrary start to a feasible critical point.
//!
//! Two fixed-step schemes are available. [`Integrator::ForwardEuler`] uses
//! the explicit entrywise subgradient selections. It chatters across the
//! kinks of `G` and `H` with amplitude `O(h ζ²)`, so the state never settles
//! on the constraint set. [`Integrator::ForwardBackward`] (the default) takes
//! the gated objective term explicitly and the penalty term implicitly
//! through its proximal map, which is the backward-Euler step of the
//! inclusion. Its realized velocity is
//! `-ξ ∇Q̃(x_k) - ζ (κ_{k+1} + ζ η_{k+1})` with `κ_{k+1} ∈ ∂G(x_{k+1})` and
//! `η_{k+1} ∈ ∂H(x_{k+1})`, so it is a selection of the same inclusion.

use crate::error::{Error, Result};
use crate::game::{GameTensor, RegretEvaluator};
use crate::penalty::{
    box_subgradient, box_violation, check_nu, equality_residual, equality_subgradient, gate,
    penalty_prox, zeta_rate, ConstraintGeometry,
};
use crate::scalar::{norm2, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Explicit Euler with the entrywise subgradient selections.
    ForwardEuler,
    /// Explicit objective step followed by the exact penalty prox.
    #[default]
    ForwardBackward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnaSettings<T> {
    pub step_size: T,
    pub max_steps: u64,
    /// Bound on `‖ẋ‖` for stationarity.
    pub stationarity_tol: T,
    /// Consecutive stationary and feasible steps before declaring convergence.
    pub stationarity_window: usize,
    /// `ε ≤ feasibility_tol` counts as feasible; `ζ` stops growing there.
    pub feasibility_tol: T,
    pub nu: T,
    /// Record every n-th step in the trace.
    pub trace_stride: usize,
    /// Explicit displacements longer than this are scaled down.
    pub max_step_norm: T,
    pub integrator: Integrator,
}

impl<T: Scalar> Default for AnaSettings<T> {
    fn default() -> Self {
        Self {
            step_size: T::lit(1e-3),
            max_steps: 2_000_000,
            stationarity_tol: T::lit(1e-6),
            stationarity_window: 10,
            feasibility_tol: T::lit(1e-10),
            nu: T::zero(),
            trace_stride: 100,
            max_step_norm: T::lit(0.1),
            integrator: Integrator::default(),
        }
    }
}

impl<T: Scalar> AnaSettings<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("step_size", self.step_size),
            ("stationarity_tol", self.stationarity_tol),
            ("feasibility_tol", self.feasibility_tol),
            ("max_step_norm", self.max_step_norm),
        ];
        for (name, v) in positive {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        if self.stationarity_window == 0 {
            return Err(Error::Config(
                "stationarity_window must be at least 1".into(),
            ));
        }
        if self.trace_stride == 0 {
            return Err(Error::Config("trace_stride must be at least 1".into()));
        }
        check_nu(self.nu)
    }
}

/// A point on the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct AnaState<T> {
    pub x: Vec<T>,
    pub zeta: T,
    pub time: T,
}

impl<T: Scalar> AnaState<T> {
    pub fn start(x0: Vec<T>) -> Self {
        Self {
            x: x0,
            zeta: T::zero(),
            time: T::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample<T> {
    pub time: T,
    pub x: Vec<T>,
    pub objective: T,
    pub box_violation: T,
    pub equality_violation: T,
    pub zeta: T,
    pub xdot_norm: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnaTrace<T> {
    pub samples: Vec<TraceSample<T>>,
    /// First time `ε ≤ feasibility_tol`.
    pub entry_time: Option<T>,
    pub stride: usize,
}

/// Result of [`run_to_critical`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnaOutcome<T> {
    pub critical_point: Vec<T>,
    pub trace: AnaTrace<T>,
    pub converged: bool,
    /// Final penalty weight `ζ`, constant after the last entry.
    pub theta: T,
    /// Subgradient selections realized by the last step.
    pub kappa: Vec<T>,
    pub eta: Vec<T>,
    pub steps: u64,
}

impl<T: Scalar> AnaOutcome<T> {
    /// `‖∇Q̃(x*) + θ(κ* + θη*)‖` at the returned point.
    pub fn stationarity_residual(&self, game: &GameTensor<T>) -> Result<T> {
        let grad = game.objective_gradient(&self.critical_point)?;
        let th = self.theta;
        let r: Vec<T> = grad
            .iter()
            .zip(self.kappa.iter().zip(&self.eta))
            .map(|(&g, (&k, &e))| g + th * (k + th * e))
            .collect();
        Ok(norm2(&r))
    }
}

/// Per-step view handed to [`AnaIntegrator::run_observed`].
#[derive(Debug)]
pub struct StepObservation<'a, T> {
    pub step: u64,
    pub previous: &'a AnaState<T>,
    pub current: &'a AnaState<T>,
    pub xdot_norm: T,
    /// Quantities at `current`.
    pub objective: T,
    pub box_violation: T,
    pub equality_violation: T,
}

/// Explicit right-hand side with the entrywise selections:
/// `ẋ = -ξ(G(x)) ∇Q̃(x) - ζ (κ + ζ η)`, `ζ̇ = sign ε(x)`.
pub fn rhs<T: Scalar>(
    game: &GameTensor<T>,
    geometry: &ConstraintGeometry,
    state: &AnaState<T>,
    nu: T,
) -> Result<(Vec<T>, T)> {
    game.check_profile(&state.x)?;
    check_finite(&state.x, 0, state.time)?;
    let grad = game.objective_gradient(&state.x)?;
    let g = box_violation(&state.x);
    let h = equality_residual(geometry, &state.x).1;
    let xi = gate(g, nu)?;
    let x_dot = explicit_velocity(&grad, xi, state.zeta, &state.x, geometry);
    Ok((x_dot, zeta_rate(g + h)))
}

fn explicit_velocity<T: Scalar>(
    grad: &[T],
    xi: T,
    zeta: T,
    x: &[T],
    geometry: &ConstraintGeometry,
) -> Vec<T> {
    let kappa = box_subgradient(x);
    let eta = equality_subgradient(geometry, x);
    grad.iter()
        .zip(kappa.iter().zip(&eta))
        .map(|(&g, (&k, &e))| -xi * g - zeta * (k + zeta * e))
        .collect()
}

fn check_finite<T: Scalar>(x: &[T], step: u64, time: T) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::IntegrationFault {
            step,
            time: time.to_f64_lossy(),
            reason: "non-finite state".into(),
            last_state: x.iter().map(|v| v.to_f64_lossy()).collect(),
        })
    }
}

/// One step of the configured scheme from `state`.
pub fn step<T: Scalar>(
    game: &GameTensor<T>,
    state: &AnaState<T>,
    settings: &AnaSettings<T>,
) -> Result<AnaState<T>> {
    let mut ana = AnaIntegrator::new(game, settings.clone())?;
    game.check_profile(&state.x)?;
    check_finite(&state.x, 0, state.time)?;
    ana.load(&state.x);
    let mut next = ana.advance(state, 0)?.0;
    next.time = state.time + settings.step_size;
    Ok(next)
}

/// Integrates from `x0` until a feasible stationary point or `max_steps`.
pub fn run_to_critical<T: Scalar>(
    game: &GameTensor<T>,
    x0: &[T],
    settings: &AnaSettings<T>,
) -> Result<AnaOutcome<T>> {
    AnaIntegrator::new(game, settings.clone())?.run(x0)
}

/// Integrator bound to one game; reuses its buffers across steps and runs.
pub struct AnaIntegrator<'g, T> {
    game: &'g GameTensor<T>,
    geometry: ConstraintGeometry,
    settings: AnaSettings<T>,
    eval: RegretEvaluator<T>,
    kappa: Vec<T>,
    eta: Vec<T>,
}

impl<'g, T: Scalar> AnaIntegrator<'g, T> {
    pub fn new(game: &'g GameTensor<T>, settings: AnaSettings<T>) -> Result<Self> {
        settings.validate()?;
        let m = game.total_strategies();
        Ok(Self {
            game,
            geometry: ConstraintGeometry::for_game(game),
            settings,
            eval: RegretEvaluator::new(game),
            kappa: vec![T::zero(); m],
            eta: vec![T::zero(); m],
        })
    }

    pub fn settings(&self) -> &AnaSettings<T> {
        &self.settings
    }

    fn load(&mut self, x: &[T]) {
        self.eval.evaluate(self.game, x, true);
    }

    fn zeta_increment(&self, eps: T) -> T {
        if eps <= self.settings.feasibility_tol {
            T::zero()
        } else {
            zeta_rate(eps)
        }
    }

    /// Advances `state`; `self.eval` must hold the evaluation at `state.x`.
    /// Returns the new state and `‖ẋ‖` of the step.
    fn advance(&mut self, state: &AnaState<T>, step: u64) -> Result<(AnaState<T>, T)> {
        let h = self.settings.step_size;
        let x = &state.x;
        let g = box_violation(x);
        let eq = equality_residual(&self.geometry, x).1;
        let xi = gate(g, self.settings.nu)?;
        let zeta = state.zeta;

        let next_x = match self.settings.integrator {
            Integrator::ForwardEuler => {
                let mut v = explicit_velocity(&self.eval.gradient, xi, zeta, x, &self.geometry);
                clip(&mut v, h, self.settings.max_step_norm);
                self.kappa = box_subgradient(x);
                self.eta = equality_subgradient(&self.geometry, x);
                x.iter()
                    .zip(&v)
                    .map(|(&a, &d)| a + h * d)
                    .collect::<Vec<T>>()
            }
            Integrator::ForwardBackward => {
                let mut v: Vec<T> = self.eval.gradient.iter().map(|&d| -xi * d).collect();
                clip(&mut v, h, self.settings.max_step_norm);
                let trial: Vec<T> = x.iter().zip(&v).map(|(&a, &d)| a + h * d).collect();
                let prox = penalty_prox(&self.geometry, &trial, h * zeta, h * zeta * zeta);
                self.kappa = prox.kappa;
                self.eta = prox.eta;
                prox.x
            }
        };

        let next_time = T::lit((step + 1) as f64) * h;
        check_finite(&next_x, step + 1, next_time).map_err(|e| match e {
            Error::IntegrationFault {
                step, time, reason, ..
            } => Error::IntegrationFault {
                step,
                time,
                reason,
                last_state: x.iter().map(|v| v.to_f64_lossy()).collect(),
            },
            other => other,
        })?;
        let xdot_norm = x
            .iter()
            .zip(&next_x)
            .map(|(&a, &b)| (b - a) * (b - a))
            .sum::<T>()
            .sqrt()
            / h;
        let next = AnaState {
            x: next_x,
            zeta: zeta + h * self.zeta_increment(g + eq),
            time: next_time,
        };
        Ok((next, xdot_norm))
    }

    pub fn run(&mut self, x0: &[T]) -> Result<AnaOutcome<T>> {
        self.run_observed(x0, |_| {})
    }

    /// Like [`run`](Self::run), calling `observer` after every step.
    pub fn run_observed<F>(&mut self, x0: &[T], mut observer: F) -> Result<AnaOutcome<T>>
    where
        F: FnMut(&StepObservation<'_, T>),
    {
        self.game.check_profile(x0)?;
        check_finite(x0, 0, T::zero())?;
        let tol = self.settings.feasibility_tol;
        let stride = self.settings.trace_stride as u64;

        let mut state = AnaState::start(x0.to_vec());
        self.load(&state.x);
        let mut g = box_violation(&state.x);
        let mut eq = equality_residual(&self.geometry, &state.x).1;
        let initial_speed = {
            let xi = gate(g, self.settings.nu)?;
            norm2(&explicit_velocity(
                &self.eval.gradient,
                xi,
                state.zeta,
                &state.x,
                &self.geometry,
            ))
        };

        let mut trace = AnaTrace {
            samples: Vec::new(),
            entry_time: (g + eq <= tol).then_some(T::zero()),
            stride: self.settings.trace_stride,
        };
        trace
            .samples
            .push(self.sample(&state, g, eq, initial_speed));

        let mut streak = 0usize;
        let mut converged = false;
        let mut steps = 0u64;
        while steps < self.settings.max_steps {
            let (next, speed) = self.advance(&state, steps)?;
            steps += 1;
            self.load(&next.x);
            g = box_violation(&next.x);
            eq = equality_residual(&self.geometry, &next.x).1;
            let feasible = g + eq <= tol;
            if feasible && trace.entry_time.is_none() {
                trace.entry_time = Some(next.time);
            }
            if feasible && speed <= self.settings.stationarity_tol {
                streak += 1;
            } else {
                streak = 0;
            }
            converged = streak >= self.settings.stationarity_window;

            observer(&StepObservation {
                step: steps,
                previous: &state,
                current: &next,
                xdot_norm: speed,
                objective: self.eval.objective,
                box_violation: g,
                equality_violation: eq,
            });

            let last = converged || steps == self.settings.max_steps;
            if steps.is_multiple_of(stride) || last {
                trace.samples.push(self.sample(&next, g, eq, speed));
            }
            state = next;
            if converged {
                break;
            }
        }

        Ok(AnaOutcome {
            critical_point: state.x,
            trace,
            converged,
            theta: state.zeta,
            kappa: self.kappa.clone(),
            eta: self.eta.clone(),
            steps,
        })
    }

    fn sample(&self, state: &AnaState<T>, g: T, eq: T, speed: T) -> TraceSample<T> {
        TraceSample {
            time: state.time,
            x: state.x.clone(),
            objective: self.eval.objective,
            box_violation: g,
            equality_violation: eq,
            zeta: state.zeta,
            xdot_norm: speed,
        }
    }
}

fn clip<T: Scalar>(v: &mut [T], h: T, max_norm: T) {
    let len = norm2(v) * h;
    if len > max_norm {
        let s = max_norm / len;
        v.iter_mut().for_each(|d| *d = *d * s);
    }
}
