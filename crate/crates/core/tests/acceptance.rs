//! Acceptance criteria 1-8. Runs as a plain binary and prints one line per
//! criterion; exits non-zero if any criterion fails.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use acna::cli::{solve_command, Cli, Command, SolveArgs};
use acna::dynamics::AnaIntegrator;
use acna::oracle::{certify_default, two_player_support_enumeration};
use acna::penalty::{box_violation, ConstraintGeometry};
use acna::swarm::run_acna;
use acna::{io, AnaSettings, Game, SwarmSettings};
use clap::Parser;
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative slack for distances that must not increase.
const ROUNDING_SLACK: f64 = 1e-12;

type Check<'a> = Box<dyn Fn() -> Verdict + 'a>;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn solve_args(extra: &[&str]) -> SolveArgs {
    let mut argv = vec!["acna", "solve"];
    argv.extend_from_slice(extra);
    match Cli::try_parse_from(argv)
        .expect("valid command line")
        .command
    {
        Command::Solve(a) => a,
        _ => unreachable!(),
    }
}

fn criterion_1() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let game = rps_path();
    let mut good = 0;
    let mut worst_q = 0.0f64;
    let mut worst_dev = 0.0f64;
    for seed in 1..=20u64 {
        let out = dir.path().join(format!("seed{seed}.json"));
        let args = solve_args(&[
            "--game",
            game.to_str().unwrap(),
            "--seed",
            &seed.to_string(),
            "--out",
            out.to_str().unwrap(),
        ]);
        let code = solve_command(&args, &mut std::io::sink()).unwrap();
        let doc: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        let cert = &doc["certificate"];
        if code != 0 || cert.is_null() {
            continue;
        }
        let q = cert["objective"].as_f64().unwrap();
        let dev = cert["strategies"]
            .as_array()
            .unwrap()
            .iter()
            .flat_map(|b| b.as_array().unwrap().iter())
            .map(|v| (v.as_f64().unwrap() - 1.0 / 3.0).abs())
            .fold(0.0, f64::max);
        worst_q = worst_q.max(q);
        worst_dev = worst_dev.max(dev);
        if dev <= 1e-3 && q <= 1e-10 {
            good += 1;
        }
    }
    verdict(
        good >= 19,
        format!("{good}/20 seeds within 1e-3 of 1/3 with Q <= 1e-10 (max dev {worst_dev:.2e}, max Q {worst_q:.2e})"),
    )
}

/// Observations of one flow collected for criteria 2-5.
struct FlowRecord {
    entered: bool,
    converged: bool,
    max_post_entry_violation: f64,
    sup_norm_excess: f64,
    max_distance_increase: f64,
    outside_steps: usize,
    final_window_speed: f64,
    max_post_entry_ascent: f64,
    stationarity_residual: f64,
}

fn observe_flow(game: &Game, settings: &AnaSettings, x0: &[f64]) -> FlowRecord {
    let geometry = ConstraintGeometry::for_game(game);
    let center: Vec<f64> = geometry.uniform_point();
    let tol = settings.feasibility_tol;
    let window = settings.stationarity_window;
    let x0_norm = norm_inf(x0);

    let mut entered = false;
    let mut max_post_entry_violation = 0.0f64;
    let mut sup_norm = x0_norm;
    let mut max_distance_increase = f64::NEG_INFINITY;
    let mut outside_steps = 0;
    let mut max_post_entry_ascent = f64::NEG_INFINITY;
    let mut last_objective: Option<f64> = None;
    let mut speeds = std::collections::VecDeque::with_capacity(window);

    let mut integrator = AnaIntegrator::new(game, settings.clone()).unwrap();
    let outcome = integrator
        .run_observed(x0, |obs| {
            let x_prev = &obs.previous.x;
            let x = &obs.current.x;
            sup_norm = sup_norm.max(norm_inf(x));
            if box_violation(x_prev) > 1.0 {
                outside_steps += 1;
                let before = dist(x_prev, &center);
                let growth = dist(x, &center) - before - ROUNDING_SLACK * (1.0 + before);
                max_distance_increase = max_distance_increase.max(growth);
            }
            let eps = obs.box_violation + obs.equality_violation;
            if entered {
                max_post_entry_violation = max_post_entry_violation.max(eps);
                if let Some(q) = last_objective {
                    max_post_entry_ascent = max_post_entry_ascent.max(obs.objective - q);
                }
            }
            if !entered && eps <= tol {
                entered = true;
            }
            if entered {
                last_objective = Some(obs.objective);
            }
            if speeds.len() == window {
                speeds.pop_front();
            }
            speeds.push_back(obs.xdot_norm);
        })
        .unwrap();

    FlowRecord {
        entered: outcome.trace.entry_time.is_some() && entered,
        converged: outcome.converged,
        max_post_entry_violation,
        sup_norm_excess: sup_norm - x0_norm,
        max_distance_increase,
        outside_steps,
        final_window_speed: speeds.iter().copied().fold(0.0, f64::max),
        max_post_entry_ascent,
        stationarity_residual: outcome.stationarity_residual(game).unwrap(),
    }
}

fn flow_records() -> Vec<FlowRecord> {
    let game = io::load_game(&rps_path()).unwrap();
    let settings = AnaSettings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    (0..50)
        .map(|_| {
            let x0 = random_point(&mut rng, game.total_strategies(), -10.0, 10.0);
            observe_flow(&game, &settings, &x0)
        })
        .collect()
}

fn criterion_2(records: &[FlowRecord]) -> Verdict {
    let entered = records.iter().filter(|r| r.entered).count();
    let worst = records
        .iter()
        .map(|r| r.max_post_entry_violation)
        .fold(0.0, f64::max);
    verdict(
        entered == records.len() && worst <= 1e-8,
        format!(
            "{entered}/{} runs entered the feasible set, max post-entry G+H {worst:.2e}",
            records.len()
        ),
    )
}

fn criterion_3(records: &[FlowRecord]) -> Verdict {
    let excess = records
        .iter()
        .map(|r| r.sup_norm_excess)
        .fold(f64::NEG_INFINITY, f64::max);
    let steps: usize = records.iter().map(|r| r.outside_steps).sum();
    let growth = records
        .iter()
        .map(|r| r.max_distance_increase)
        .fold(f64::NEG_INFINITY, f64::max);
    verdict(
        excess <= 1.0 && growth <= 0.0 && steps > 0,
        format!(
            "max sup-norm excess {excess:.3e}; {steps} steps with G > 1, max distance growth beyond rounding {growth:.3e}"
        ),
    )
}

fn criterion_4(records: &[FlowRecord]) -> Verdict {
    let converged: Vec<_> = records.iter().filter(|r| r.converged).collect();
    let speed = converged
        .iter()
        .map(|r| r.final_window_speed)
        .fold(0.0, f64::max);
    let ascent = records
        .iter()
        .map(|r| r.max_post_entry_ascent)
        .fold(f64::NEG_INFINITY, f64::max);
    verdict(
        !converged.is_empty() && speed <= 1e-6 && ascent <= 1e-9,
        format!(
            "{} converged runs, max final-window speed {speed:.2e}, max post-entry objective increase {ascent:.2e}",
            converged.len()
        ),
    )
}

fn criterion_5(records: &[FlowRecord]) -> Verdict {
    let converged: Vec<_> = records.iter().filter(|r| r.converged).collect();
    let worst = converged
        .iter()
        .map(|r| r.stationarity_residual)
        .fold(0.0, f64::max);
    verdict(
        !converged.is_empty() && worst <= 1e-4,
        format!(
            "max stationarity residual {worst:.2e} over {} critical points",
            converged.len()
        ),
    )
}

fn gradient_error(game: &Game, x: &[f64]) -> f64 {
    let g = game.objective_gradient(x).unwrap();
    let fd = finite_difference_gradient(game, x, 1e-5);
    let err = g
        .iter()
        .zip(&fd)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    err / norm_inf(&g).max(1.0)
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rps = io::load_game(&rps_path()).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = random_point(&mut rng, rps.total_strategies(), -0.5, 1.5);
        worst = worst.max(gradient_error(&rps, &x));
    }
    let mut worst_random = 0.0f64;
    for _ in 0..5 {
        let game = random_game(&mut rng, &[2, 2, 2]);
        for _ in 0..20 {
            let x = random_point(&mut rng, game.total_strategies(), -0.5, 1.5);
            worst_random = worst_random.max(gradient_error(&game, &x));
        }
    }
    verdict(
        worst <= 1e-6 && worst_random <= 1e-6,
        format!("max relative error {worst:.2e} (rps, 100 points), {worst_random:.2e} (5 random 2x2x2 games)"),
    )
}

fn criterion_7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut oracle_ne = 0;
    let mut oracle_bad = 0;
    let mut solved = 0;
    let mut unmatched = 0;
    let mut worst_oracle_q = 0.0f64;
    let mut worst_match = 0.0f64;
    for k in 0..20u64 {
        let counts = [rng.gen_range(2..=3), rng.gen_range(2..=3)];
        let game = random_game(&mut rng, &counts);
        let equilibria = two_player_support_enumeration(&game).unwrap().profiles();
        for ne in &equilibria {
            let c = certify_default(&game, ne).unwrap();
            oracle_ne += 1;
            worst_oracle_q = worst_oracle_q.max(c.objective);
            if !(c.verdict && c.objective <= 1e-12) {
                oracle_bad += 1;
            }
        }
        let settings = SwarmSettings {
            seed: k,
            max_iterations: 50,
            ..SwarmSettings::default()
        };
        let outcome = run_acna(&game, &settings, &AnaSettings::default()).unwrap();
        if let Some(best) = outcome.best.filter(|b| b.objective <= 1e-12) {
            solved += 1;
            let d = equilibria
                .iter()
                .map(|ne| {
                    ne.iter()
                        .zip(&best.profile)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(f64::INFINITY, f64::min);
            worst_match = worst_match.max(d);
            if d > 1e-4 {
                unmatched += 1;
            }
        }
    }
    verdict(
        oracle_ne > 0 && oracle_bad == 0 && unmatched == 0,
        format!(
            "{oracle_ne} oracle equilibria certified (max Q {worst_oracle_q:.1e}); {solved}/20 swarm outputs with Q <= 1e-12, max distance to an oracle NE {worst_match:.1e}"
        ),
    )
}

fn criterion_8() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let game = rps_path();
    let run = |tag: &str| {
        let out = dir.path().join(format!("{tag}.json"));
        let traces = dir.path().join(format!("{tag}-traces"));
        let args = solve_args(&[
            "--game",
            game.to_str().unwrap(),
            "--seed",
            "42",
            "--out",
            out.to_str().unwrap(),
            "--trace-dir",
            traces.to_str().unwrap(),
        ]);
        solve_command(&args, &mut std::io::sink()).unwrap();
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&traces)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().into_string().unwrap(),
                    fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        (fs::read(out).unwrap(), files)
    };
    let (result_a, traces_a) = run("a");
    let (result_b, traces_b) = run("b");
    verdict(
        !traces_a.is_empty() && result_a == result_b && traces_a == traces_b,
        format!(
            "result documents identical: {}, {} trace files identical: {}",
            result_a == result_b,
            traces_a.len(),
            traces_a == traces_b
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let records = flow_records();
    let criteria: Vec<(&str, Check)> = vec![
        ("1 rps reproduction", Box::new(criterion_1)),
        (
            "2 finite-time feasibility",
            Box::new(|| criterion_2(&records)),
        ),
        ("3 boundedness", Box::new(|| criterion_3(&records))),
        (
            "4 vanishing derivative and descent",
            Box::new(|| criterion_4(&records)),
        ),
        (
            "5 stationarity inclusion",
            Box::new(|| criterion_5(&records)),
        ),
        ("6 gradient oracle", Box::new(criterion_6)),
        ("7 minima are equilibria", Box::new(criterion_7)),
        ("8 determinism", Box::new(criterion_8)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let t = Instant::now();
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {name}: {} ({}) [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {}/{} passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
