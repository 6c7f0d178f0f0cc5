#![allow(dead_code)]

use std::path::PathBuf;

use acna::Game;
use rand::Rng;

pub fn games_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("games")
}

pub fn rps_path() -> PathBuf {
    games_dir().join("rps3.toml")
}

pub fn pennies_path() -> PathBuf {
    games_dir().join("matching_pennies.toml")
}

/// Game with payoffs drawn uniformly from `[-1, 1]`.
pub fn random_game<R: Rng>(rng: &mut R, counts: &[usize]) -> Game {
    let profiles: usize = counts.iter().product();
    let payoffs = (0..counts.len())
        .map(|_| (0..profiles).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect();
    Game::new(counts.to_vec(), payoffs).unwrap()
}

pub fn random_point<R: Rng>(rng: &mut R, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(lo..=hi)).collect()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, a| m.max(a.abs()))
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Central differences of the objective with step `h`.
pub fn finite_difference_gradient(game: &Game, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|k| {
            y[k] = x[k] + h;
            let up = game.objective(&y).unwrap();
            y[k] = x[k] - h;
            let down = game.objective(&y).unwrap();
            y[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}
