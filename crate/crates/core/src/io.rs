//! Game and profile files, result documents and trace tables.
//!
//! Game file (TOML):
//!
//! ```toml
//! format_version = 1
//! players = 2
//! strategies = [2, 2]
//! labels = [["H", "T"], ["H", "T"]]   # optional
//! payoffs = [[1, -1, -1, 1], [-1, 1, 1, -1]]
//! ```
//!
//! Each payoff list is flattened with player 1's strategy outermost and
//! player N's innermost. Profile files hold `strategies = [[..], [..]]`,
//! one probability list per player.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;
use toml::Value;

use crate::dynamics::AnaTrace;
use crate::error::Error;
use crate::game::GameTensor;
use crate::oracle::EquilibriumCertificate;
use crate::Game;

pub const FORMAT_VERSION: i64 = 1;

/// Significant digits of every float in a trace table.
pub const TRACE_DIGITS: usize = 17;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Game(#[from] Error),
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> IoError {
    IoError::Field {
        field: field.into(),
        message: message.into(),
    }
}

fn read(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })
}

fn parse_table(text: &str) -> Result<toml::Table, IoError> {
    text.parse::<toml::Table>()
        .map_err(|e| IoError::Syntax(e.to_string()))
}

fn required<'a>(table: &'a toml::Table, field: &str) -> Result<&'a Value, IoError> {
    table.get(field).ok_or_else(|| field_err(field, "missing"))
}

fn as_count(v: &Value, field: &str) -> Result<usize, IoError> {
    match v.as_integer() {
        Some(n) if n > 0 => Ok(n as usize),
        _ => Err(field_err(
            field,
            format!("expected a positive integer, got {v}"),
        )),
    }
}

fn as_real(v: &Value, field: &str) -> Result<f64, IoError> {
    let x = match v {
        Value::Integer(n) => *n as f64,
        Value::Float(f) => *f,
        other => return Err(field_err(field, format!("expected a number, got {other}"))),
    };
    if !x.is_finite() {
        return Err(field_err(field, format!("{x} is not finite")));
    }
    Ok(x)
}

fn as_array<'a>(v: &'a Value, field: &str) -> Result<&'a Vec<Value>, IoError> {
    v.as_array()
        .ok_or_else(|| field_err(field, "expected an array"))
}

/// Parses and validates a game document.
pub fn parse_game(text: &str) -> Result<Game, IoError> {
    let table = parse_table(text)?;
    let version = required(&table, "format_version")?;
    if version.as_integer() != Some(FORMAT_VERSION) {
        return Err(field_err(
            "format_version",
            format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let players = as_count(required(&table, "players")?, "players")?;
    let strategies = as_array(required(&table, "strategies")?, "strategies")?;
    if strategies.len() != players {
        return Err(field_err(
            "strategies",
            format!("{} entries for {players} players", strategies.len()),
        ));
    }
    let counts = strategies
        .iter()
        .enumerate()
        .map(|(i, v)| as_count(v, &format!("strategies[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let profiles = counts
        .iter()
        .try_fold(1usize, |acc, &m| acc.checked_mul(m))
        .ok_or_else(|| field_err("strategies", "profile count overflows"))?;

    let tables = as_array(required(&table, "payoffs")?, "payoffs")?;
    if tables.len() != players {
        return Err(field_err(
            "payoffs",
            format!("{} payoff lists for {players} players", tables.len()),
        ));
    }
    let mut payoffs = Vec::with_capacity(players);
    for (i, list) in tables.iter().enumerate() {
        let name = format!("payoffs[{i}]");
        let list = as_array(list, &name)?;
        if list.len() != profiles {
            return Err(field_err(
                name,
                format!("has {} entries, expected {profiles}", list.len()),
            ));
        }
        payoffs.push(
            list.iter()
                .enumerate()
                .map(|(k, v)| as_real(v, &format!("payoffs[{i}][{k}]")))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }

    let game = GameTensor::new(counts, payoffs)?;
    match table.get("labels") {
        None => Ok(game),
        Some(v) => {
            let labels = as_array(v, "labels")?
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    as_array(l, &format!("labels[{i}]"))?
                        .iter()
                        .enumerate()
                        .map(|(j, s)| {
                            s.as_str().map(str::to_string).ok_or_else(|| {
                                field_err(format!("labels[{i}][{j}]"), "expected a string")
                            })
                        })
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()?;
            game.with_labels(labels)
                .map_err(|e| field_err("labels", e.to_string()))
        }
    }
}

pub fn load_game(path: &Path) -> Result<Game, IoError> {
    parse_game(&read(path)?)
}

/// Serializes a game in the format [`parse_game`] reads.
pub fn game_to_toml(game: &Game) -> String {
    let mut table = toml::Table::new();
    table.insert("format_version".into(), Value::Integer(FORMAT_VERSION));
    table.insert("players".into(), Value::Integer(game.num_players() as i64));
    table.insert(
        "strategies".into(),
        Value::Array(
            game.strategy_counts()
                .iter()
                .map(|&m| Value::Integer(m as i64))
                .collect(),
        ),
    );
    if let Some(labels) = game.labels() {
        table.insert(
            "labels".into(),
            Value::Array(
                labels
                    .iter()
                    .map(|l| Value::Array(l.iter().cloned().map(Value::String).collect()))
                    .collect(),
            ),
        );
    }
    table.insert(
        "payoffs".into(),
        Value::Array(
            (0..game.num_players())
                .map(|i| {
                    Value::Array(
                        game.payoff_table(i)
                            .iter()
                            .map(|&v| Value::Float(v))
                            .collect(),
                    )
                })
                .collect(),
        ),
    );
    toml::to_string(&table).expect("plain tables serialize")
}

/// Parses a profile document against `game`'s block sizes.
pub fn parse_profile(text: &str, game: &Game) -> Result<Vec<f64>, IoError> {
    let table = parse_table(text)?;
    let blocks = as_array(required(&table, "strategies")?, "strategies")?;
    if blocks.len() != game.num_players() {
        return Err(field_err(
            "strategies",
            format!("{} blocks for {} players", blocks.len(), game.num_players()),
        ));
    }
    let mut x = Vec::with_capacity(game.total_strategies());
    for (i, block) in blocks.iter().enumerate() {
        let name = format!("strategies[{i}]");
        let block = as_array(block, &name)?;
        let m = game.strategy_counts()[i];
        if block.len() != m {
            return Err(field_err(
                name,
                format!("has {} entries, expected {m}", block.len()),
            ));
        }
        for (k, v) in block.iter().enumerate() {
            x.push(as_real(v, &format!("strategies[{i}][{k}]"))?);
        }
    }
    Ok(x)
}

pub fn load_profile(path: &Path, game: &Game) -> Result<Vec<f64>, IoError> {
    parse_profile(&read(path)?, game)
}

pub fn profile_to_toml(game: &Game, x: &[f64]) -> String {
    let mut table = toml::Table::new();
    table.insert(
        "strategies".into(),
        Value::Array(
            split_blocks(game, x)
                .into_iter()
                .map(|b| Value::Array(b.into_iter().map(Value::Float).collect()))
                .collect(),
        ),
    );
    toml::to_string(&table).expect("plain tables serialize")
}

pub fn split_blocks(game: &Game, x: &[f64]) -> Vec<Vec<f64>> {
    (0..game.num_players())
        .map(|i| x[game.block(i)].to_vec())
        .collect()
}

/// Certificate section of every result document.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateDoc {
    pub verdict: bool,
    pub objective: f64,
    pub max_regret: Vec<f64>,
    pub box_violation: f64,
    pub equality_violation: f64,
    pub tol_regret: f64,
    pub tol_feas: f64,
    pub strategies: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<Vec<String>>>,
}

impl CertificateDoc {
    pub fn new(game: &Game, cert: &EquilibriumCertificate<f64>) -> Self {
        Self {
            verdict: cert.verdict,
            objective: cert.objective,
            max_regret: cert.max_regret.clone(),
            box_violation: cert.box_violation,
            equality_violation: cert.equality_violation,
            tol_regret: cert.tol_regret,
            tol_feas: cert.tol_feas,
            strategies: split_blocks(game, &cert.profile),
            labels: game.labels().map(<[_]>::to_vec),
        }
    }
}

/// Output of `solve`.
#[derive(Debug, Clone, Serialize)]
pub struct SolveDoc {
    pub format_version: i64,
    pub command: &'static str,
    pub seed: u64,
    pub verdict: bool,
    pub termination: &'static str,
    pub iterations: usize,
    pub faults: usize,
    pub unconverged_runs: usize,
    pub certificate: Option<CertificateDoc>,
    /// Group-best objective per iteration; `null` before any candidate.
    pub history: Vec<Option<f64>>,
}

pub fn to_json<S: Serialize>(doc: &S) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialize");
    s.push('\n');
    s
}

fn fmt_float(out: &mut String, v: f64) {
    write!(out, "{:.*e}", TRACE_DIGITS - 1, v).unwrap();
}

/// Writes a trace as CSV: `time,x_1..x_m,Q,G,H,zeta,dxnorm`, preceded by one
/// `#` comment line recording the stride and precision.
pub fn write_trace_csv<W: Write>(mut w: W, trace: &AnaTrace<f64>) -> io::Result<()> {
    let dim = trace.samples.first().map_or(0, |s| s.x.len());
    let mut out = String::new();
    writeln!(
        out,
        "# stride={} digits={} entry_time={}",
        trace.stride,
        TRACE_DIGITS,
        trace.entry_time.map_or("none".to_string(), |t| format!(
            "{:.*e}",
            TRACE_DIGITS - 1,
            t
        ))
    )
    .unwrap();
    out.push_str("time");
    for k in 1..=dim {
        write!(out, ",x_{k}").unwrap();
    }
    out.push_str(",Q,G,H,zeta,dxnorm\n");
    for s in &trace.samples {
        fmt_float(&mut out, s.time);
        for &v in s.x.iter().chain([
            &s.objective,
            &s.box_violation,
            &s.equality_violation,
            &s.zeta,
            &s.xdot_norm,
        ]) {
            out.push(',');
            fmt_float(&mut out, v);
        }
        out.push('\n');
    }
    w.write_all(out.as_bytes())
}

/// One parsed trace row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub time: f64,
    pub x: Vec<f64>,
    pub objective: f64,
    pub box_violation: f64,
    pub equality_violation: f64,
    pub zeta: f64,
    pub xdot_norm: f64,
}

/// Reads a table written by [`write_trace_csv`].
pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>, IoError> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| IoError::Syntax("empty trace".into()))?;
    let cols = header.split(',').count();
    if cols < 7 {
        return Err(IoError::Syntax(format!("trace header has {cols} columns")));
    }
    let dim = cols - 6;
    lines
        .enumerate()
        .map(|(r, line)| {
            let vals = line
                .split(',')
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| IoError::Syntax(format!("row {r}: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if vals.len() != cols {
                return Err(IoError::Syntax(format!(
                    "row {r} has {} columns",
                    vals.len()
                )));
            }
            Ok(TraceRow {
                time: vals[0],
                x: vals[1..=dim].to_vec(),
                objective: vals[dim + 1],
                box_violation: vals[dim + 2],
                equality_violation: vals[dim + 3],
                zeta: vals[dim + 4],
                xdot_norm: vals[dim + 5],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::rock_paper_scissors_3;

    const MINIMAL: &str = "format_version = 1\nplayers = 1\nstrategies = [1]\npayoffs = [[0]]\n";

    #[test]
    fn minimal_game() {
        let g = parse_game(MINIMAL).unwrap();
        assert_eq!(g.num_players(), 1);
        assert_eq!(g.payoff(0, &[0]), 0.0);
    }

    #[test]
    fn rps_round_trip() {
        let g: Game = rock_paper_scissors_3();
        let text = game_to_toml(&g);
        assert_eq!(parse_game(&text).unwrap(), g);
    }

    #[test]
    fn length_mismatch_names_field() {
        let mut payoff = vec!["0"; 26].join(", ");
        payoff = format!("[{payoff}]");
        let full = format!("[{}]", vec!["0"; 27].join(", "));
        let text = format!(
            "format_version = 1\nplayers = 3\nstrategies = [3, 3, 3]\npayoffs = [{payoff}, {full}, {full}]\n"
        );
        let err = parse_game(&text).unwrap_err();
        match err {
            IoError::Field { field, message } => {
                assert_eq!(field, "payoffs[0]");
                assert!(message.contains("26"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn non_finite_payoff_rejected() {
        let text = "format_version = 1\nplayers = 1\nstrategies = [2]\npayoffs = [[1.0, nan]]\n";
        match parse_game(text).unwrap_err() {
            IoError::Field { field, .. } => assert_eq!(field, "payoffs[0][1]"),
            other => panic!("unexpected {other}"),
        }
        let text = "format_version = 1\nplayers = 1\nstrategies = [2]\npayoffs = [[1.0, inf]]\n";
        assert!(parse_game(text).is_err());
    }

    #[test]
    fn malformed_documents() {
        assert!(matches!(parse_game("players = ["), Err(IoError::Syntax(_))));
        assert!(matches!(
            parse_game("format_version = 2\nplayers = 1\nstrategies = [1]\npayoffs = [[0]]"),
            Err(IoError::Field { .. })
        ));
        assert!(matches!(
            parse_game("format_version = 1\nplayers = 2\nstrategies = [1]\npayoffs = [[0]]"),
            Err(IoError::Field { .. })
        ));
        assert!(matches!(
            parse_game("format_version = 1\nplayers = 1\nstrategies = [0]\npayoffs = [[]]"),
            Err(IoError::Field { .. })
        ));
        assert!(matches!(
            parse_game("format_version = 1\nplayers = 1\nstrategies = [1]\npayoffs = [[\"a\"]]"),
            Err(IoError::Field { .. })
        ));
    }

    #[test]
    fn profile_parsing() {
        let g: Game = rock_paper_scissors_3();
        let x = g.uniform_profile().into_inner();
        let text = profile_to_toml(&g, &x);
        assert_eq!(parse_profile(&text, &g).unwrap(), x);
        assert!(parse_profile("strategies = [[1, 0, 0], [1, 0, 0]]", &g).is_err());
        assert!(parse_profile("strategies = [[1, 0], [1, 0, 0], [1, 0, 0]]", &g).is_err());
    }
}
