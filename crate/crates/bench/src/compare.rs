//! Side-by-side comparison of two summary CSVs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::error::{BenchError, Result};
use crate::runner::SummaryRow;

#[derive(Debug, Clone, PartialEq)]
pub struct Side {
    pub label: String,
    pub mean: f64,
    /// Sample standard deviation across seeds.
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub a: Side,
    pub b: Side,
    /// `mean(a) - mean(b)`.
    pub gap: f64,
    /// `std(a) - std(b)`.
    pub std_gap: f64,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in [&self.a, &self.b] {
            writeln!(f, "{:<12} mean {:>12.6}  std {:>10.6}  seeds {}", s.label, s.mean, s.std, s.n)?;
        }
        writeln!(f, "gap (A - B)      {:.6}", self.gap)?;
        writeln!(f, "std gap (A - B)  {:.6}", self.std_gap)?;
        write!(f, "A wins {}, losses {}, ties {}", self.wins, self.losses, self.ties)
    }
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| BenchError::Runtime(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<SummaryRow>, _>>()
        .map_err(|e| BenchError::Config(format!("{}: not a summary CSV: {e}", path.display())))
}

fn side(rows: &[SummaryRow], what: &str) -> Result<(Side, BTreeMap<u64, f64>)> {
    if rows.is_empty() {
        return Err(BenchError::Config(format!("{what}: no rows")));
    }
    let label = rows[0].algorithm.clone();
    if rows.iter().any(|r| r.algorithm != label) {
        return Err(BenchError::Config(format!("{what}: rows from more than one algorithm")));
    }
    let mut by_seed = BTreeMap::new();
    for r in rows {
        if by_seed.insert(r.seed, r.final_return).is_some() {
            return Err(BenchError::Config(format!("{what}: seed {} appears twice", r.seed)));
        }
    }
    let n = rows.len();
    let mean = rows.iter().map(|r| r.final_return).sum::<f64>() / n as f64;
    let std = if n > 1 {
        (rows.iter().map(|r| (r.final_return - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok((Side { label, mean, std, n }, by_seed))
}

/// Compare per-seed final returns; both sides must cover the same seeds.
pub fn compare(a: &[SummaryRow], b: &[SummaryRow]) -> Result<Comparison> {
    let (sa, ma) = side(a, "first summary")?;
    let (sb, mb) = side(b, "second summary")?;
    let only_a: Vec<u64> = ma.keys().filter(|s| !mb.contains_key(s)).copied().collect();
    let only_b: Vec<u64> = mb.keys().filter(|s| !ma.contains_key(s)).copied().collect();
    if !only_a.is_empty() || !only_b.is_empty() {
        return Err(BenchError::Config(format!(
            "seed sets differ: only in first {only_a:?}, only in second {only_b:?}"
        )));
    }
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (seed, ra) in &ma {
        let rb = mb[seed];
        if ra > &rb {
            wins += 1;
        } else if ra < &rb {
            losses += 1;
        } else {
            ties += 1;
        }
    }
    Ok(Comparison { gap: sa.mean - sb.mean, std_gap: sa.std - sb.std, a: sa, b: sb, wins, losses, ties })
}

pub fn compare_files(a: &Path, b: &Path) -> Result<Comparison> {
    compare(&read_summary(a)?, &read_summary(b)?)
}
