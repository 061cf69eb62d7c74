use std::fmt;
use std::path::Path;

use super::run::Summary;
use crate::error::{Error, Result};
use crate::fmt::sig6;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Value(f64),
    /// Diverged, rejected or failed; the reason is kept for the footnotes.
    Dash(String),
    Missing,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Value(v) => f.write_str(&sig6(*v)),
            Cell::Dash(_) => f.write_str("-"),
            Cell::Missing => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub system: String,
    pub seed: u64,
    pub cells: Vec<Cell>,
}

/// Average sum MSE per (system, seed) row and agent column.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub agents: Vec<String>,
    pub rows: Vec<TableRow>,
}

/// Merges one or more result sets. All must share the evaluation protocol.
pub fn compare_table(results: &[Summary]) -> Result<ComparisonTable> {
    let first = results
        .first()
        .ok_or_else(|| Error::validation("no results to tabulate"))?;
    for r in &results[1..] {
        if r.eval != first.eval || r.reward != first.reward {
            return Err(Error::validation(format!(
                "results {:?} and {:?} use different evaluation protocols",
                first.name, r.name
            )));
        }
    }
    let mut agents: Vec<String> = Vec::new();
    let mut keys: Vec<(String, u64)> = Vec::new();
    for rec in results.iter().flat_map(|r| &r.results) {
        if !agents.contains(&rec.agent) {
            agents.push(rec.agent.clone());
        }
        let key = (rec.system.clone(), rec.seed);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut rows: Vec<TableRow> = keys
        .into_iter()
        .map(|(system, seed)| TableRow {
            system,
            seed,
            cells: vec![Cell::Missing; agents.len()],
        })
        .collect();
    for rec in results.iter().flat_map(|r| &r.results) {
        let row = rows
            .iter_mut()
            .find(|r| r.system == rec.system && r.seed == rec.seed)
            .expect("row for every key");
        let col = agents.iter().position(|a| *a == rec.agent).expect("column for every agent");
        if row.cells[col] != Cell::Missing {
            return Err(Error::validation(format!(
                "agent {:?} appears twice for system {:?}, seed {}",
                rec.agent, rec.system, rec.seed
            )));
        }
        row.cells[col] = match (rec.converged(), rec.avg_sum_mse) {
            (true, Some(v)) => Cell::Value(v),
            _ => Cell::Dash(rec.note.clone().unwrap_or_else(|| "no result".into())),
        };
    }
    Ok(ComparisonTable { agents, rows })
}

impl ComparisonTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["system".to_string(), "seed".to_string()];
        header.extend(self.agents.iter().cloned());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.system.clone(), r.seed.to_string()];
            rec.extend(r.cells.iter().map(|c| c.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reasons behind every dash, as `(system, seed, agent, reason)`.
    pub fn footnotes(&self) -> Vec<(String, u64, String, String)> {
        let mut out = Vec::new();
        for r in &self.rows {
            for (agent, c) in self.agents.iter().zip(&r.cells) {
                if let Cell::Dash(reason) = c {
                    out.push((r.system.clone(), r.seed, agent.clone(), reason.clone()));
                }
            }
        }
        out
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut grid = vec![{
            let mut h = vec!["system".to_string(), "seed".to_string()];
            h.extend(self.agents.iter().cloned());
            h
        }];
        for r in &self.rows {
            let mut line = vec![r.system.clone(), r.seed.to_string()];
            line.extend(r.cells.iter().map(|c| c.to_string()));
            grid.push(line);
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|c| grid.iter().map(|row| row[c].len()).max().unwrap_or(0))
            .collect();
        for row in &grid {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (s, w))| if i < 2 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            writeln!(f, "{}", cells.join("  ").trim_end())?;
        }
        for (system, seed, agent, reason) in self.footnotes() {
            writeln!(f, "- {system} seed {seed} {agent}: {reason}")?;
        }
        Ok(())
    }
}
