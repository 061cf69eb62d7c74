//! Solved-table CSV plus a JSON sidecar describing the instance.
//!
//! The CSV holds one row per state: `tau_1..tau_N, h_1_1..h_N_M, value,
//! action, assignment, ties`. `action` is the index into the lexicographic
//! action list, `assignment` its channel vector and `ties` the `;`-separated
//! indices of all near-optimal actions (empty when the argmax is unique).
//! Values are written at full round-trip precision.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::actions::ActionSet;
use super::solver::Policy;
use super::space::StateSpace;
use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::estimation::{ProcessSpec, RewardKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionMeta {
    pub sensors: usize,
    pub channels: usize,
    pub tau_max: u32,
    pub reward: RewardKind,
    pub gamma: f64,
    pub tol: f64,
    pub tie_tol: f64,
    pub residual: f64,
    pub iterations: usize,
    pub channel: ChannelModel,
    pub processes: Vec<ProcessSpec>,
}

impl SolutionMeta {
    pub fn space(&self) -> Result<StateSpace> {
        StateSpace::new(self.sensors, self.channels, self.channel.levels(), self.tau_max)
    }
}

/// A solution read back from disk.
#[derive(Debug, Clone)]
pub struct SolvedArtifact {
    pub meta: SolutionMeta,
    pub values: Vec<f64>,
    pub policy: Policy,
}

/// `solution.csv` → `solution.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

fn header(space: &StateSpace) -> Vec<String> {
    let mut h: Vec<String> = (1..=space.sensors()).map(|n| format!("tau_{n}")).collect();
    for n in 1..=space.sensors() {
        for m in 1..=space.channels() {
            h.push(format!("h_{n}_{m}"));
        }
    }
    h.extend(["value", "action", "assignment", "ties"].map(String::from));
    h
}

pub fn write_solution_csv(path: &Path, meta: &SolutionMeta, values: &[f64], policy: &Policy) -> Result<()> {
    let space = meta.space()?;
    let actions = ActionSet::new(meta.sensors, meta.channels)?;
    if values.len() != space.len() || policy.len() != space.len() {
        return Err(Error::Shape(format!(
            "{} values and {} policy entries for {} states",
            values.len(),
            policy.len(),
            space.len()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header(&space))?;
    let mut row = Vec::new();
    for s in 0..space.len() {
        let st = space.decode(s);
        row.clear();
        row.extend(st.tau.iter().map(|t| t.to_string()));
        row.extend(st.h.iter().map(|h| h.to_string()));
        row.push(values[s].to_string());
        let a = policy.action(s);
        row.push(a.to_string());
        let assignment: Vec<String> = actions.get(a).as_slice().iter().map(|c| c.to_string()).collect();
        row.push(assignment.join(" "));
        let ties: Vec<String> = policy.ties(s).iter().map(|t| t.to_string()).collect();
        row.push(ties.join(";"));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let meta_file = meta_path(path);
    let json = serde_json::to_string_pretty(meta).map_err(|e| Error::validation(e.to_string()))?;
    std::fs::write(&meta_file, json).map_err(|e| Error::io(meta_file, e))
}

pub fn read_solution_csv(path: &Path) -> Result<SolvedArtifact> {
    let meta_file = meta_path(path);
    let text = std::fs::read_to_string(&meta_file).map_err(|e| Error::io(&meta_file, e))?;
    let meta: SolutionMeta = serde_json::from_str(&text).map_err(|e| Error::Config {
        path: meta_file.clone(),
        message: e.to_string(),
    })?;
    let space = meta.space()?;
    let n_actions = ActionSet::new(meta.sensors, meta.channels)?.len();
    let mut reader = csv::Reader::from_path(path)?;
    let expected = header(&space);
    if reader.headers()?.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::validation(format!("{}: unexpected header", path.display())));
    }
    let mut values = vec![f64::NAN; space.len()];
    let mut actions = vec![u32::MAX; space.len()];
    let mut ties = vec![Vec::new(); space.len()];
    let (n, nm) = (space.sensors(), space.sensors() * space.channels());
    let bad = |line: u64, what: &str| Error::validation(format!("{}:{line}: bad {what}", path.display()));
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).unwrap_or("");
        let tau = (0..n)
            .map(|i| field(i).parse::<u32>().map_err(|_| bad(line, "AoI")))
            .collect::<Result<Vec<_>>>()?;
        let h = (n..n + nm)
            .map(|i| field(i).parse::<u8>().map_err(|_| bad(line, "channel state")))
            .collect::<Result<Vec<_>>>()?;
        let s = space.encode(&crate::channel::SysState::new(tau, h))?;
        values[s] = field(n + nm).parse().map_err(|_| bad(line, "value"))?;
        let a: u32 = field(n + nm + 1).parse().map_err(|_| bad(line, "action"))?;
        let t = field(n + nm + 3);
        let tie_list = if t.is_empty() {
            Vec::new()
        } else {
            t.split(';')
                .map(|x| x.parse::<u32>().map_err(|_| bad(line, "ties")))
                .collect::<Result<Vec<_>>>()?
        };
        if a as usize >= n_actions || tie_list.iter().any(|&x| x as usize >= n_actions) {
            return Err(bad(line, "action index"));
        }
        actions[s] = a;
        ties[s] = tie_list;
    }
    if actions.contains(&u32::MAX) {
        return Err(Error::validation(format!("{}: missing states", path.display())));
    }
    Ok(SolvedArtifact {
        meta,
        values,
        policy: Policy::with_ties(actions, ties)?,
    })
}
