//! Numerical checks of the structural properties of optimal schedules.
//!
//! Every checker scans pairs of states of the truncated space and reports the
//! pairs where a property fails. Action properties compare policy decisions
//! exactly; value properties allow a slack (`10·tol` by default).
//!
//! Ties: the premise of an action property is read off the policy's chosen
//! action; the conclusion holds if any near-optimal action at the paired state
//! satisfies it. A failing pair whose premise state itself has tied optima is
//! counted in `tie_excluded` instead of `witnesses`.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::channel::{ChannelModel, ScheduleAction, SysState};
use crate::error::{Error, Result};
use crate::mdp::{ActionSet, Policy, StateSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    ChannelThreshold,
    AoiThreshold,
    Monotonicity,
    ProbSupermodularity,
    ChannelReassignment,
}

impl CheckKind {
    pub fn name(self) -> &'static str {
        match self {
            CheckKind::ChannelThreshold => "channel_threshold",
            CheckKind::AoiThreshold => "aoi_threshold",
            CheckKind::Monotonicity => "monotonicity",
            CheckKind::ProbSupermodularity => "prob_supermodularity",
            CheckKind::ChannelReassignment => "channel_reassignment",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub state: SysState,
    pub paired: SysState,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationReport {
    pub kind: CheckKind,
    pub witnesses: Vec<Witness>,
    pub checked_pairs: usize,
    pub tie_excluded: usize,
    /// Candidate pairs whose side condition did not hold.
    pub skipped: usize,
    /// Restricted to the large-AoI region where the property is only claimed
    /// asymptotically.
    pub asymptotic: bool,
}

impl ViolationReport {
    fn new(kind: CheckKind) -> Self {
        ViolationReport {
            kind,
            witnesses: Vec::new(),
            checked_pairs: 0,
            tie_excluded: 0,
            skipped: 0,
            asymptotic: false,
        }
    }

    pub fn passed(&self) -> bool {
        self.witnesses.is_empty()
    }

    pub fn violations(&self) -> usize {
        self.witnesses.len()
    }
}

impl fmt::Display for ViolationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<22} {}{}  violations={} checked={} tie_excluded={} skipped={}",
            self.kind.name(),
            if self.passed() { "PASS" } else { "FAIL" },
            if self.asymptotic { " (asymptotic)" } else { "" },
            self.violations(),
            self.checked_pairs,
            self.tie_excluded,
            self.skipped
        )
    }
}

fn fmt_state(s: &SysState) -> String {
    let tau: Vec<String> = s.tau.iter().map(|t| t.to_string()).collect();
    let h: Vec<String> = s.h.iter().map(|t| t.to_string()).collect();
    format!("tau=({}) h=({})", tau.join(","), h.join(","))
}

/// One witness per row: `kind, state, paired, detail`.
pub fn write_reports_csv(path: &Path, reports: &[ViolationReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["kind", "state", "paired", "detail"])?;
    for r in reports {
        for wit in &r.witnesses {
            w.write_record([r.kind.name(), &fmt_state(&wit.state), &fmt_state(&wit.paired), &wit.detail])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Human-readable summary, one line per report.
pub fn write_summary(mut out: impl Write, reports: &[ViolationReport]) -> std::io::Result<()> {
    for r in reports {
        writeln!(out, "{r}")?;
    }
    Ok(())
}

fn check_shape(policy: &Policy, space: &StateSpace, actions: &ActionSet) -> Result<()> {
    if policy.len() != space.len() {
        return Err(Error::Shape(format!(
            "policy covers {} states, space has {}",
            policy.len(),
            space.len()
        )));
    }
    if actions.is_empty() || actions.get(0).as_slice().len() != space.sensors() {
        return Err(Error::Shape("action set does not match the state space".into()));
    }
    Ok(())
}

/// Whether any optimal action at `state` satisfies `pred`.
fn any_optimal(policy: &Policy, actions: &ActionSet, state: usize, mut pred: impl FnMut(&ScheduleAction) -> bool) -> bool {
    policy
        .optimal_actions(state)
        .iter()
        .any(|&a| pred(actions.get(a as usize)))
}

fn record(report: &mut ViolationReport, tied: bool, witness: impl FnOnce() -> Witness) {
    if tied {
        report.tie_excluded += 1;
    } else {
        report.witnesses.push(witness());
    }
}

/// Improving the state of an assigned link keeps the assignment.
pub fn check_channel_threshold(policy: &Policy, space: &StateSpace, actions: &ActionSet) -> Result<ViolationReport> {
    check_shape(policy, space, actions)?;
    let mut rep = ViolationReport::new(CheckKind::ChannelThreshold);
    for s in 0..space.len() {
        let a = actions.get(policy.action(s));
        let st = space.decode(s);
        for n in 0..space.sensors() {
            let ch = a.channel_of(n);
            if ch == 0 {
                continue;
            }
            let m = ch as usize - 1;
            let h = st.level(n, m);
            let w = space.h_weight(n, m);
            for better in h + 1..=space.levels() as u8 {
                let s2 = s + (better - h) as usize * w;
                rep.checked_pairs += 1;
                if !any_optimal(policy, actions, s2, |b| b.channel_of(n) == ch) {
                    record(&mut rep, policy.is_tied(s), || Witness {
                        state: st.clone(),
                        paired: space.decode(s2),
                        detail: format!(
                            "sensor {} on channel {ch} with {a}; at h={better} policy picks {}",
                            n + 1,
                            actions.get(policy.action(s2))
                        ),
                    });
                }
            }
        }
    }
    Ok(rep)
}

/// Floor for the large-AoI scan, or `None` when the property is claimed on
/// the whole space (two sensors, one channel).
pub fn default_aoi_floor(space: &StateSpace) -> Option<u32> {
    if space.channels() == 1 && space.sensors() > 2 {
        Some(space.tau_max().saturating_sub(4).max(1))
    } else {
        None
    }
}

/// Raising a scheduled sensor's AoI keeps it on the same or a better channel.
/// With `large_tau_floor`, only raised AoIs at or above the floor are paired.
pub fn check_aoi_threshold(
    policy: &Policy,
    space: &StateSpace,
    actions: &ActionSet,
    large_tau_floor: Option<u32>,
) -> Result<ViolationReport> {
    check_shape(policy, space, actions)?;
    let mut rep = ViolationReport::new(CheckKind::AoiThreshold);
    rep.asymptotic = large_tau_floor.is_some();
    let floor = large_tau_floor.unwrap_or(1);
    let stride_base = space.h_count();
    for s in 0..space.len() {
        let a = actions.get(policy.action(s));
        let st = space.decode(s);
        for n in 0..space.sensors() {
            let ch = a.channel_of(n);
            if ch == 0 {
                continue;
            }
            let h0 = st.level(n, ch as usize - 1);
            let stride = space.tau_weight(n) * stride_base;
            for t2 in (st.tau[n] + 1).max(floor)..=space.tau_max() {
                let s2 = s + (t2 - st.tau[n]) as usize * stride;
                rep.checked_pairs += 1;
                let ok = any_optimal(policy, actions, s2, |b| {
                    let c = b.channel_of(n);
                    c > 0 && st.level(n, c as usize - 1) >= h0
                });
                if !ok {
                    record(&mut rep, policy.is_tied(s), || Witness {
                        state: st.clone(),
                        paired: space.decode(s2),
                        detail: format!(
                            "sensor {} on channel {ch} with {a}; at tau={t2} policy picks {}",
                            n + 1,
                            actions.get(policy.action(s2))
                        ),
                    });
                }
            }
        }
    }
    Ok(rep)
}

fn check_values(values: &[f64], space: &StateSpace) -> Result<()> {
    if values.len() != space.len() {
        return Err(Error::Shape(format!(
            "{} values for {} states",
            values.len(),
            space.len()
        )));
    }
    Ok(())
}

/// `V` does not increase when a single AoI increases, up to `slack`.
pub fn check_monotonicity(values: &[f64], space: &StateSpace, slack: f64) -> Result<ViolationReport> {
    check_values(values, space)?;
    let mut rep = ViolationReport::new(CheckKind::Monotonicity);
    for s in 0..space.len() {
        let st = space.decode(s);
        for n in 0..space.sensors() {
            if st.tau[n] == space.tau_max() {
                continue;
            }
            let s2 = s + space.tau_weight(n) * space.h_count();
            rep.checked_pairs += 1;
            if values[s2] > values[s] + slack {
                rep.witnesses.push(Witness {
                    state: st.clone(),
                    paired: space.decode(s2),
                    detail: format!("V rises from {} to {}", values[s], values[s2]),
                });
            }
        }
    }
    Ok(rep)
}

/// `p_j V(s∧s°) + (p_j − p_i) V(s∨s°) ≥ p_j V(s) + (p_j − p_i) V(s°)` for
/// `s° = s` with `τ_i` lowered to `τ''_i` and `τ_j` raised to `τ'_j`, so that
/// the meet is `(τ''_i, τ_j)` and the join `(τ_i, τ'_j)`. Single channel only.
/// With `asymptotic_gap`, only pairs with `τ_i − τ''_i ≥ gap` are checked.
pub fn check_prob_supermodularity(
    values: &[f64],
    space: &StateSpace,
    channel: &ChannelModel,
    asymptotic_gap: Option<u32>,
    slack: f64,
) -> Result<ViolationReport> {
    check_values(values, space)?;
    if space.channels() != 1 || channel.channels() != 1 {
        return Err(Error::validation("probabilistic supermodularity is defined for a single channel"));
    }
    if channel.sensors() != space.sensors() || channel.levels() != space.levels() {
        return Err(Error::Shape("channel model does not match the state space".into()));
    }
    let mut rep = ViolationReport::new(CheckKind::ProbSupermodularity);
    rep.asymptotic = asymptotic_gap.is_some();
    let gap = asymptotic_gap.unwrap_or(0);
    let hc = space.h_count();
    for s in 0..space.len() {
        let st = space.decode(s);
        for i in 0..space.sensors() {
            let pi = channel.success_probability(i, 0, &st.h)?;
            let wi = space.tau_weight(i) * hc;
            for j in 0..space.sensors() {
                if i == j {
                    continue;
                }
                let pj = channel.success_probability(j, 0, &st.h)?;
                let wj = space.tau_weight(j) * hc;
                for lo in 1..=st.tau[i] {
                    let down = (st.tau[i] - lo) as usize;
                    if (down as u32) < gap || down == 0 {
                        // no change in τ_i makes both sides identical
                        continue;
                    }
                    for hi in st.tau[j] + 1..=space.tau_max() {
                        let up = (hi - st.tau[j]) as usize;
                        let meet = s - down * wi;
                        let join = s + up * wj;
                        let other = meet + up * wj;
                        rep.checked_pairs += 1;
                        let lhs = pj * values[meet] + (pj - pi) * values[join];
                        let rhs = pj * values[s] + (pj - pi) * values[other];
                        if lhs < rhs - slack {
                            rep.witnesses.push(Witness {
                                state: st.clone(),
                                paired: space.decode(other),
                                detail: format!("i={} j={} lhs={lhs} rhs={rhs}", i + 1, j + 1),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(rep)
}

/// Default AoI gap for the asymptotic supermodularity scan.
pub fn default_supermodularity_gap(space: &StateSpace) -> Option<u32> {
    if space.channels() == 1 && space.sensors() > 2 {
        Some(space.tau_max() / 2)
    } else {
        None
    }
}

/// If sensor `i` holds channel `m` and sensor `j` is idle with
/// `h_{j,m} ≤ h_{i,m}`, then raising `τ_i` while every other sensor keeps its
/// channel never hands `m` to `j`.
pub fn check_channel_reassignment(policy: &Policy, space: &StateSpace, actions: &ActionSet) -> Result<ViolationReport> {
    check_shape(policy, space, actions)?;
    let mut rep = ViolationReport::new(CheckKind::ChannelReassignment);
    let hc = space.h_count();
    for s in 0..space.len() {
        let a = actions.get(policy.action(s));
        let st = space.decode(s);
        for i in 0..space.sensors() {
            let ch = a.channel_of(i);
            if ch == 0 {
                continue;
            }
            let m = ch as usize - 1;
            let stride = space.tau_weight(i) * hc;
            for j in 0..space.sensors() {
                if j == i || a.channel_of(j) != 0 || st.level(j, m) > st.level(i, m) {
                    continue;
                }
                for t2 in st.tau[i] + 1..=space.tau_max() {
                    let s2 = s + (t2 - st.tau[i]) as usize * stride;
                    let keeps_others = |b: &ScheduleAction| {
                        (0..space.sensors()).all(|n| n == i || a.channel_of(n) == 0 || b.channel_of(n) == a.channel_of(n))
                    };
                    if !any_optimal(policy, actions, s2, keeps_others) {
                        rep.skipped += 1;
                        continue;
                    }
                    rep.checked_pairs += 1;
                    if !any_optimal(policy, actions, s2, |b| keeps_others(b) && b.channel_of(j) != ch) {
                        record(&mut rep, policy.is_tied(s), || Witness {
                            state: st.clone(),
                            paired: space.decode(s2),
                            detail: format!(
                                "sensor {} takes channel {ch} from sensor {}; {a} -> {}",
                                j + 1,
                                i + 1,
                                actions.get(policy.action(s2))
                            ),
                        });
                    }
                }
            }
        }
    }
    Ok(rep)
}

/// Runs every check that applies to the instance size: both threshold checks
/// and the value checks for a single channel (large-AoI restricted beyond two
/// sensors), the channel threshold and the reassignment check otherwise.
pub fn run_applicable_checks(
    values: &[f64],
    policy: &Policy,
    space: &StateSpace,
    channel: &ChannelModel,
    slack: f64,
) -> Result<Vec<ViolationReport>> {
    let actions = ActionSet::new(space.sensors(), space.channels())?;
    let mut out = vec![
        check_channel_threshold(policy, space, &actions)?,
        check_monotonicity(values, space, slack)?,
    ];
    if space.channels() == 1 {
        out.push(check_aoi_threshold(policy, space, &actions, default_aoi_floor(space))?);
        out.push(check_prob_supermodularity(
            values,
            space,
            channel,
            default_supermodularity_gap(space),
            slack,
        )?);
    } else {
        out.push(check_channel_reassignment(policy, space, &actions)?);
    }
    Ok(out)
}
