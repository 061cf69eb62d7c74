//! Continuous encoding of channel assignments for the actor-critic agent.
//!
//! Raw actor outputs are ranked in descending order (ties broken by sensor
//! index). The top `M` sensors get channels `1..=M` in rank order. The virtual
//! action replaces the raw values by evenly spaced ones that keep the order:
//! scheduled rank `k` maps to `1 − k/M` and the `j`-th unscheduled sensor to
//! `−(j+1)/(N−M)`.

use crate::channel::ScheduleAction;
use crate::error::{Error, Result};

fn ranking(raw: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..raw.len()).collect();
    // stable sort keeps lower indices first among equal values
    order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]));
    order
}

fn virtual_from_order(order: &[usize], channels: usize) -> Vec<f64> {
    let n = order.len();
    let mut v = vec![0.0; n];
    for (rank, &s) in order.iter().enumerate() {
        v[s] = if rank < channels {
            1.0 - rank as f64 / channels as f64
        } else {
            -((rank - channels + 1) as f64) / (n - channels) as f64
        };
    }
    v
}

/// Maps raw actor outputs to the virtual action and the real assignment.
pub fn map_virtual_action(raw: &[f64], channels: usize) -> Result<(Vec<f64>, ScheduleAction)> {
    let n = raw.len();
    if channels == 0 || channels > n {
        return Err(Error::validation(format!("cannot map {n} outputs onto {channels} channels")));
    }
    if raw.iter().any(|x| x.is_nan()) {
        return Err(Error::Diverged("actor produced NaN".into()));
    }
    let order = ranking(raw);
    let mut a = vec![0u8; n];
    for (rank, &s) in order.iter().take(channels).enumerate() {
        a[s] = rank as u8 + 1;
    }
    Ok((virtual_from_order(&order, channels), ScheduleAction(a)))
}

/// Virtual action of a real assignment. Unscheduled sensors are ordered by
/// `reference` (descending, ties by index) when given, else by index.
pub fn encode_action(action: &ScheduleAction, channels: usize, reference: Option<&[f64]>) -> Result<Vec<f64>> {
    let n = action.as_slice().len();
    action.validate(n, channels)?;
    let mut order: Vec<usize> = (1..=channels as u8)
        .map(|m| action.holder_of(m).expect("validated action"))
        .collect();
    let idle: Vec<usize> = match reference {
        Some(r) => ranking(r).into_iter().filter(|&s| action.channel_of(s) == 0).collect(),
        None => (0..n).filter(|&s| action.channel_of(s) == 0).collect(),
    };
    order.extend(idle);
    Ok(virtual_from_order(&order, channels))
}
