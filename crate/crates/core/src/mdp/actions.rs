use std::collections::HashMap;

use crate::channel::ScheduleAction;
use crate::error::{Error, Result};

/// Upper bound on enumerated action lists.
pub const MAX_ACTIONS: usize = 1 << 20;

/// `N!/(N−M)!`, or `None` on overflow.
pub fn action_count(sensors: usize, channels: usize) -> Option<usize> {
    if channels > sensors {
        return Some(0);
    }
    (sensors - channels + 1..=sensors).try_fold(1usize, |acc, k| acc.checked_mul(k))
}

/// All assignments that give each channel to exactly one distinct sensor.
///
/// Ordered lexicographically by the tuple (holder of channel 1, holder of
/// channel 2, …), so for two sensors and one channel the list is
/// `[(1,0), (0,1)]`.
pub fn enumerate_actions(sensors: usize, channels: usize) -> Result<Vec<ScheduleAction>> {
    if channels == 0 || channels > sensors {
        return Err(Error::validation(format!(
            "cannot assign {channels} channels to {sensors} sensors"
        )));
    }
    match action_count(sensors, channels) {
        Some(c) if c <= MAX_ACTIONS => {}
        _ => {
            return Err(Error::Capacity(format!(
                "{sensors} sensors and {channels} channels give more than {MAX_ACTIONS} actions"
            )))
        }
    }
    let mut out = Vec::new();
    let mut holders = Vec::with_capacity(channels);
    let mut used = vec![false; sensors];
    fill(sensors, channels, &mut holders, &mut used, &mut out);
    Ok(out)
}

fn fill(sensors: usize, channels: usize, holders: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<ScheduleAction>) {
    if holders.len() == channels {
        let mut a = vec![0u8; sensors];
        for (ch, &n) in holders.iter().enumerate() {
            a[n] = ch as u8 + 1;
        }
        out.push(ScheduleAction(a));
        return;
    }
    for n in 0..sensors {
        if !used[n] {
            used[n] = true;
            holders.push(n);
            fill(sensors, channels, holders, used, out);
            holders.pop();
            used[n] = false;
        }
    }
}

/// Enumerated actions with reverse lookup.
#[derive(Debug, Clone)]
pub struct ActionSet {
    sensors: usize,
    channels: usize,
    actions: Vec<ScheduleAction>,
    index: HashMap<ScheduleAction, usize>,
}

impl ActionSet {
    pub fn new(sensors: usize, channels: usize) -> Result<Self> {
        let actions = enumerate_actions(sensors, channels)?;
        let index = actions.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect();
        Ok(ActionSet {
            sensors,
            channels,
            actions,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn get(&self, idx: usize) -> &ScheduleAction {
        &self.actions[idx]
    }

    pub fn index_of(&self, action: &ScheduleAction) -> Option<usize> {
        self.index.get(action).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ScheduleAction> {
        self.actions.iter()
    }

    pub fn as_slice(&self) -> &[ScheduleAction] {
        &self.actions
    }
}
