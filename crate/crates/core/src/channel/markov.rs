use rand::Rng;
use serde::Serialize;

use super::rates::RateTable;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LinkState {
    Good,
    Bad,
}

/// Two-state (Gilbert-Elliott style) channel: `p` is the per-slot Bad->Good
/// probability, `q` the Good->Bad probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MarkovChannelParams {
    p: f64,
    q: f64,
}

impl MarkovChannelParams {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        for (name, v) in [("p", p), ("q", q)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(name, format!("{v} is not a probability in [0, 1]")));
            }
        }
        Ok(Self { p, q })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Long-run fraction of slots spent in Good. A chain that never moves
    /// (p = q = 0) is reported as always Good.
    pub fn stationary_good(&self) -> f64 {
        if self.p + self.q == 0.0 {
            1.0
        } else {
            self.p / (self.p + self.q)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChannelState {
    pub state: LinkState,
    pub current_rate: u32,
}

fn draw_rate<R: Rng + ?Sized>(state: LinkState, table: &RateTable, rng: &mut R) -> u32 {
    let half = match state {
        LinkState::Good => table.good_rates(),
        LinkState::Bad => table.bad_rates(),
    };
    half[rng.random_range(0..half.len())]
}

/// Initial state drawn from the stationary distribution.
pub fn markov_init<R: Rng + ?Sized>(
    params: &MarkovChannelParams,
    table: &RateTable,
    rng: &mut R,
) -> ChannelState {
    let state = if rng.random::<f64>() < params.stationary_good() {
        LinkState::Good
    } else {
        LinkState::Bad
    };
    ChannelState {
        state,
        current_rate: draw_rate(state, table, rng),
    }
}

/// Advances one slot. The rate is redrawn every slot, flip or not.
pub fn markov_step<R: Rng + ?Sized>(
    state: ChannelState,
    params: &MarkovChannelParams,
    table: &RateTable,
    rng: &mut R,
) -> ChannelState {
    let u: f64 = rng.random();
    let next = match state.state {
        LinkState::Bad if u < params.p => LinkState::Good,
        LinkState::Good if u < params.q => LinkState::Bad,
        s => s,
    };
    ChannelState {
        state: next,
        current_rate: draw_rate(next, table, rng),
    }
}
