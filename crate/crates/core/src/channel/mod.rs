//! Per-device LTE rate processes, one rate per 1 ms slot.

mod markov;
mod rates;
mod trace;

pub use markov::{markov_init, markov_step, ChannelState, LinkState, MarkovChannelParams};
pub use rates::{
    cqi_from_sir, rate_from_cqi, RateTable, BAD_MAX_CQI, CQI_EFFICIENCY, CQI_LEVELS,
    PEAK_BITS_PER_SLOT, SIR_FLOOR_DB, SIR_STEP_DB,
};
pub use trace::{
    format_trace, generate_trace, load_trace, parse_trace, trace_rate_at, TraceChannel,
    TraceGenParams, TraceSample, MIN_CQI_STD,
};

use crate::seed::SimRng;

/// A channel owned by one device for the lifetime of one run.
#[derive(Clone, Debug)]
pub enum ChannelProcess {
    Markov {
        params: MarkovChannelParams,
        state: Option<ChannelState>,
        rng: SimRng,
    },
    Trace(TraceChannel),
    Fixed(u32),
}

impl ChannelProcess {
    pub fn markov(params: MarkovChannelParams, rng: SimRng) -> Self {
        ChannelProcess::Markov {
            params,
            state: None,
            rng,
        }
    }

    /// Rate in bits for `slot`. Must be called once per slot, in order.
    pub fn advance(&mut self, slot: u64, table: &RateTable) -> u32 {
        match self {
            ChannelProcess::Markov { params, state, rng } => {
                let next = match *state {
                    None => markov_init(params, table, rng),
                    Some(s) => markov_step(s, params, table, rng),
                };
                *state = Some(next);
                next.current_rate
            }
            ChannelProcess::Trace(t) => t.rate_at(slot),
            ChannelProcess::Fixed(rate) => *rate,
        }
    }

    pub fn link_state(&self) -> Option<LinkState> {
        match self {
            ChannelProcess::Markov { state, .. } => state.map(|s| s.state),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn markov_process_is_deterministic() {
        let table = RateTable::lte();
        let params = MarkovChannelParams::new(0.2, 0.6).unwrap();
        let run = || {
            let mut ch = ChannelProcess::markov(params, seed::stream(9, "channel", 0));
            (0..5000).map(|s| ch.advance(s, &table)).collect::<Vec<_>>()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.iter().all(|r| table.entries().contains(r)));
    }
}
