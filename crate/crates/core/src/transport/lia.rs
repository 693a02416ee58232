//! Linked-increases coupling of multipath congestion windows.

use super::tcp::{on_ack, TcpFlowState, TcpPhase, TcpSender};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coupling {
    None,
    Lia,
}

#[derive(Clone, Debug)]
pub struct MultipathState {
    pub subflows: Vec<TcpSender>,
    pub coupling: Coupling,
}

impl MultipathState {
    pub fn new(subflows: usize, coupling: Coupling) -> Result<Self> {
        if subflows == 0 {
            return Err(Error::Structural("a connection needs at least one subflow".into()));
        }
        if coupling == Coupling::Lia && subflows < 2 {
            return Err(Error::Structural("LIA coupling needs at least two subflows".into()));
        }
        Ok(Self {
            subflows: (0..subflows).map(|_| TcpSender::new()).collect(),
            coupling,
        })
    }

    /// Applies window growth for `acked` newly acknowledged blocks on one
    /// subflow. Slow start is uncoupled; congestion avoidance is coupled
    /// under LIA.
    pub fn grow(&mut self, subflow: usize, acked: u32) {
        if acked == 0 {
            return;
        }
        let coupled = self.coupling == Coupling::Lia
            && self.subflows[subflow].state.phase == TcpPhase::CongestionAvoidance;
        if coupled {
            let states: Vec<&TcpFlowState> = self.subflows.iter().map(|s| &s.state).collect();
            let inc = mptcp_increase(&states, subflow, acked);
            self.subflows[subflow].state.cwnd += inc;
        } else {
            on_ack(&mut self.subflows[subflow].state, acked);
        }
    }
}

fn rtt(s: &TcpFlowState) -> f64 {
    if s.srtt > 0.0 {
        s.srtt
    } else {
        1.0
    }
}

/// Aggressiveness factor
/// `cwnd_total * max_r(cwnd_r / rtt_r^2) / (sum_r cwnd_r / rtt_r)^2`.
pub fn lia_alpha(subflows: &[&TcpFlowState]) -> f64 {
    let total: f64 = subflows.iter().map(|s| s.cwnd).sum();
    let best = subflows
        .iter()
        .map(|s| s.cwnd / rtt(s).powi(2))
        .fold(0.0, f64::max);
    let denom: f64 = subflows.iter().map(|s| s.cwnd / rtt(s)).sum();
    total * best / (denom * denom)
}

/// Window increase on subflow `r` for `acked` blocks:
/// `min(alpha * acked / cwnd_total, acked / cwnd_r)`.
pub fn mptcp_increase(subflows: &[&TcpFlowState], r: usize, acked: u32) -> f64 {
    let acked = f64::from(acked);
    let own = acked / subflows[r].cwnd;
    if subflows.len() == 1 {
        return own;
    }
    let total: f64 = subflows.iter().map(|s| s.cwnd).sum();
    (lia_alpha(subflows) * acked / total).min(own)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flow(cwnd: f64, srtt: f64) -> TcpFlowState {
        TcpFlowState {
            cwnd,
            srtt,
            phase: TcpPhase::CongestionAvoidance,
            ..TcpFlowState::default()
        }
    }

    #[test]
    fn single_subflow_is_regular_tcp() {
        let f = flow(8.0, 40.0);
        assert_relative_eq!(mptcp_increase(&[&f], 0, 1), 1.0 / 8.0);
    }

    #[test]
    fn symmetric_pair_grows_by_alpha_per_round() {
        // alpha = 20 * (10/2500) / (10/50 + 10/50)^2 = 0.5. Each ACK adds
        // alpha / 20, so one round of 20 ACKs grows the aggregate by 0.5,
        // half of what a lone flow with the same total window would gain.
        let a = flow(10.0, 50.0);
        let b = flow(10.0, 50.0);
        assert_relative_eq!(lia_alpha(&[&a, &b]), 0.5);
        let per_round = 10.0 * mptcp_increase(&[&a, &b], 0, 1) + 10.0 * mptcp_increase(&[&a, &b], 1, 1);
        assert_relative_eq!(per_round, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn asymmetric_rtts_hand_evaluated() {
        // cwnd (10, 10), srtt (50, 100):
        //   max cwnd/rtt^2 = 10/2500 = 0.004
        //   sum cwnd/rtt   = 0.2 + 0.1 = 0.3
        //   alpha          = 20 * 0.004 / 0.09 = 0.888...
        //   increase       = min(alpha / 20, 1 / 10) = 0.0444...
        let a = flow(10.0, 50.0);
        let b = flow(10.0, 100.0);
        assert_relative_eq!(lia_alpha(&[&a, &b]), 0.08 / 0.09, epsilon = 1e-12);
        assert_relative_eq!(mptcp_increase(&[&a, &b], 1, 1), 0.08 / 0.09 / 20.0, epsilon = 1e-12);
    }

    #[test]
    fn lia_requires_two_subflows() {
        assert!(MultipathState::new(1, Coupling::Lia).is_err());
        assert!(MultipathState::new(0, Coupling::None).is_err());
        assert!(MultipathState::new(2, Coupling::Lia).is_ok());
    }

    #[test]
    fn slow_start_is_uncoupled() {
        let mut m = MultipathState::new(2, Coupling::Lia).unwrap();
        m.grow(0, 4);
        assert_eq!(m.subflows[0].state.cwnd, 14.0);
    }
}
