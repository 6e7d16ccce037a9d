use crate::channel::{measure, Basis, Signal};
use crate::rng::{streams, RngStream};
use serde::{Deserialize, Serialize};

/// Alice's log entry for one prepared state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentEvent {
    pub event_id: u32,
    pub s2_bit: bool,
    pub s3_bit: bool,
}

impl SentEvent {
    /// Alice's key bit for an event Bob measured in `basis`.
    pub fn bit(&self, basis: Basis) -> bool {
        match basis {
            Basis::S2 => self.s2_bit,
            Basis::S3 => self.s3_bit,
        }
    }
}

/// Sign map: bit 1 prepares `+α`, bit 0 prepares `−α`.
pub fn signed(bit: bool, alpha: f64) -> f64 {
    if bit {
        alpha
    } else {
        -alpha
    }
}

pub struct AlicePeer {
    rng: RngStream,
    alpha: f64,
    sent: Vec<SentEvent>,
}

impl AlicePeer {
    pub fn new(alpha: f64, seed: u64) -> Self {
        Self {
            rng: RngStream::new(seed, streams::ALICE),
            alpha,
            sent: Vec::new(),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Prepares the next of the four states and logs both sign bits.
    pub fn prepare(&mut self) -> (u32, Signal) {
        let event_id = self.sent.len() as u32;
        let s2_bit = self.rng.bit();
        let s3_bit = self.rng.bit();
        self.sent.push(SentEvent {
            event_id,
            s2_bit,
            s3_bit,
        });
        (
            event_id,
            Signal::new(signed(s2_bit, self.alpha), signed(s3_bit, self.alpha)),
        )
    }

    pub fn sent(&self) -> &[SentEvent] {
        &self.sent
    }

    pub fn into_sent(self) -> Vec<SentEvent> {
        self.sent
    }
}

/// One measured event on Bob's side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event_id: u32,
    pub basis: Basis,
    pub x: f64,
    pub selected: bool,
    /// `x > 0` maps to 1, `x < 0` to 0; `None` only for `x == 0`.
    pub bit: Option<bool>,
}

/// Kept iff `x ≠ 0` and `|x| ≥ t`.
pub fn is_selected(x: f64, threshold: f64) -> bool {
    x != 0.0 && x.abs() >= threshold
}

pub fn outcome_bit(x: f64) -> Option<bool> {
    if x == 0.0 {
        None
    } else {
        Some(x > 0.0)
    }
}

pub struct BobPeer {
    rng: RngStream,
    threshold: f64,
    excess_noise: f64,
    measured: Vec<EventRecord>,
}

impl BobPeer {
    pub fn new(threshold: f64, excess_noise: f64, seed: u64) -> Self {
        Self {
            rng: RngStream::new(seed, streams::BOB),
            threshold,
            excess_noise,
            measured: Vec::new(),
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Picks a basis uniformly, measures it and applies the threshold.
    pub fn measure_event(&mut self, event_id: u32, sig_after_loss: Signal) -> EventRecord {
        let basis = Basis::from_bit(self.rng.bit());
        let x = measure(sig_after_loss, basis, self.excess_noise, &mut self.rng).x;
        let rec = EventRecord {
            event_id,
            basis,
            x,
            selected: is_selected(x, self.threshold),
            bit: outcome_bit(x),
        };
        self.measured.push(rec);
        rec
    }

    pub fn measured(&self) -> &[EventRecord] {
        &self.measured
    }

    pub fn selected(&self) -> impl Iterator<Item = &EventRecord> {
        self.measured.iter().filter(|r| r.selected)
    }

    /// Fresh public seed for privacy amplification.
    pub fn draw_seed(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn into_measured(self) -> Vec<EventRecord> {
        self.measured
    }
}

/// Passive beam-splitting eavesdropper. Measures her tapped amplitude in
/// the basis Bob uses for the same event.
pub struct EveObserver {
    rng: RngStream,
    excess_noise: f64,
    outcomes: Vec<f64>,
}

impl EveObserver {
    pub fn new(excess_noise: f64, seed: u64) -> Self {
        Self {
            rng: RngStream::new(seed, streams::EVE),
            excess_noise,
            outcomes: Vec::new(),
        }
    }

    pub fn observe(&mut self, tapped: Signal, basis: Basis) -> f64 {
        let x = measure(tapped, basis, self.excess_noise, &mut self.rng).x;
        self.outcomes.push(x);
        x
    }

    /// Eve's outcomes, indexed by event id.
    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_map() {
        assert_eq!(signed(true, 0.6), 0.6);
        assert_eq!(signed(false, 0.6), -0.6);
        let ev = SentEvent {
            event_id: 0,
            s2_bit: false,
            s3_bit: true,
        };
        assert!(ev.bit(Basis::S3));
        assert!(!ev.bit(Basis::S2));
    }

    #[test]
    fn prepared_magnitudes_are_alpha() {
        let mut a = AlicePeer::new(0.6, 1);
        for i in 0..100 {
            let (id, s) = a.prepare();
            assert_eq!(id, i);
            assert_eq!(s.s2_amp.abs(), 0.6);
            assert_eq!(s.s3_amp.abs(), 0.6);
            let ev = a.sent()[i as usize];
            assert_eq!(s.s2_amp > 0.0, ev.s2_bit);
            assert_eq!(s.s3_amp > 0.0, ev.s3_bit);
        }
    }

    #[test]
    fn four_states_uniform() {
        let n = 100_000;
        let mut a = AlicePeer::new(0.6, 2);
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let (_, s) = a.prepare();
            counts[(s.s2_amp > 0.0) as usize * 2 + (s.s3_amp > 0.0) as usize] += 1;
        }
        let sd = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * 0.25).abs() < 5.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn bases_uniform_and_axis_readout() {
        let n = 100_000;
        let mut b = BobPeer::new(0.0, 0.0, 3);
        let sig = Signal::new(0.6, -0.6);
        let mut s2 = 0usize;
        let (mut sum2, mut sum3) = (0.0, 0.0);
        for i in 0..n {
            let r = b.measure_event(i, sig);
            match r.basis {
                Basis::S2 => {
                    s2 += 1;
                    sum2 += r.x;
                }
                Basis::S3 => sum3 += r.x,
            }
        }
        let sd = (n as f64 * 0.25).sqrt();
        assert!((s2 as f64 - n as f64 / 2.0).abs() < 5.0 * sd);
        assert!((sum2 / s2 as f64 - 0.6).abs() < 0.02);
        assert!((sum3 / (n as usize - s2) as f64 + 0.6).abs() < 0.02);
    }

    #[test]
    fn threshold_rule() {
        assert!(is_selected(1.3, 1.0));
        assert_eq!(outcome_bit(1.3), Some(true));
        assert!(is_selected(-1.0, 1.0));
        assert_eq!(outcome_bit(-1.0), Some(false));
        assert!(!is_selected(0.99, 1.0));
        assert!(!is_selected(0.0, 0.0));
        assert_eq!(outcome_bit(0.0), None);
    }
}
