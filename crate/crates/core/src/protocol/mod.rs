//! Four-state prepare-and-measure protocol with post-selection.
//!
//! The quantum phase is simulated in-process: Alice prepares, the channel
//! attenuates (and optionally feeds a passive eavesdropper), Bob measures a
//! random basis and applies the threshold. Everything afterwards runs over a
//! [`Transport`]: Bob announces bases for his kept events, Alice
//! acknowledges, and optionally Cascade and privacy amplification follow on
//! the same link.

mod peers;
mod server;

pub use peers::{
    is_selected, outcome_bit, signed, AlicePeer, BobPeer, EveObserver, EventRecord, SentEvent,
};
pub use server::{sift_alice, AliceServer};

use crate::cascade::{
    cascade_reconcile, final_key_length, toeplitz_hash, CascadeConfig, CascadeError, LeakageLedger,
};
use crate::channel::{apply_loss, eve_tap, Basis, ChannelError, ChannelParams};
use crate::info::{
    selection_stats, solve_threshold, threshold_for_yield, AdvantageEstimator, InfoError,
    InfoParams, SelectionResult,
};
use crate::transport::{loopback_pair, Recorder, Transcript, Transport, TransportError};
use crate::wire::{HashPurpose, Message, MessageType, WireError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("amplitude must be finite and > 0, got {0}")]
    Amplitude(f64),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Info(#[from] InfoError),
    #[error("announcement lists {ids} ids but {bases} bases")]
    AnnouncementShape { ids: usize, bases: usize },
    #[error("unknown event id {0}")]
    UnknownEvent(u32),
    #[error("event {0} announced twice")]
    DuplicateEvent(u32),
    #[error("event {id} announced after {prev}")]
    OutOfOrder { prev: u32, id: u32 },
    #[error("bases were already announced")]
    RepeatedAnnouncement,
    #[error("{0:?} not allowed in the current phase")]
    OutOfPhase(MessageType),
    #[error("{0:?} travels from Alice to Bob only")]
    WrongDirection(MessageType),
    #[error("expected {expected:?}, got {got:?}")]
    Unexpected {
        expected: MessageType,
        got: MessageType,
    },
    #[error("alice accepted {accepted} of {announced} announced events")]
    SiftMismatch { announced: usize, accepted: u32 },
    #[error("event {0} is not a kept event")]
    NotSelected(u32),
    #[error("transcript has no basis announcement")]
    NoAnnouncement,
    #[error("frame {index} ({kind:?}) breaks the request/response order")]
    Ordering { index: usize, kind: MessageType },
    #[error("cascade: {0}")]
    Cascade(#[from] CascadeError),
    #[error("transport: {0}")]
    Transport(#[from] TransportError),
    #[error("wire: {0}")]
    Wire(#[from] WireError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdUnits {
    /// Raw outcome units.
    Outcome,
    /// Multiples of Alice's amplitude `α`.
    AlphaSent,
    /// Multiples of the amplitude reaching Bob, `α√η`.
    AlphaReceived,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdSpec {
    /// Smallest `t` with `I_AB(t) > I_AE`.
    Auto,
    Fixed {
        value: f64,
        units: ThresholdUnits,
    },
    /// Threshold whose model yield equals `target`.
    Yield {
        target: f64,
    },
}

impl ThresholdSpec {
    /// Threshold in outcome units.
    pub fn resolve(&self, params: &InfoParams) -> Result<f64, InfoError> {
        match *self {
            ThresholdSpec::Auto => solve_threshold(params),
            ThresholdSpec::Yield { target } => threshold_for_yield(params, target),
            ThresholdSpec::Fixed { value, units } => {
                let t = match units {
                    ThresholdUnits::Outcome => value,
                    ThresholdUnits::AlphaSent => value * params.alpha(),
                    ThresholdUnits::AlphaReceived => value * params.bob_amplitude(),
                };
                if t >= 0.0 && t.is_finite() {
                    Ok(t)
                } else {
                    Err(InfoError::Threshold(t))
                }
            }
        }
    }
}

/// Error correction and privacy amplification settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillConfig {
    pub cascade: CascadeConfig,
    pub safety_margin: usize,
    pub estimator: AdvantageEstimator,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionConfig {
    pub alpha: f64,
    pub channel: ChannelParams,
    pub threshold: ThresholdSpec,
    pub n_events: u32,
    pub seed: u64,
    /// Simulate a passive beam-splitting eavesdropper.
    pub eve: bool,
    /// Run Cascade and privacy amplification after sifting.
    pub distill: Option<DistillConfig>,
}

impl SessionConfig {
    pub fn info_params(&self) -> Result<InfoParams, ProtocolError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(ProtocolError::Amplitude(self.alpha));
        }
        Ok(InfoParams::new(
            self.alpha,
            self.channel.eta(),
            self.channel.outcome_variance(),
        )?)
    }
}

/// Aligned sifted keys.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RawKeyPair {
    pub alice_bits: Vec<bool>,
    pub bob_bits: Vec<bool>,
    pub event_ids: Vec<u32>,
}

impl RawKeyPair {
    pub fn len(&self) -> usize {
        self.event_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.event_ids.is_empty()
    }

    pub fn mismatches(&self) -> usize {
        self.alice_bits
            .iter()
            .zip(&self.bob_bits)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// Peers after the quantum phase.
pub struct SimulatedEvents {
    pub alice: AlicePeer,
    pub bob: BobPeer,
    pub eve: Option<EveObserver>,
}

/// Prepare → channel → measure for every event.
pub fn simulate_events(cfg: &SessionConfig, threshold: f64) -> SimulatedEvents {
    let excess = cfg.channel.excess_noise();
    let mut alice = AlicePeer::new(cfg.alpha, cfg.seed);
    let mut bob = BobPeer::new(threshold, excess, cfg.seed);
    let mut eve = cfg.eve.then(|| EveObserver::new(excess, cfg.seed));
    for _ in 0..cfg.n_events {
        let (id, sig) = alice.prepare();
        let rec = bob.measure_event(id, apply_loss(sig, &cfg.channel));
        if let Some(eve) = eve.as_mut() {
            eve.observe(eve_tap(sig, &cfg.channel), rec.basis);
        }
    }
    SimulatedEvents { alice, bob, eve }
}

/// Rebuilds the sifted key pair from a recorded transcript and both
/// peers' local logs.
pub fn replay_sift(
    sent: &[SentEvent],
    measured: &[EventRecord],
    transcript: &Transcript,
) -> Result<RawKeyPair, ProtocolError> {
    let messages = transcript.messages()?;
    let (event_ids, bases) = messages
        .iter()
        .find_map(|m| match m {
            Message::BasisAnnouncement { event_ids, bases } => Some((event_ids, bases)),
            _ => None,
        })
        .ok_or(ProtocolError::NoAnnouncement)?;
    let alice_bits = sift_alice(sent, event_ids, bases)?;
    let bob_bits = event_ids
        .iter()
        .map(|&id| {
            measured
                .get(id as usize)
                .filter(|r| r.selected)
                .and_then(|r| r.bit)
                .ok_or(ProtocolError::NotSelected(id))
        })
        .collect::<Result<_, _>>()?;
    Ok(RawKeyPair {
        alice_bits,
        bob_bits,
        event_ids: event_ids.clone(),
    })
}

/// Checks that the transcript is a strict alternation of Bob requests and
/// Alice replies opened by a single basis announcement. Alice therefore
/// cannot have sent anything before Bob announced.
pub fn check_ordering(transcript: &Transcript) -> Result<(), ProtocolError> {
    for (index, msg) in transcript.messages()?.iter().enumerate() {
        let kind = msg.kind();
        let from_bob = index % 2 == 0;
        let announcement = kind == MessageType::BasisAnnouncement;
        if kind.sent_by_bob() != from_bob || announcement != (index == 0) {
            return Err(ProtocolError::Ordering { index, kind });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconciliationSummary {
    pub error_rate_estimate: f64,
    pub initial_block: usize,
    pub corrections: usize,
    pub ledger: LeakageLedger,
    pub verified: bool,
    /// Bits still differing from Alice's key (simulator view).
    pub residual_errors: usize,
    pub corrected_length: usize,
}

/// Counts and error fractions of one session, seen with the simulator's
/// knowledge of both peers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSummary {
    pub n_events: u32,
    pub threshold: f64,
    pub selected: usize,
    /// Events with a defined bit (`x ≠ 0`).
    pub decided: usize,
    pub pre_errors: usize,
    pub post_errors: usize,
    /// Eve's sign errors on the kept events, when she is simulated.
    pub eve_errors: Option<usize>,
    pub model: Option<SelectionResult>,
    pub advantage_used: Option<f64>,
    pub reconciliation: Option<ReconciliationSummary>,
    pub final_key_length: usize,
    pub final_keys_match: Option<bool>,
}

impl SessionSummary {
    pub fn pre_error(&self) -> f64 {
        ratio(self.pre_errors, self.decided)
    }

    pub fn post_error(&self) -> f64 {
        ratio(self.post_errors, self.selected)
    }

    pub fn eve_error(&self) -> Option<f64> {
        self.eve_errors.map(|e| ratio(e, self.selected))
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug)]
pub struct SessionOutput {
    pub raw: RawKeyPair,
    pub summary: SessionSummary,
    pub transcript: Transcript,
    pub sent: Vec<SentEvent>,
    pub measured: Vec<EventRecord>,
    pub alice_final: Option<Vec<bool>>,
    pub bob_final: Option<Vec<bool>>,
}

/// A failed session together with every frame exchanged before the failure.
#[derive(Debug, Error)]
#[error("session aborted after {} frames: {error}", transcript.len())]
pub struct SessionAbort {
    pub error: ProtocolError,
    pub transcript: Transcript,
}

impl From<ProtocolError> for SessionAbort {
    fn from(error: ProtocolError) -> Self {
        Self {
            error,
            transcript: Transcript::new(),
        }
    }
}

struct BobResult {
    raw_bits: Vec<bool>,
    event_ids: Vec<u32>,
    reconciliation: Option<(ReconciliationSummary, Vec<bool>)>,
    advantage_used: Option<f64>,
    final_key: Option<Vec<bool>>,
}

fn expect_reply<T: Transport>(t: &mut T, expected: MessageType) -> Result<Message, ProtocolError> {
    let msg = t.recv()?;
    if msg.kind() == expected {
        Ok(msg)
    } else {
        Err(ProtocolError::Unexpected {
            expected,
            got: msg.kind(),
        })
    }
}

/// Bob's announcement and Alice's acknowledgement.
pub fn bob_sift<T: Transport>(
    bob: &BobPeer,
    transport: &mut T,
) -> Result<(Vec<u32>, Vec<bool>), ProtocolError> {
    let kept: Vec<&EventRecord> = bob.selected().collect();
    let event_ids: Vec<u32> = kept.iter().map(|r| r.event_id).collect();
    let bases: Vec<Basis> = kept.iter().map(|r| r.basis).collect();
    let bits: Vec<bool> = kept
        .iter()
        .map(|r| r.bit.expect("kept events have x != 0"))
        .collect();
    transport.send(&Message::BasisAnnouncement {
        event_ids: event_ids.clone(),
        bases,
    })?;
    match expect_reply(transport, MessageType::SiftResponse)? {
        Message::SiftResponse { accepted } if accepted as usize == event_ids.len() => {
            Ok((event_ids, bits))
        }
        Message::SiftResponse { accepted } => Err(ProtocolError::SiftMismatch {
            announced: event_ids.len(),
            accepted,
        }),
        _ => unreachable!(),
    }
}

fn bob_session<T: Transport>(
    cfg: &SessionConfig,
    bob: &mut BobPeer,
    model: Option<&SelectionResult>,
    transport: &mut T,
) -> Result<BobResult, ProtocolError> {
    let (event_ids, raw_bits) = bob_sift(bob, transport)?;
    let mut out = BobResult {
        raw_bits,
        event_ids,
        reconciliation: None,
        advantage_used: None,
        final_key: None,
    };
    let Some(distill) = cfg.distill.as_ref() else {
        return Ok(out);
    };
    let advantage = model
        .map_or(0.0, |m| m.advantage_by(distill.estimator))
        .clamp(0.0, 1.0);
    out.advantage_used = Some(advantage);
    if out.raw_bits.is_empty() {
        return Ok(out);
    }
    let p = model.map_or(0.25, |m| m.post_error).clamp(1e-6, 0.49);
    let outcome = cascade_reconcile(&out.raw_bits, &distill.cascade, p, transport)?;
    let n = outcome.corrected.len();
    let length = if outcome.verified {
        final_key_length(
            n,
            outcome.ledger.total_disclosed(),
            advantage,
            distill.safety_margin,
        )?
    } else {
        0
    };
    if length > 0 {
        let seed = bob.draw_seed();
        transport.send(&Message::HashCheck {
            purpose: HashPurpose::PrivacyAmplification,
            seed,
            output_bits: length as u32,
            tag: Vec::new(),
        })?;
        expect_reply(transport, MessageType::HashVerdict)?;
        out.final_key = Some(toeplitz_hash(&outcome.corrected, length, seed));
    }
    out.reconciliation = Some((
        ReconciliationSummary {
            error_rate_estimate: p,
            initial_block: outcome.initial_block,
            corrections: outcome.corrections,
            ledger: outcome.ledger,
            verified: outcome.verified,
            residual_errors: 0,
            corrected_length: n,
        },
        outcome.corrected,
    ));
    Ok(out)
}

/// Full session: quantum phase, then sifting (and distillation, if
/// configured) with Alice serving on `alice_link` and Bob driving
/// `bob_link`. The transcript records every frame on Bob's link.
pub fn run_session<A, B>(
    cfg: &SessionConfig,
    alice_link: A,
    bob_link: B,
) -> Result<SessionOutput, SessionAbort>
where
    A: Transport + Send,
    B: Transport,
{
    let params = cfg.info_params()?;
    let threshold = cfg
        .threshold
        .resolve(&params)
        .map_err(ProtocolError::from)?;
    let model = selection_stats(&params, threshold).ok();
    let SimulatedEvents {
        alice,
        mut bob,
        eve,
    } = simulate_events(cfg, threshold);
    let sent = alice.into_sent();
    let mut server = AliceServer::new(sent.clone());

    let (bob_result, alice_result, transcript) = std::thread::scope(|scope| {
        let alice = scope.spawn(move || {
            let mut link = alice_link;
            server.serve(&mut link).map(|()| server)
        });
        let mut rec = Recorder::new(bob_link);
        let bob_result = bob_session(cfg, &mut bob, model.as_ref(), &mut rec);
        let (link, transcript) = rec.into_parts();
        drop(link);
        let alice_result = alice.join().expect("alice peer panicked");
        (bob_result, alice_result, transcript)
    });
    let (result, server) = match (bob_result, alice_result) {
        (_, Err(error)) | (Err(error), _) => return Err(SessionAbort { error, transcript }),
        (Ok(r), Ok(s)) => (r, s),
    };

    let measured = bob.into_measured();
    let raw = RawKeyPair {
        alice_bits: server.key().map(<[bool]>::to_vec).unwrap_or_default(),
        bob_bits: result.raw_bits,
        event_ids: result.event_ids,
    };
    let decided: Vec<&EventRecord> = measured.iter().filter(|r| r.bit.is_some()).collect();
    let pre_errors = decided
        .iter()
        .filter(|r| r.bit != Some(sent[r.event_id as usize].bit(r.basis)))
        .count();
    let eve_errors = eve.map(|eve| {
        raw.event_ids
            .iter()
            .zip(&raw.alice_bits)
            .filter(|&(&id, &a)| outcome_bit(eve.outcomes()[id as usize]) != Some(a))
            .count()
    });
    let reconciliation = result.reconciliation.map(|(mut summary, corrected)| {
        summary.residual_errors = corrected
            .iter()
            .zip(&raw.alice_bits)
            .filter(|(a, b)| a != b)
            .count();
        summary
    });
    let alice_final = server.final_key().map(<[bool]>::to_vec);
    let summary = SessionSummary {
        n_events: cfg.n_events,
        threshold,
        selected: raw.len(),
        decided: decided.len(),
        pre_errors,
        post_errors: raw.mismatches(),
        eve_errors,
        model,
        advantage_used: result.advantage_used,
        reconciliation,
        final_key_length: result.final_key.as_ref().map_or(0, Vec::len),
        final_keys_match: result
            .final_key
            .as_ref()
            .map(|b| alice_final.as_ref() == Some(b)),
    };
    Ok(SessionOutput {
        raw,
        summary,
        transcript,
        sent,
        measured,
        alice_final,
        bob_final: result.final_key,
    })
}

/// [`run_session`] over an in-process loopback.
pub fn run_local(cfg: &SessionConfig) -> Result<SessionOutput, SessionAbort> {
    let (bob_link, alice_link) = loopback_pair();
    run_session(cfg, alice_link, bob_link)
}
