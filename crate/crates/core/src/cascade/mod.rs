//! Cascade information reconciliation and privacy amplification.
//!
//! Bob drives the exchange: for every pass he asks Alice for the parities of
//! the pass's blocks, binary-searches every block whose parity disagrees, and
//! after each correction re-examines the blocks of earlier passes that
//! contain the flipped bit. Pass 1 uses the identity order; later passes use
//! a public shuffle whose seed travels inside the request. Block sizes double
//! every pass.
//!
//! Only Alice's parity answers leak information about the key; every one of
//! them is counted in the [`LeakageLedger`].

mod toeplitz;

pub use toeplitz::{toeplitz_diagonal, toeplitz_hash};

use crate::rng::{streams, RngStream};
use crate::transport::{loopback_pair, Transport, TransportError};
use crate::wire::{HashPurpose, Message};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Length of the whole-key verification tag.
pub const VERIFY_TAG_BITS: usize = 64;

/// Classic Cascade block-length heuristic: `k1 ≈ 0.73 / p`.
pub const BLOCK_LENGTH_CONSTANT: f64 = 0.73;

pub const MIN_BLOCK_LENGTH: usize = 4;

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("key lengths differ: alice {alice}, bob {bob}")]
    LengthMismatch { alice: usize, bob: usize },
    #[error("key of {len} bits is shorter than the initial block {block}")]
    KeyTooShort { len: usize, block: usize },
    #[error("error rate {0} outside (0, 0.5)")]
    ErrorRate(f64),
    #[error("advantage {0} outside [0, 1]")]
    Advantage(f64),
    #[error("cascade needs at least one pass")]
    NoPasses,
    #[error("unexpected reply {0:?}")]
    UnexpectedReply(Box<Message>),
    #[error("peer returned {got} parities for {asked} ranges")]
    ParityCount { asked: usize, got: usize },
    #[error("range [{start}, {end}) outside key of {len} bits")]
    RangeOutOfBounds { start: u32, end: u32, len: usize },
    #[error("transport: {0}")]
    Transport(#[from] TransportError),
}

/// `round(0.73 / p)` clamped to `[4, key_len]`.
pub fn choose_block_length(error_rate: f64, key_len: usize) -> Result<usize, CascadeError> {
    if !(error_rate > 0.0 && error_rate < 0.5) {
        return Err(CascadeError::ErrorRate(error_rate));
    }
    let k = (BLOCK_LENGTH_CONSTANT / error_rate).round() as usize;
    Ok(k.max(MIN_BLOCK_LENGTH).min(key_len.max(1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockLength {
    /// Chosen from the expected error rate with [`choose_block_length`].
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeConfig {
    pub passes: u32,
    pub initial_block: BlockLength,
    /// Seeds the shuffles of passes ≥ 2 and the verification hash.
    pub seed: u64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            passes: 5,
            initial_block: BlockLength::Auto,
            seed: 0,
        }
    }
}

impl CascadeConfig {
    pub fn block_length(&self, error_rate: f64, key_len: usize) -> Result<usize, CascadeError> {
        match self.initial_block {
            BlockLength::Fixed(k) => Ok(k.max(1)),
            BlockLength::Auto => choose_block_length(error_rate, key_len),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageLedger {
    /// Parity bits Alice disclosed, across all passes.
    pub parity_bits_disclosed: u64,
    /// Parity bits per pass (back-corrections charged to the searched pass).
    pub per_pass: Vec<u64>,
    /// Bits of the final verification tag.
    pub hash_bits_disclosed: u64,
}

impl LeakageLedger {
    pub fn total_disclosed(&self) -> u64 {
        self.parity_bits_disclosed + self.hash_bits_disclosed
    }

    fn charge(&mut self, pass: usize, bits: u64) {
        if self.per_pass.len() <= pass {
            self.per_pass.resize(pass + 1, 0);
        }
        self.per_pass[pass] += bits;
        self.parity_bits_disclosed += bits;
    }
}

/// Public permutation of the key positions for one pass.
pub fn pass_permutation(len: usize, pass: u32, seed: u64) -> Vec<u32> {
    let mut perm: Vec<u32> = (0..len as u32).collect();
    if pass > 0 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        perm.shuffle(&mut rng);
    }
    perm
}

fn range_parity(bits: &[bool], perm: &[u32], start: usize, end: usize) -> bool {
    perm[start..end]
        .iter()
        .fold(false, |acc, &i| acc ^ bits[i as usize])
}

/// Alice's side: answers parity requests and hash checks over her key.
pub struct CascadeResponder {
    key: Vec<bool>,
    perms: HashMap<(u32, u64), Vec<u32>>,
}

impl CascadeResponder {
    pub fn new(key: Vec<bool>) -> Self {
        Self {
            key,
            perms: HashMap::new(),
        }
    }

    pub fn key(&self) -> &[bool] {
        &self.key
    }

    pub fn parities(
        &mut self,
        pass: u32,
        shuffle_seed: u64,
        key_length: u32,
        ranges: &[(u32, u32)],
    ) -> Result<Vec<bool>, CascadeError> {
        let len = self.key.len();
        if key_length as usize != len {
            return Err(CascadeError::LengthMismatch {
                alice: len,
                bob: key_length as usize,
            });
        }
        let perm = self
            .perms
            .entry((pass, shuffle_seed))
            .or_insert_with(|| pass_permutation(len, pass, shuffle_seed));
        ranges
            .iter()
            .map(|&(start, end)| {
                if end as usize > len || start >= end {
                    return Err(CascadeError::RangeOutOfBounds { start, end, len });
                }
                Ok(range_parity(&self.key, perm, start as usize, end as usize))
            })
            .collect()
    }

    /// Verification tag of Alice's key under `seed`.
    pub fn tag(&self, seed: u64, bits: usize) -> Vec<bool> {
        toeplitz_hash(&self.key, bits, seed)
    }
}

/// Result of a Cascade run on Bob's side.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeOutcome {
    pub corrected: Vec<bool>,
    pub ledger: LeakageLedger,
    pub initial_block: usize,
    pub corrections: usize,
    /// Whether the whole-key verification hash matched. A mismatch is the
    /// reconciliation-failure signal: the key must not be used.
    pub verified: bool,
}

impl CascadeOutcome {
    pub fn disclosed_fraction(&self) -> f64 {
        if self.corrected.is_empty() {
            0.0
        } else {
            self.ledger.total_disclosed() as f64 / self.corrected.len() as f64
        }
    }
}

struct PassState {
    shuffle_seed: u64,
    block: usize,
    perm: Vec<u32>,
    /// Position of each key bit in `perm`.
    pos: Vec<u32>,
    alice: Vec<bool>,
    bob: Vec<bool>,
}

impl PassState {
    fn block_of(&self, bit: usize) -> usize {
        self.pos[bit] as usize / self.block
    }

    fn block_range(&self, b: usize) -> (usize, usize) {
        let start = b * self.block;
        (start, (start + self.block).min(self.perm.len()))
    }
}

struct BobCascade<'a, T> {
    bits: Vec<bool>,
    transport: &'a mut T,
    ledger: LeakageLedger,
    passes: Vec<PassState>,
    corrections: usize,
}

impl<T: Transport> BobCascade<'_, T> {
    fn ask(&mut self, pass: usize, ranges: Vec<(u32, u32)>) -> Result<Vec<bool>, CascadeError> {
        let asked = ranges.len();
        let p = &self.passes[pass];
        self.transport.send(&Message::CascadeParityRequest {
            pass: pass as u32,
            shuffle_seed: p.shuffle_seed,
            key_length: self.bits.len() as u32,
            ranges,
        })?;
        match self.transport.recv()? {
            Message::CascadeParityResponse { parities } => {
                if parities.len() != asked {
                    return Err(CascadeError::ParityCount {
                        asked,
                        got: parities.len(),
                    });
                }
                self.ledger.charge(pass, asked as u64);
                Ok(parities)
            }
            other => Err(CascadeError::UnexpectedReply(Box::new(other))),
        }
    }

    fn start_pass(
        &mut self,
        pass: usize,
        block: usize,
        shuffle_seed: u64,
    ) -> Result<(), CascadeError> {
        let n = self.bits.len();
        let perm = pass_permutation(n, pass as u32, shuffle_seed);
        let mut pos = vec![0u32; n];
        for (i, &bit) in perm.iter().enumerate() {
            pos[bit as usize] = i as u32;
        }
        let blocks = n.div_ceil(block);
        let bob: Vec<bool> = (0..blocks)
            .map(|b| {
                let start = b * block;
                range_parity(&self.bits, &perm, start, (start + block).min(n))
            })
            .collect();
        self.passes.push(PassState {
            shuffle_seed,
            block,
            perm,
            pos,
            alice: Vec::new(),
            bob,
        });
        let ranges = (0..blocks)
            .map(|b| {
                let (s, e) = self.passes[pass].block_range(b);
                (s as u32, e as u32)
            })
            .collect();
        let alice = self.ask(pass, ranges)?;
        self.passes[pass].alice = alice;
        Ok(())
    }

    /// Corrects until every block of every started pass has matching parity.
    fn settle(&mut self) -> Result<(), CascadeError> {
        loop {
            let Some((pass, odd)) = self.passes.iter().enumerate().find_map(|(i, p)| {
                let odd: Vec<usize> = (0..p.bob.len())
                    .filter(|&b| p.bob[b] != p.alice[b])
                    .collect();
                (!odd.is_empty()).then_some((i, odd))
            }) else {
                return Ok(());
            };
            for bit in self.binary_search(pass, &odd)? {
                self.flip(bit);
            }
        }
    }

    /// Locates one error in each of the given odd-parity blocks of a pass.
    /// The blocks are disjoint, so their searches run in lock-step.
    fn binary_search(&mut self, pass: usize, blocks: &[usize]) -> Result<Vec<usize>, CascadeError> {
        let mut spans: Vec<(usize, usize)> = blocks
            .iter()
            .map(|&b| self.passes[pass].block_range(b))
            .collect();
        loop {
            let active: Vec<usize> = (0..spans.len())
                .filter(|&i| spans[i].1 - spans[i].0 > 1)
                .collect();
            if active.is_empty() {
                break;
            }
            let halves: Vec<(usize, usize)> = active
                .iter()
                .map(|&i| {
                    let (s, e) = spans[i];
                    (s, s + (e - s) / 2)
                })
                .collect();
            let ranges = halves.iter().map(|&(s, m)| (s as u32, m as u32)).collect();
            let alice = self.ask(pass, ranges)?;
            let perm = &self.passes[pass].perm;
            for ((&i, &(s, m)), a) in active.iter().zip(&halves).zip(alice) {
                if range_parity(&self.bits, perm, s, m) != a {
                    spans[i].1 = m;
                } else {
                    spans[i].0 = m;
                }
            }
        }
        let perm = &self.passes[pass].perm;
        Ok(spans.iter().map(|&(s, _)| perm[s] as usize).collect())
    }

    fn flip(&mut self, bit: usize) {
        self.bits[bit] = !self.bits[bit];
        self.corrections += 1;
        for p in &mut self.passes {
            let b = p.block_of(bit);
            p.bob[b] = !p.bob[b];
        }
    }
}

/// Bob's side of Cascade. Alice must be serving on the other end of
/// `transport` (see [`CascadeResponder`]). `error_rate` only feeds the
/// automatic block length.
pub fn cascade_reconcile<T: Transport>(
    bob_bits: &[bool],
    cfg: &CascadeConfig,
    error_rate: f64,
    transport: &mut T,
) -> Result<CascadeOutcome, CascadeError> {
    if cfg.passes == 0 {
        return Err(CascadeError::NoPasses);
    }
    let n = bob_bits.len();
    let mut seeds = RngStream::new(cfg.seed, streams::CASCADE);
    if n == 0 {
        return Ok(CascadeOutcome {
            corrected: Vec::new(),
            ledger: LeakageLedger::default(),
            initial_block: 0,
            corrections: 0,
            verified: true,
        });
    }
    let k1 = cfg.block_length(error_rate, n)?;
    if n < k1 {
        return Err(CascadeError::KeyTooShort { len: n, block: k1 });
    }
    let mut bob = BobCascade {
        bits: bob_bits.to_vec(),
        transport,
        ledger: LeakageLedger::default(),
        passes: Vec::new(),
        corrections: 0,
    };
    for pass in 0..cfg.passes as usize {
        let block = k1.saturating_mul(1 << pass.min(40)).min(n);
        let shuffle_seed = if pass == 0 { 0 } else { seeds.next_u64() };
        bob.start_pass(pass, block, shuffle_seed)?;
        bob.settle()?;
    }

    let hash_seed = seeds.next_u64();
    let tag = toeplitz_hash(&bob.bits, VERIFY_TAG_BITS, hash_seed);
    bob.transport.send(&Message::HashCheck {
        purpose: HashPurpose::Verify,
        seed: hash_seed,
        output_bits: VERIFY_TAG_BITS as u32,
        tag,
    })?;
    bob.ledger.hash_bits_disclosed += VERIFY_TAG_BITS as u64;
    let verified = match bob.transport.recv()? {
        Message::HashVerdict {
            purpose: HashPurpose::Verify,
            accepted,
        } => accepted,
        other => return Err(CascadeError::UnexpectedReply(Box::new(other))),
    };
    Ok(CascadeOutcome {
        corrected: bob.bits,
        ledger: bob.ledger,
        initial_block: k1,
        corrections: bob.corrections,
        verified,
    })
}

/// Serves parity requests and verification checks until the peer closes.
pub fn serve_cascade<T: Transport>(
    responder: &mut CascadeResponder,
    transport: &mut T,
) -> Result<(), CascadeError> {
    loop {
        let msg = match transport.recv() {
            Ok(m) => m,
            Err(TransportError::Closed) => return Ok(()),
            Err(e) => return Err(e.into()),
        };
        let reply = match msg {
            Message::CascadeParityRequest {
                pass,
                shuffle_seed,
                key_length,
                ranges,
            } => Message::CascadeParityResponse {
                parities: responder.parities(pass, shuffle_seed, key_length, &ranges)?,
            },
            Message::HashCheck {
                purpose: HashPurpose::Verify,
                seed,
                output_bits,
                tag,
            } => Message::HashVerdict {
                purpose: HashPurpose::Verify,
                accepted: responder.tag(seed, output_bits as usize) == tag,
            },
            other => return Err(CascadeError::UnexpectedReply(Box::new(other))),
        };
        transport.send(&reply)?;
    }
}

/// Runs both sides of Cascade in-process over a loopback transport.
pub fn reconcile_local(
    alice_bits: &[bool],
    bob_bits: &[bool],
    cfg: &CascadeConfig,
    error_rate: f64,
) -> Result<CascadeOutcome, CascadeError> {
    reconcile_local_recorded(alice_bits, bob_bits, cfg, error_rate).map(|(o, _)| o)
}

/// Like [`reconcile_local`], also returning Bob's transcript.
pub fn reconcile_local_recorded(
    alice_bits: &[bool],
    bob_bits: &[bool],
    cfg: &CascadeConfig,
    error_rate: f64,
) -> Result<(CascadeOutcome, crate::transport::Transcript), CascadeError> {
    if alice_bits.len() != bob_bits.len() {
        return Err(CascadeError::LengthMismatch {
            alice: alice_bits.len(),
            bob: bob_bits.len(),
        });
    }
    let (bob_end, mut alice_end) = loopback_pair();
    let mut responder = CascadeResponder::new(alice_bits.to_vec());
    std::thread::scope(|scope| {
        let alice = scope.spawn(move || serve_cascade(&mut responder, &mut alice_end));
        let mut rec = crate::transport::Recorder::new(bob_end);
        let result = cascade_reconcile(bob_bits, cfg, error_rate, &mut rec);
        let (bob_end, transcript) = rec.into_parts();
        drop(bob_end);
        let served = alice.join().expect("alice thread panicked");
        let outcome = result?;
        served?;
        Ok((outcome, transcript))
    })
}

/// Distilled key after privacy amplification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FinalKey {
    pub bits: Vec<bool>,
    pub length: usize,
}

/// `floor((n − disclosed) · advantage) − safety_margin`, floored at zero.
pub fn final_key_length(
    corrected_len: usize,
    disclosed: u64,
    advantage: f64,
    safety_margin: usize,
) -> Result<usize, CascadeError> {
    if !(0.0..=1.0).contains(&advantage) {
        return Err(CascadeError::Advantage(advantage));
    }
    let usable = corrected_len.saturating_sub(disclosed as usize) as f64;
    // The epsilon keeps products such as 249 × 0.76 from flooring one short
    // when the decimal advantage is not exactly representable.
    let raw = (usable * advantage * (1.0 + 1e-12)).floor() as usize;
    Ok(raw.saturating_sub(safety_margin))
}

/// Compresses the reconciled key with a seeded Toeplitz hash down to the
/// length its information advantage supports.
pub fn privacy_amplify(
    corrected: &[bool],
    advantage: f64,
    leakage: &LeakageLedger,
    safety_margin: usize,
    seed: u64,
) -> Result<FinalKey, CascadeError> {
    let length = final_key_length(
        corrected.len(),
        leakage.total_disclosed(),
        advantage,
        safety_margin,
    )?;
    Ok(FinalKey {
        bits: toeplitz_hash(corrected, length, seed),
        length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noisy_copy(bits: &[bool], flips: &[usize]) -> Vec<bool> {
        let mut out = bits.to_vec();
        for &i in flips {
            out[i] = !out[i];
        }
        out
    }

    fn random_bits(n: usize, seed: u64) -> Vec<bool> {
        let mut rng = RngStream::new(seed, 77);
        (0..n).map(|_| rng.bit()).collect()
    }

    #[test]
    fn block_length_rule() {
        assert_eq!(choose_block_length(0.06, 10_000).unwrap(), 12);
        assert_eq!(choose_block_length(0.076, 10_000).unwrap(), 10);
        assert_eq!(choose_block_length(0.49, 10_000).unwrap(), 4);
        assert_eq!(choose_block_length(0.001, 100).unwrap(), 100);
        assert!(matches!(
            choose_block_length(0.0, 10),
            Err(CascadeError::ErrorRate(_))
        ));
        assert!(matches!(
            choose_block_length(0.5, 10),
            Err(CascadeError::ErrorRate(_))
        ));
    }

    #[test]
    fn identical_keys_leak_only_top_level_parities() {
        let a = random_bits(1000, 1);
        let cfg = CascadeConfig {
            passes: 1,
            initial_block: BlockLength::Fixed(10),
            seed: 3,
        };
        let out = reconcile_local(&a, &a, &cfg, 0.05).unwrap();
        assert_eq!(out.corrections, 0);
        assert_eq!(out.ledger.parity_bits_disclosed, 100);
        assert!(out.verified);
    }

    #[test]
    fn single_error_found_by_binary_search() {
        // 32 bits, blocks of 8: 4 top-level parities + log2(8) = 3 searches.
        let a = random_bits(32, 2);
        let b = noisy_copy(&a, &[13]);
        let cfg = CascadeConfig {
            passes: 1,
            initial_block: BlockLength::Fixed(8),
            seed: 0,
        };
        let out = reconcile_local(&a, &b, &cfg, 0.05).unwrap();
        assert_eq!(out.corrected, a);
        assert_eq!(out.corrections, 1);
        assert_eq!(out.ledger.parity_bits_disclosed, 4 + 3);
        assert_eq!(out.ledger.per_pass, vec![7]);
        assert_eq!(out.ledger.hash_bits_disclosed, VERIFY_TAG_BITS as u64);
    }

    #[test]
    fn even_errors_in_a_block_need_later_passes() {
        let a = random_bits(64, 3);
        let b = noisy_copy(&a, &[1, 2]);
        let one = CascadeConfig {
            passes: 1,
            initial_block: BlockLength::Fixed(8),
            seed: 5,
        };
        let out = reconcile_local(&a, &b, &one, 0.05).unwrap();
        assert_eq!(out.corrections, 0);
        assert!(!out.verified);

        let four = CascadeConfig { passes: 4, ..one };
        let out = reconcile_local(&a, &b, &four, 0.05).unwrap();
        assert_eq!(out.corrected, a);
        assert!(out.verified);
    }

    #[test]
    fn length_mismatch_rejected() {
        let err =
            reconcile_local(&[true; 10], &[true; 11], &CascadeConfig::default(), 0.1).unwrap_err();
        assert!(matches!(
            err,
            CascadeError::LengthMismatch { alice: 10, bob: 11 }
        ));
    }

    #[test]
    fn key_shorter_than_block_rejected() {
        let cfg = CascadeConfig {
            initial_block: BlockLength::Fixed(16),
            ..CascadeConfig::default()
        };
        let err = reconcile_local(&[true; 10], &[true; 10], &cfg, 0.1).unwrap_err();
        assert!(matches!(
            err,
            CascadeError::KeyTooShort { len: 10, block: 16 }
        ));
    }

    #[test]
    fn responder_checks_lengths_and_ranges() {
        let mut r = CascadeResponder::new(vec![true, false, true]);
        assert!(matches!(
            r.parities(0, 0, 4, &[(0, 1)]),
            Err(CascadeError::LengthMismatch { .. })
        ));
        assert!(matches!(
            r.parities(0, 0, 3, &[(1, 4)]),
            Err(CascadeError::RangeOutOfBounds { .. })
        ));
        assert_eq!(
            r.parities(0, 0, 3, &[(0, 3), (1, 2)]).unwrap(),
            vec![false, false]
        );
    }

    #[test]
    fn table_rates_through_length_rule() {
        assert_eq!(final_key_length(249, 0, 0.76, 0).unwrap(), 189);
        assert_eq!(final_key_length(80, 0, 0.49, 0).unwrap(), 39);
        assert_eq!(final_key_length(415, 166, 0.76, 0).unwrap(), 189);
        assert_eq!(final_key_length(249, 0, 0.0, 0).unwrap(), 0);
        assert_eq!(final_key_length(249, 0, 0.76, 500).unwrap(), 0);
        assert_eq!(final_key_length(10, 20, 0.5, 0).unwrap(), 0);
        assert!(final_key_length(10, 0, 1.5, 0).is_err());
        assert!(final_key_length(10, 0, -0.1, 0).is_err());
    }

    #[test]
    fn privacy_amplify_is_deterministic() {
        let a = random_bits(500, 4);
        let ledger = LeakageLedger {
            parity_bits_disclosed: 100,
            per_pass: vec![100],
            hash_bits_disclosed: 0,
        };
        let k1 = privacy_amplify(&a, 0.5, &ledger, 10, 99).unwrap();
        let k2 = privacy_amplify(&a, 0.5, &ledger, 10, 99).unwrap();
        assert_eq!(k1, k2);
        assert_eq!(k1.length, 190);
        assert_eq!(k1.bits.len(), 190);
        let empty = privacy_amplify(&a, 0.0, &ledger, 0, 99).unwrap();
        assert!(empty.bits.is_empty());
    }
}
