use super::peers::SentEvent;
use super::ProtocolError;
use crate::cascade::{toeplitz_hash, CascadeResponder};
use crate::transport::{Transport, TransportError};
use crate::wire::{HashPurpose, Message};

/// Alice's classical-channel state machine. She only ever answers; every
/// exchange is opened by Bob.
pub struct AliceServer {
    sent: Vec<SentEvent>,
    sifted: Option<Sifted>,
    final_key: Option<Vec<bool>>,
}

struct Sifted {
    event_ids: Vec<u32>,
    responder: CascadeResponder,
}

impl AliceServer {
    pub fn new(sent: Vec<SentEvent>) -> Self {
        Self {
            sent,
            sifted: None,
            final_key: None,
        }
    }

    /// Alice's sifted key, once Bob has announced.
    pub fn key(&self) -> Option<&[bool]> {
        self.sifted.as_ref().map(|s| s.responder.key())
    }

    pub fn sifted_ids(&self) -> Option<&[u32]> {
        self.sifted.as_ref().map(|s| s.event_ids.as_slice())
    }

    pub fn final_key(&self) -> Option<&[bool]> {
        self.final_key.as_deref()
    }

    pub fn handle(&mut self, msg: Message) -> Result<Message, ProtocolError> {
        let kind = msg.kind();
        if !kind.sent_by_bob() {
            return Err(ProtocolError::WrongDirection(kind));
        }
        if let Message::BasisAnnouncement { event_ids, bases } = msg {
            if self.sifted.is_some() {
                return Err(ProtocolError::RepeatedAnnouncement);
            }
            let key = sift_alice(&self.sent, &event_ids, &bases)?;
            let accepted = key.len() as u32;
            self.sifted = Some(Sifted {
                event_ids,
                responder: CascadeResponder::new(key),
            });
            return Ok(Message::SiftResponse { accepted });
        }
        let Some(sifted) = self.sifted.as_mut() else {
            return Err(ProtocolError::OutOfPhase(kind));
        };
        match msg {
            Message::CascadeParityRequest {
                pass,
                shuffle_seed,
                key_length,
                ranges,
            } => Ok(Message::CascadeParityResponse {
                parities: sifted
                    .responder
                    .parities(pass, shuffle_seed, key_length, &ranges)?,
            }),
            Message::HashCheck {
                purpose: HashPurpose::Verify,
                seed,
                output_bits,
                tag,
            } => Ok(Message::HashVerdict {
                purpose: HashPurpose::Verify,
                accepted: sifted.responder.tag(seed, output_bits as usize) == tag,
            }),
            Message::HashCheck {
                purpose: HashPurpose::PrivacyAmplification,
                seed,
                output_bits,
                ..
            } => {
                if self.final_key.is_some() {
                    return Err(ProtocolError::OutOfPhase(kind));
                }
                let key = sifted.responder.key();
                self.final_key = Some(toeplitz_hash(key, output_bits as usize, seed));
                Ok(Message::HashVerdict {
                    purpose: HashPurpose::PrivacyAmplification,
                    accepted: true,
                })
            }
            _ => Err(ProtocolError::OutOfPhase(kind)),
        }
    }

    /// Answers Bob until he closes the link.
    pub fn serve<T: Transport>(&mut self, transport: &mut T) -> Result<(), ProtocolError> {
        loop {
            let msg = match transport.recv() {
                Ok(m) => m,
                Err(TransportError::Closed) => return Ok(()),
                Err(e) => return Err(e.into()),
            };
            let reply = self.handle(msg)?;
            transport.send(&reply)?;
        }
    }
}

/// Alice's key bits for an announcement. Ids must be known and strictly
/// increasing.
pub fn sift_alice(
    sent: &[SentEvent],
    event_ids: &[u32],
    bases: &[crate::channel::Basis],
) -> Result<Vec<bool>, ProtocolError> {
    if event_ids.len() != bases.len() {
        return Err(ProtocolError::AnnouncementShape {
            ids: event_ids.len(),
            bases: bases.len(),
        });
    }
    let mut prev: Option<u32> = None;
    event_ids
        .iter()
        .zip(bases)
        .map(|(&id, &basis)| {
            match prev {
                Some(p) if p == id => return Err(ProtocolError::DuplicateEvent(id)),
                Some(p) if p > id => return Err(ProtocolError::OutOfOrder { prev: p, id }),
                _ => {}
            }
            prev = Some(id);
            let ev = sent
                .get(id as usize)
                .ok_or(ProtocolError::UnknownEvent(id))?;
            Ok(ev.bit(basis))
        })
        .collect()
}
