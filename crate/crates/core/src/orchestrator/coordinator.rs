//! Coordinator side of the summation phase.
//!
//! The coordinator accepts CONTRIBUTION frames until the transport closes
//! the collection window, then answers with AGGREGATE when every expected
//! participant contributed and ABORT otherwise.

use std::collections::BTreeMap;

use super::wire::RoundMessage;
use crate::error::{Error, Result};
use crate::securesum::{ring_sum, FixedPointCodec, ParticipantId, RingElement, RoundTranscript};

#[derive(Debug, Clone)]
pub struct Coordinator {
    round_id: u64,
    attempt: u32,
    participants: Vec<ParticipantId>,
    p: usize,
    codec: FixedPointCodec,
    received: BTreeMap<ParticipantId, Vec<RingElement>>,
}

/// What the coordinator knows once collection is closed.
#[derive(Debug, Clone)]
pub struct CoordinatorOutcome {
    pub transcript: RoundTranscript,
    pub reply: RoundMessage,
}

impl CoordinatorOutcome {
    pub fn is_abort(&self) -> bool {
        matches!(self.reply, RoundMessage::Abort { .. })
    }
}

impl Coordinator {
    pub fn new(
        round_id: u64,
        attempt: u32,
        participants: Vec<ParticipantId>,
        p: usize,
        codec: FixedPointCodec,
    ) -> Result<Self> {
        if participants.is_empty() {
            return Err(Error::ProtocolSetup("round has no participants".into()));
        }
        codec.check_capacity(participants.len())?;
        Ok(Self {
            round_id,
            attempt,
            participants,
            p,
            codec,
            received: BTreeMap::new(),
        })
    }

    pub fn round_id(&self) -> u64 {
        self.round_id
    }

    pub fn expected(&self) -> usize {
        self.participants.len()
    }

    pub fn received(&self) -> usize {
        self.received.len()
    }

    /// Validates and stores one CONTRIBUTION frame.
    pub fn receive(&mut self, frame: &[u8]) -> Result<ParticipantId> {
        let (participant, elements) = match RoundMessage::decode(frame)? {
            RoundMessage::Contribution {
                round_id,
                participant,
                elements,
            } if round_id == self.round_id => (participant, elements),
            RoundMessage::Contribution { round_id, .. } => {
                return Err(Error::Wire(format!(
                    "contribution for round {round_id} sent to round {}",
                    self.round_id
                )))
            }
            other => {
                return Err(Error::Wire(format!(
                    "coordinator expected CONTRIBUTION, got {:?}",
                    other.kind()
                )))
            }
        };
        if !self.participants.contains(&participant) {
            return Err(Error::Wire(format!("contribution from non-participant {participant}")));
        }
        if elements.len() != self.p {
            return Err(Error::Wire(format!(
                "participant {participant} sent {} elements, expected {}",
                elements.len(),
                self.p
            )));
        }
        if elements.iter().any(|&e| e & !self.codec.mask() != 0) {
            return Err(Error::Wire(format!("participant {participant} sent elements outside the ring")));
        }
        if self.received.insert(participant, elements).is_some() {
            return Err(Error::Wire(format!("duplicate contribution from {participant}")));
        }
        Ok(participant)
    }

    /// Ends collection. Transcript frames are ordered by participant id so
    /// that the hash does not depend on arrival order.
    pub fn close(self) -> CoordinatorOutcome {
        let dropouts: Vec<ParticipantId> = self
            .participants
            .iter()
            .filter(|id| !self.received.contains_key(id))
            .copied()
            .collect();
        let mut frames: Vec<Vec<u8>> = self
            .received
            .iter()
            .map(|(&participant, elements)| {
                RoundMessage::Contribution {
                    round_id: self.round_id,
                    participant,
                    elements: elements.clone(),
                }
                .encode()
            })
            .collect();
        let (reply, decoded) = if dropouts.is_empty() {
            let vectors: Vec<&[RingElement]> = self.received.values().map(Vec::as_slice).collect();
            let sum = ring_sum(&vectors, self.p, &self.codec).expect("lengths validated on receipt");
            let decoded = sum.iter().map(|&e| self.codec.decode(e)).collect();
            (
                RoundMessage::Aggregate {
                    round_id: self.round_id,
                    contributors: self.received.len() as u32,
                    elements: sum,
                },
                Some(decoded),
            )
        } else {
            (
                RoundMessage::Abort {
                    round_id: self.round_id,
                    dropouts: dropouts.clone(),
                },
                None,
            )
        };
        frames.push(reply.encode());
        CoordinatorOutcome {
            transcript: RoundTranscript {
                round_id: self.round_id,
                attempt: self.attempt,
                participants: self.participants,
                contributions: self.received.into_iter().collect(),
                dropouts,
                decoded_aggregate: decoded,
                frames,
            },
            reply,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn contribution(round_id: u64, id: u32, elements: Vec<u64>) -> Vec<u8> {
        RoundMessage::Contribution {
            round_id,
            participant: ParticipantId(id),
            elements,
        }
        .encode()
    }

    fn coordinator(n: u32, p: usize) -> Coordinator {
        Coordinator::new(5, 0, (0..n).map(ParticipantId).collect(), p, FixedPointCodec::default()).unwrap()
    }

    #[test]
    fn aggregates_when_complete() {
        let codec = FixedPointCodec::default();
        let mut c = coordinator(2, 2);
        c.receive(&contribution(5, 1, vec![codec.encode(1.0).0, codec.encode(-2.0).0])).unwrap();
        c.receive(&contribution(5, 0, vec![codec.encode(0.5).0, codec.encode(0.0).0])).unwrap();
        let out = c.close();
        assert!(!out.is_abort());
        assert_eq!(out.transcript.decoded_aggregate, Some(vec![1.5, -2.0]));
        assert_eq!(out.transcript.message_count(), 3);
    }

    #[test]
    fn aborts_with_dropout_set() {
        let mut c = coordinator(3, 1);
        c.receive(&contribution(5, 2, vec![0])).unwrap();
        let out = c.close();
        assert_eq!(
            out.reply,
            RoundMessage::Abort {
                round_id: 5,
                dropouts: vec![ParticipantId(0), ParticipantId(1)]
            }
        );
        assert!(out.transcript.decoded_aggregate.is_none());
    }

    #[test]
    fn rejects_bad_contributions() {
        let mut c = coordinator(2, 2);
        assert!(c.receive(&contribution(6, 0, vec![0, 0])).is_err());
        assert!(c.receive(&contribution(5, 7, vec![0, 0])).is_err());
        assert!(c.receive(&contribution(5, 0, vec![0])).is_err());
        c.receive(&contribution(5, 0, vec![0, 0])).unwrap();
        assert!(c.receive(&contribution(5, 0, vec![0, 0])).is_err());
        let abort = RoundMessage::Abort { round_id: 5, dropouts: vec![] }.encode();
        assert!(c.receive(&abort).is_err());
    }
}
