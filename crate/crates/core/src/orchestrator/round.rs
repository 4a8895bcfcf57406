//! One protocol round: local evaluation, ballots, noise shares, masked
//! summation and winner selection.

use std::collections::BTreeMap;

use super::transport::{Submission, Transport};
use super::wire::RoundMessage;
use crate::error::{Error, Result};
use crate::partition::{evaluate_losses, ClientShard, LossOracle};
use crate::sampling::{derive_seed, seeded};
use crate::securesum::{
    masked_contribution, pairwise_masks, FixedPointCodec, PairwiseSeeds, ParticipantId, RoundTranscript,
};
use crate::voting::{
    add_client_noise, aggregate_plain, n_effective, select_winner, top_k_votes, AggregateVotes,
    HyperparameterGrid, VoteVector,
};

const STREAM_LOSSES: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_SEEDS: u64 = 3;

/// Noise shares are clamped only beyond this many standard deviations.
const CLAMP_SIGMAS: f64 = 12.0;

/// Clients that crash before submitting, by position in the shard list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FailurePlan {
    pub first_attempt: Vec<usize>,
    pub second_attempt: Vec<usize>,
}

impl FailurePlan {
    pub fn none() -> Self {
        Self::default()
    }

    fn for_attempt(&self, attempt: u32) -> &[usize] {
        if attempt == 0 {
            &self.first_attempt
        } else {
            &self.second_attempt
        }
    }
}

/// A round with every input resolved.
#[derive(Clone, Copy)]
pub struct RoundInput<'a> {
    pub round_id: u64,
    pub grid: &'a HyperparameterGrid,
    pub shards: &'a [ClientShard],
    pub oracle: &'a dyn LossOracle,
    /// Total aggregate noise standard deviation.
    pub sigma: f64,
    pub k: usize,
    pub dropout_tolerance: f64,
    /// Fractional and ring bits. The clamp range is widened when the noise
    /// share would otherwise be clipped.
    pub codec: FixedPointCodec,
    pub seed: u64,
    pub failures: &'a FailurePlan,
}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub winner: usize,
    pub transcript: RoundTranscript,
    /// Transcript of the first attempt when it aborted.
    pub aborted: Option<RoundTranscript>,
    /// Shard positions of the clients whose ballots entered the aggregate.
    pub contributors: Vec<usize>,
    pub n_effective: usize,
    pub codec: FixedPointCodec,
    /// Noise-free vote counts of the contributors. Analysis only.
    pub plain_aggregate: AggregateVotes,
    /// Per-candidate loss summed over all clients. Analysis only.
    pub loss_totals: Vec<f64>,
    /// Coordinates clamped by the codec across all contributions.
    pub clamped: usize,
}

/// Codec whose clamp range covers the vote plus `CLAMP_SIGMAS` noise-share
/// deviations.
pub fn sized_codec(base: FixedPointCodec, sigma: f64, n_eff: usize, n: usize) -> Result<FixedPointCodec> {
    let share_std = sigma / (n_eff as f64).sqrt();
    let codec = base.with_clamp_range(base.clamp_range().max(1.0 + CLAMP_SIGMAS * share_std))?;
    codec
        .check_capacity(n)
        .map_err(|e| Error::ProtocolSetup(format!("ring too small for {n} clients at sigma {sigma}: {e}")))?;
    Ok(codec)
}

pub fn run_round(input: &RoundInput<'_>, transport: &dyn Transport) -> Result<RoundOutcome> {
    let n = input.shards.len();
    if n == 0 {
        return Err(Error::ProtocolSetup("round has no clients".into()));
    }
    let p = input.grid.len();
    let loss_seed = derive_seed(input.seed, &[STREAM_LOSSES]);

    // Local evaluation happens once; a re-run reuses the ballots.
    let mut ballots = Vec::with_capacity(n);
    let mut loss_totals = vec![0.0; p];
    for shard in input.shards {
        let losses = evaluate_losses(input.oracle, shard, input.grid, loss_seed)?;
        for (t, l) in loss_totals.iter_mut().zip(losses.values()) {
            *t += l;
        }
        ballots.push(top_k_votes(&losses, input.k)?);
    }

    let everyone: Vec<usize> = (0..n).collect();
    let first = attempt(input, transport, &ballots, &everyone, 0)?;
    let (done, aborted) = match first {
        Attempt::Closed(done) => (done, None),
        Attempt::Aborted { transcript, survivors } => {
            if survivors.is_empty() {
                return Err(Error::RoundFailure {
                    round_id: input.round_id,
                    reason: "every client dropped out".into(),
                });
            }
            match attempt(input, transport, &ballots, &survivors, 1)? {
                Attempt::Closed(done) => (done, Some(transcript)),
                Attempt::Aborted { transcript, .. } => {
                    return Err(Error::RoundFailure {
                        round_id: input.round_id,
                        reason: format!(
                            "re-run aborted with {} further dropout(s)",
                            transcript.dropouts.len()
                        ),
                    })
                }
            }
        }
    };

    let contributed: Vec<VoteVector> = done.contributors.iter().map(|&i| ballots[i].clone()).collect();
    Ok(RoundOutcome {
        winner: done.winner,
        transcript: done.transcript,
        aborted,
        contributors: done.contributors,
        n_effective: done.n_effective,
        codec: done.codec,
        plain_aggregate: aggregate_plain(&contributed)?,
        loss_totals,
        clamped: done.clamped,
    })
}

struct Closed {
    winner: usize,
    transcript: RoundTranscript,
    contributors: Vec<usize>,
    n_effective: usize,
    codec: FixedPointCodec,
    clamped: usize,
}

enum Attempt {
    Closed(Closed),
    Aborted {
        transcript: RoundTranscript,
        survivors: Vec<usize>,
    },
}

/// One secure-summation attempt over the clients at `members` (shard
/// positions). Participant ids are dense in `0..members.len()`.
fn attempt(
    input: &RoundInput<'_>,
    transport: &dyn Transport,
    ballots: &[VoteVector],
    members: &[usize],
    attempt: u32,
) -> Result<Attempt> {
    let m = members.len();
    let p = input.grid.len();
    let n_eff = n_effective(m, input.dropout_tolerance)?;
    let codec = sized_codec(input.codec, input.sigma, n_eff, m)?;
    let ids: Vec<ParticipantId> = (0..m as u32).map(ParticipantId).collect();

    // Setup broadcast. Clients act on the decoded frames, not on local state.
    let announce = RoundMessage::decode(
        &RoundMessage::GridAnnounce {
            round_id: input.round_id,
            p: p as u32,
            k: input.k as u32,
            n: m as u32,
            n_effective: n_eff as u32,
            fractional_bits: codec.fractional_bits() as u8,
            ring_bits: codec.ring_bits() as u8,
        }
        .encode(),
    )?;
    let RoundMessage::GridAnnounce { n_effective: announced_n_eff, .. } = announce else {
        unreachable!("decoded the frame just encoded");
    };
    let dealt = PairwiseSeeds::derive(derive_seed(input.seed, &[STREAM_SEEDS, attempt as u64]), &ids);

    let failing = input.failures.for_attempt(attempt);
    let mut clamped = 0;
    let mut submissions = Vec::with_capacity(m);
    for (&pos, &me) in members.iter().zip(&ids) {
        if failing.contains(&pos) {
            submissions.push(Submission { participant: me, frame: None });
            continue;
        }
        let row = RoundMessage::SeedExchange {
            round_id: input.round_id,
            participant: me,
            seeds: dealt.row(me),
        }
        .encode();
        let RoundMessage::SeedExchange { seeds: row, .. } = RoundMessage::decode(&row)? else {
            unreachable!("decoded the frame just encoded");
        };
        let mut mine = PairwiseSeeds::new();
        for (peer, s) in row {
            mine.insert(me, peer, s);
        }

        let shard = &input.shards[pos];
        let mut rng = seeded(derive_seed(
            input.seed,
            &[STREAM_NOISE, attempt as u64, shard.client_id as u64],
        ));
        let noisy = add_client_noise(&ballots[pos], input.sigma, announced_n_eff as usize, &mut rng)?;
        let masks = pairwise_masks(me, &ids, &mine, p, &codec)?;
        let masked = masked_contribution(&noisy, &masks, &codec)?;
        clamped += masked.clamped;
        submissions.push(Submission {
            participant: me,
            frame: Some(
                RoundMessage::Contribution {
                    round_id: input.round_id,
                    participant: me,
                    elements: masked.elements,
                }
                .encode(),
            ),
        });
    }

    let coordinator = super::coordinator::Coordinator::new(input.round_id, attempt, ids.clone(), p, codec)?;
    let exchange = transport.exchange(coordinator, submissions)?;
    let transcript = exchange.outcome.transcript;

    match exchange.outcome.reply {
        RoundMessage::Abort { dropouts, .. } => {
            let dropped: Vec<usize> = dropouts.iter().map(|d| members[d.0 as usize]).collect();
            let survivors = members.iter().copied().filter(|p| !dropped.contains(p)).collect();
            Ok(Attempt::Aborted { transcript, survivors })
        }
        RoundMessage::Aggregate { .. } => {
            let replies: BTreeMap<_, _> = exchange.replies;
            let reply = replies
                .values()
                .next()
                .ok_or_else(|| Error::Transport("no client received the aggregate".into()))?;
            if replies.len() != m || replies.values().any(|r| r != reply) {
                return Err(Error::Transport("clients received differing aggregates".into()));
            }
            let RoundMessage::Aggregate { elements, contributors, .. } = RoundMessage::decode(reply)? else {
                return Err(Error::Wire("expected AGGREGATE reply".into()));
            };
            let values = elements.iter().map(|&e| codec.decode(e)).collect();
            let winner = select_winner(&AggregateVotes::new(values, contributors as usize))?;
            Ok(Attempt::Closed(Closed {
                winner,
                transcript,
                contributors: members.to_vec(),
                n_effective: n_eff,
                codec,
                clamped,
            }))
        }
        other => Err(Error::Wire(format!("unexpected coordinator reply {:?}", other.kind()))),
    }
}
