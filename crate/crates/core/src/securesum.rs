//! Simulated secure summation by pairwise additive masking.
//!
//! Noisy ballots are encoded as fixed-point integers in `Z / 2^ring_bits`.
//! Every unordered pair of participants `(i, j)` shares a seed; the lower id
//! adds the seed's pseudorandom stream to its contribution and the higher id
//! subtracts it, so the masks cancel in the full sum and the coordinator
//! learns only the aggregate. Honest-but-curious only: there is no mask
//! recovery, a missing contribution aborts the round.
//!
//! # Mask stream
//!
//! Element `t` of the mask for seed `s` is `splitmix64_at(s, t)` reduced to
//! the ring, where `splitmix64_at(s, t) = mix64(s + (t + 1) * 0x9E3779B97F4A7C15)`
//! (wrapping arithmetic) and `mix64` is the SplitMix64 finaliser. This is
//! the whole definition, so transcripts are portable.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sampling::{derive_seed, splitmix64_at};
use crate::voting::NoisyVoteVector;

/// An element of `Z / 2^ring_bits`, stored in the low bits of a `u64`.
pub type RingElement = u64;

pub const DEFAULT_FRACTIONAL_BITS: u32 = 20;
pub const DEFAULT_RING_BITS: u32 = 64;
pub const DEFAULT_CLAMP_RANGE: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParticipantId(pub u32);

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Fixed-point encoding of reals into the ring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointCodec {
    fractional_bits: u32,
    ring_bits: u32,
    clamp_range: f64,
}

impl Default for FixedPointCodec {
    fn default() -> Self {
        Self {
            fractional_bits: DEFAULT_FRACTIONAL_BITS,
            ring_bits: DEFAULT_RING_BITS,
            clamp_range: DEFAULT_CLAMP_RANGE,
        }
    }
}

impl FixedPointCodec {
    pub fn new(fractional_bits: u32, ring_bits: u32, clamp_range: f64) -> Result<Self> {
        if !(8..=40).contains(&fractional_bits) {
            return Err(Error::invalid(format!(
                "fractional bits must lie in [8, 40], got {fractional_bits}"
            )));
        }
        if !(16..=64).contains(&ring_bits) || ring_bits <= fractional_bits + 1 {
            return Err(Error::invalid(format!(
                "ring bits must lie in [16, 64] and exceed fractional bits + 1, got {ring_bits}"
            )));
        }
        if !(clamp_range > 0.0) || !clamp_range.is_finite() {
            return Err(Error::invalid(format!("clamp range must be positive, got {clamp_range}")));
        }
        let codec = Self {
            fractional_bits,
            ring_bits,
            clamp_range,
        };
        codec.check_capacity(1)?;
        Ok(codec)
    }

    pub fn with_clamp_range(self, clamp_range: f64) -> Result<Self> {
        Self::new(self.fractional_bits, self.ring_bits, clamp_range)
    }

    pub fn fractional_bits(&self) -> u32 {
        self.fractional_bits
    }

    pub fn ring_bits(&self) -> u32 {
        self.ring_bits
    }

    pub fn clamp_range(&self) -> f64 {
        self.clamp_range
    }

    /// Quantisation step `2^-fractional_bits`.
    pub fn resolution(&self) -> f64 {
        (-(self.fractional_bits as f64)).exp2()
    }

    #[inline]
    pub fn mask(&self) -> u64 {
        if self.ring_bits == 64 {
            u64::MAX
        } else {
            (1u64 << self.ring_bits) - 1
        }
    }

    /// Largest magnitude a decoded ring element can represent.
    pub fn max_magnitude(&self) -> f64 {
        ((1u64 << (self.ring_bits - 1)) - 1) as f64 * self.resolution()
    }

    /// Errors if a sum of `n` clamped values could wrap around the ring.
    pub fn check_capacity(&self, n: usize) -> Result<()> {
        let needed = self.clamp_range * n as f64;
        if needed >= self.max_magnitude() {
            return Err(Error::ProtocolSetup(format!(
                "ring of {} bits with {} fractional bits cannot hold {n} x {}",
                self.ring_bits, self.fractional_bits, self.clamp_range
            )));
        }
        Ok(())
    }

    /// Round-to-nearest encoding. Returns the element and whether the input
    /// had to be clamped to `±clamp_range`.
    pub fn encode(&self, value: f64) -> (RingElement, bool) {
        let clamped = value.is_nan() || value.abs() > self.clamp_range;
        let v = if value.is_nan() {
            0.0
        } else {
            value.clamp(-self.clamp_range, self.clamp_range)
        };
        let scaled = (v * (self.fractional_bits as f64).exp2()).round() as i64;
        ((scaled as u64) & self.mask(), clamped)
    }

    pub fn decode(&self, element: RingElement) -> f64 {
        let x = element & self.mask();
        let signed = if self.ring_bits == 64 {
            x as i64
        } else if x >> (self.ring_bits - 1) == 1 {
            (x as i64) - (1i64 << self.ring_bits)
        } else {
            x as i64
        };
        signed as f64 * self.resolution()
    }

    #[inline]
    pub fn add(&self, a: RingElement, b: RingElement) -> RingElement {
        a.wrapping_add(b) & self.mask()
    }

    #[inline]
    pub fn sub(&self, a: RingElement, b: RingElement) -> RingElement {
        a.wrapping_sub(b) & self.mask()
    }
}

/// Per-pair mask seeds for one round, keyed by the unordered pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairwiseSeeds {
    seeds: BTreeMap<(ParticipantId, ParticipantId), u64>,
}

impl PairwiseSeeds {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stand-in for pairwise key agreement: every pair's seed is derived
    /// from the round seed and the two ids.
    pub fn derive(round_seed: u64, participants: &[ParticipantId]) -> Self {
        let mut seeds = Self::new();
        for (a, &i) in participants.iter().enumerate() {
            for &j in &participants[a + 1..] {
                let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                seeds.insert(i, j, derive_seed(round_seed, &[0x5EED, lo.0 as u64, hi.0 as u64]));
            }
        }
        seeds
    }

    pub fn insert(&mut self, a: ParticipantId, b: ParticipantId, seed: u64) {
        let key = if a < b { (a, b) } else { (b, a) };
        self.seeds.insert(key, seed);
    }

    pub fn get(&self, a: ParticipantId, b: ParticipantId) -> Option<u64> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.seeds.get(&key).copied()
    }

    /// All seeds `me` holds, as `(peer, seed)` in peer order.
    pub fn row(&self, me: ParticipantId) -> Vec<(ParticipantId, u64)> {
        self.seeds
            .iter()
            .filter_map(|(&(a, b), &s)| {
                if a == me {
                    Some((b, s))
                } else if b == me {
                    Some((a, s))
                } else {
                    None
                }
            })
            .collect::<BTreeMap<_, _>>()
            .into_iter()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }
}

/// Mask stream of one seed, reduced to the ring.
pub fn mask_stream(seed: u64, p: usize, codec: &FixedPointCodec) -> impl Iterator<Item = RingElement> + '_ {
    (0..p as u64).map(move |t| splitmix64_at(seed, t) & codec.mask())
}

/// The combined pairwise mask of participant `me` against every other
/// member of `participants`.
pub fn pairwise_masks(
    me: ParticipantId,
    participants: &[ParticipantId],
    seeds: &PairwiseSeeds,
    p: usize,
    codec: &FixedPointCodec,
) -> Result<Vec<RingElement>> {
    let mut mask = vec![0u64; p];
    for &other in participants {
        if other == me {
            continue;
        }
        let seed = seeds.get(me, other).ok_or_else(|| {
            Error::ProtocolSetup(format!("no shared seed between participants {me} and {other}"))
        })?;
        for (m, r) in mask.iter_mut().zip(mask_stream(seed, p, codec)) {
            *m = if me < other {
                codec.add(*m, r)
            } else {
                codec.sub(*m, r)
            };
        }
    }
    Ok(mask)
}

/// Encoded and masked ballot, with the number of coordinates that had to
/// be clamped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedContribution {
    pub elements: Vec<RingElement>,
    pub clamped: usize,
}

pub fn masked_contribution(
    noisy_votes: &NoisyVoteVector,
    masks: &[RingElement],
    codec: &FixedPointCodec,
) -> Result<MaskedContribution> {
    if noisy_votes.len() != masks.len() {
        return Err(Error::invalid(format!(
            "ballot has {} coordinates but mask has {}",
            noisy_votes.len(),
            masks.len()
        )));
    }
    let mut clamped = 0;
    let elements = noisy_votes
        .values()
        .iter()
        .zip(masks)
        .map(|(&v, &m)| {
            let (e, c) = codec.encode(v);
            clamped += c as usize;
            codec.add(e, m)
        })
        .collect();
    Ok(MaskedContribution { elements, clamped })
}

/// Coordinate-wise ring sum.
pub fn ring_sum(vectors: &[&[RingElement]], p: usize, codec: &FixedPointCodec) -> Result<Vec<RingElement>> {
    let mut acc = vec![0u64; p];
    for v in vectors {
        if v.len() != p {
            return Err(Error::invalid(format!(
                "contribution has {} elements, expected {p}",
                v.len()
            )));
        }
        for (a, &x) in acc.iter_mut().zip(v.iter()) {
            *a = codec.add(*a, x);
        }
    }
    Ok(acc)
}

/// Sums the masked contributions of a complete participant set and decodes
/// the result. Any expected participant without a contribution aborts the
/// round with the dropout set.
pub fn secure_sum(
    round_id: u64,
    participants: &[ParticipantId],
    contributions: &BTreeMap<ParticipantId, Vec<RingElement>>,
    p: usize,
    codec: &FixedPointCodec,
) -> Result<Vec<f64>> {
    let dropouts: Vec<ParticipantId> = participants
        .iter()
        .filter(|id| !contributions.contains_key(id))
        .copied()
        .collect();
    if !dropouts.is_empty() {
        return Err(Error::RoundAbort { round_id, dropouts });
    }
    if let Some(stray) = contributions.keys().find(|id| !participants.contains(id)) {
        return Err(Error::ProtocolSetup(format!(
            "contribution from non-participant {stray}"
        )));
    }
    let vectors: Vec<&[RingElement]> = participants
        .iter()
        .map(|id| contributions[id].as_slice())
        .collect();
    Ok(ring_sum(&vectors, p, codec)?
        .into_iter()
        .map(|e| codec.decode(e))
        .collect())
}

/// Everything observed during one secure-summation attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTranscript {
    pub round_id: u64,
    /// 0 for the first attempt, 1 for the re-run after an abort.
    pub attempt: u32,
    pub participants: Vec<ParticipantId>,
    pub contributions: Vec<(ParticipantId, Vec<RingElement>)>,
    pub dropouts: Vec<ParticipantId>,
    /// Present only for rounds that closed with every contribution.
    pub decoded_aggregate: Option<Vec<f64>>,
    /// Wire frames of the summation phase, in protocol order.
    #[serde(skip)]
    pub frames: Vec<Vec<u8>>,
}

impl RoundTranscript {
    /// Hex SHA-256 over the summation-phase frames.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for f in &self.frames {
            h.update(f);
        }
        hex::encode(h.finalize())
    }

    pub fn message_count(&self) -> usize {
        self.frames.len()
    }
}
