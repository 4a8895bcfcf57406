//! Pairwise-masked secure sum over three clients, then an abort when one
//! of them drops out.

use std::collections::BTreeMap;

use hypervote::securesum::{
    masked_contribution, pairwise_masks, secure_sum, FixedPointCodec, PairwiseSeeds, ParticipantId,
};
use hypervote::voting::NoisyVoteVector;

fn main() -> hypervote::Result<()> {
    let codec = FixedPointCodec::default();
    let ids: Vec<ParticipantId> = (0..3).map(ParticipantId).collect();
    let seeds = PairwiseSeeds::derive(42, &ids);
    let ballots = [vec![1.25, 0.0, -0.5], vec![0.0, 1.0, 0.75], vec![1.0, 0.5, 0.0]];

    let mut contributions = BTreeMap::new();
    for (id, b) in ids.iter().zip(&ballots) {
        let masks = pairwise_masks(*id, &ids, &seeds, 3, &codec)?;
        let c = masked_contribution(&NoisyVoteVector::new(b.clone()), &masks, &codec)?;
        println!("{id} sends {:016x?}", c.elements);
        contributions.insert(*id, c.elements);
    }
    println!("sum {:?}", secure_sum(1, &ids, &contributions, 3, &codec)?);

    contributions.remove(&ids[1]);
    match secure_sum(2, &ids, &contributions, 3, &codec) {
        Err(e) => println!("with a dropout: {e}"),
        Ok(v) => println!("unexpected sum {v:?}"),
    }
    Ok(())
}
