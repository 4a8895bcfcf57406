//! One protocol round over loopback TCP with a client crash, compared
//! against the in-memory transport.

use hypervote::orchestrator::{run_round, FailurePlan, MemoryTransport, RoundInput, SocketTransport};
use hypervote::partition::{iid_partition, SeparatedGaussianOracle, SyntheticDataset};
use hypervote::securesum::FixedPointCodec;
use hypervote::HyperparameterGrid;

fn main() -> hypervote::Result<()> {
    let grid = HyperparameterGrid::sgd_demo();
    let shards = iid_partition(&SyntheticDataset::balanced(400, 10)?, 8, 3)?;
    let oracle = SeparatedGaussianOracle::new(0..3, 0.2)?;
    let failures = FailurePlan { first_attempt: vec![5], second_attempt: vec![] };
    let input = RoundInput {
        round_id: 9,
        grid: &grid,
        shards: &shards,
        oracle: &oracle,
        sigma: 0.5,
        k: 1,
        dropout_tolerance: 0.25,
        codec: FixedPointCodec::default(),
        seed: 77,
        failures: &failures,
    };
    let tcp = run_round(&input, &SocketTransport::default())?;
    let mem = run_round(&input, &MemoryTransport)?;
    println!("winner {}: {}", tcp.winner, grid.candidates()[tcp.winner]);
    println!("first attempt aborted: {}", tcp.aborted.is_some());
    println!("contributors {:?}", tcp.contributors);
    println!("transcript {}", tcp.transcript.hash());
    println!("memory transport agrees: {}", mem.transcript.hash() == tcp.transcript.hash());
    Ok(())
}
