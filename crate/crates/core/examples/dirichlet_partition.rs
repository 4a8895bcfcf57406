//! Label skew of Dirichlet shards at several concentrations.

use hypervote::partition::{dirichlet_partition, iid_partition, DirichletSpec, SyntheticDataset};

fn main() -> hypervote::Result<()> {
    let ds = SyntheticDataset::balanced(5_000, 10)?;
    let iid = iid_partition(&ds, 10, 1)?;
    println!("iid sizes {:?}", iid.iter().map(|s| s.len()).collect::<Vec<_>>());
    for &alpha in &[30.0, 5.0, 0.5] {
        let shards = dirichlet_partition(&ds, &DirichletSpec::new(alpha, 10, 1)?)?;
        println!("alpha {alpha}:");
        for s in &shards {
            println!(
                "  client {:>2} size {:>4} top share {:.2} histogram {:?}",
                s.client_id,
                s.len(),
                s.top_label_share(),
                s.label_histogram
            );
        }
    }
    Ok(())
}
