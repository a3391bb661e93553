//! Attention weights and pyramidal sorting of candidate trajectories.

use anyhow::Result;
use seqlink::autoencoder::TrajectoryBank;
use seqlink::diffcore::Array;
use seqlink::pyramid::{pyramidal_sort, softmax, sort_levels, SplitRule};

fn main() -> Result<()> {
    let alpha = softmax(&[2.0, 0.1, 1.2, -0.5, 0.9, 1.6]);
    println!("alpha: {:.3?}", alpha);
    for levels in 1..=4 {
        let groups = sort_levels(&alpha, levels, SplitRule::RemainingMean)?;
        println!("L={levels}: {groups:?}");
    }

    let ids: Vec<String> = (0..7).map(|k| format!("s{k}")).collect();
    let traj: Vec<f64> = (0..7 * 3 * 2).map(|v| v as f64).collect();
    let bank = TrajectoryBank::new(ids, vec![0.0, 1.0, 2.0], Array::new(vec![7, 3, 2], traj)?)?;
    let mut row = vec![0.0];
    row.extend(&alpha);
    let cand: Vec<usize> = (1..7).collect();
    let pyramid = pyramidal_sort("s0", &row, &cand, &bank, 3, SplitRule::RemainingMean)?;
    for (j, level) in pyramid.levels.iter().enumerate() {
        println!("level {} (weight {:.2}): {:?}", j + 1, pyramid.weights[j], level.member_ids);
    }
    Ok(())
}
