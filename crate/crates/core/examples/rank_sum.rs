//! Two-sided rank-sum p-values, exact for small samples and normal-approximated otherwise.

use anyhow::Result;
use seqlink::experiment::rank_sum_test;

fn main() -> Result<()> {
    println!("[1,2,3] vs [10,11,12]: p = {}", rank_sum_test(&[1.0, 2.0, 3.0], &[10.0, 11.0, 12.0])?);
    println!("identical samples: p = {}", rank_sum_test(&[0.5, 0.7], &[0.5, 0.7])?);
    let a: Vec<f64> = (0..20).map(|i| 0.1 + 0.01 * i as f64).collect();
    let b: Vec<f64> = (0..20).map(|i| 0.15 + 0.01 * i as f64).collect();
    println!("20 vs 20 shifted: p = {:.4}", rank_sum_test(&a, &b)?);
    Ok(())
}
