//! Synthetic periodic data with contiguous gaps, a shuffled split and (0, 1) scaling.

use anyhow::Result;
use seqlink::data::{apply_sparsity, generate_gaussian_periodic, split_shuffled, GapShape, NormBounds};

fn main() -> Result<()> {
    let full = generate_gaussian_periodic(20, 50, 7)?;
    let sparse = apply_sparsity(&full, 0.3, 7, GapShape::Contiguous)?;
    let (train, test) = split_shuffled(&sparse, 0.8, 7)?;
    let bounds = NormBounds::fit(&train)?;
    let train = bounds.apply(&train)?;
    println!("{} train / {} test samples of length {}", train.samples(), test.samples(), train.length());
    println!("bounds: min {:?} max {:?}", bounds.min, bounds.max);
    let s = train.sample(0);
    let row: String = (0..s.len()).map(|i| if s.observed(i) { '#' } else { '.' }).collect();
    println!("{}: {row}", train.ids()[0]);
    println!("observed {} of {}", train.observed_count(0), s.len());
    Ok(())
}
