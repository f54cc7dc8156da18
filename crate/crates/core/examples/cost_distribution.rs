//! Cost reports: per-resolution MAC shares of the equal-depth and balanced
//! backbones, quadratic input scaling, and the block-count balancer.
//!
//! cargo run --example cost_distribution

use bhrnet::blocks::{Block, BlockSpec, Init};
use bhrnet::cli::compare_distributions;
use bhrnet::cost::cost_report;
use bhrnet::net::{balance_block_counts, Network, NetworkSpec};

fn main() -> bhrnet::Result<()> {
    let hrnet = Network::build(NetworkSpec::hrnet(32), &mut Init::zero())?;
    let bhrnet = Network::build(NetworkSpec::bhrnet(32), &mut Init::zero())?;

    let report = cost_report(&bhrnet, (256, 256))?;
    print!("{}", report.to_table());

    let (table, pass) = compare_distributions(&cost_report(&hrnet, (256, 256))?, &report);
    println!("\n{table}balance check passed: {pass}\n");

    for size in [384, 512] {
        let r = cost_report(&bhrnet, (size, size))?;
        println!("MACs at {size} / MACs at 256 = {:.4}", r.total_macs as f64 / report.total_macs as f64);
    }

    // MACs of one DIR block on each stage-4 branch at a 256x256 input.
    let per_block = (0..4)
        .map(|i| {
            let block = Block::new(BlockSpec::dir(32 << i), &mut Init::zero())?;
            Ok(block.trace((64 >> i, 64 >> i))?.iter().map(|r| r.cost.macs).sum())
        })
        .collect::<bhrnet::Result<Vec<u64>>>()?;
    println!("\nblock MACs per branch {per_block:?}");
    println!("balancer suggestion {:?}", balance_block_counts(&per_block)?);
    Ok(())
}
