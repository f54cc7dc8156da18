//! The four inverted residual variants: outputs, parameters and MACs.
//!
//! cargo run --example residual_blocks

use bhrnet::blocks::{count_learnable, Block, BlockSpec, BlockVariant, Init};
use bhrnet::cost::dir_pair_cost_factor;
use bhrnet::Tensor;

fn main() -> bhrnet::Result<()> {
    let channels = 32;
    let x = Tensor::from_fn([1, channels, 16, 16], |_, c, y, x| ((c + 3 * y + 5 * x) % 11) as f32 / 11.0 - 0.5);
    println!("{:<6} {:>8} {:>12} {:>10}", "block", "params", "MACs", "mean out");
    for (variant, num_dw) in
        [(BlockVariant::Ir, 1), (BlockVariant::IrSc, 1), (BlockVariant::IrDw, 2), (BlockVariant::Dir, 2)]
    {
        let block = Block::new(BlockSpec::dir(channels).with_variant(variant, num_dw), &mut Init::seeded(3))?;
        let out = block.forward(&x)?;
        let macs: u64 = block.trace((16, 16))?.iter().map(|r| r.cost.macs).sum();
        let mean = out.data().iter().sum::<f32>() / out.len() as f32;
        println!("{:<6} {:>8} {:>12} {:>10.4}", variant.label(), count_learnable(&block), macs, mean);
    }
    println!(
        "a depthwise 3x3 plus a 1x1 conv costs {:.4} of one standard 3x3 conv at 64 channels",
        dir_pair_cost_factor(64, (16, 16))?
    );
    Ok(())
}
