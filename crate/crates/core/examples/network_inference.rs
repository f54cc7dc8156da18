//! Build the default balanced network, run it on a synthetic image and
//! round-trip its weights through a BHRW file.
//!
//! cargo run --release --example network_inference

use std::time::Instant;

use bhrnet::blocks::Init;
use bhrnet::net::{load_weights, save_weights, Network, NetworkSpec};
use bhrnet::Tensor;

fn main() -> bhrnet::Result<()> {
    let spec = NetworkSpec::preset("bhrnet-32").expect("shipped preset");
    let net = Network::build(spec, &mut Init::seeded(42))?;
    println!("{}: {} learnable parameters", net.spec().name, net.num_parameters());

    let image = Tensor::from_fn([1, 3, 256, 256], |_, c, y, x| ((x * 7 + y * 13 + c * 29) % 255) as f32 / 255.0 - 0.5);
    let start = Instant::now();
    let (heatmaps, tagmaps) = net.forward(&image)?;
    println!("forward in {:.2?}", start.elapsed());
    println!("heatmaps {:?}, tagmaps {:?}", heatmaps.shape(), tagmaps.shape());

    let path = std::env::temp_dir().join("bhrnet-32.bhrw");
    save_weights(&path, &net)?;
    let mut restored = Network::build(net.spec().clone(), &mut Init::zero())?;
    load_weights(&path, &mut restored)?;
    let (again, _) = restored.forward(&image)?;
    println!("reloaded weights reproduce the output: {}", again == heatmaps);
    Ok(())
}
