//! Lists the built-in network configs and writes them as JSON files that
//! `--config` (or `BHRNET_CONFIG_DIR`) accepts.
//!
//! `cargo run --example network_configs -- <dir>` writes into `<dir>`.

use std::path::PathBuf;

use bhrnet::blocks::Init;
use bhrnet::cost::cost_report;
use bhrnet::net::{Network, NetworkSpec, PRESETS};

fn main() -> bhrnet::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    let mut specs: Vec<NetworkSpec> = PRESETS.iter().map(|n| NetworkSpec::resolve(n)).collect::<Result<_, _>>()?;

    // Every stage-4 branch at the same width, instead of doubling per branch.
    let mut equal = NetworkSpec::bhrnet(32);
    equal.name = "bhrnet-32-equal-width".into();
    equal.stages[3].channels = vec![128; 4];
    specs.push(equal);

    println!("{:<24} {:>10} {:>8} {:>8}  blocks per stage", "config", "params", "GMACs", "spread");
    for spec in &specs {
        spec.validate()?;
        let net = Network::build(spec.clone(), &mut Init::zero())?;
        let report = cost_report(&net, (256, 256))?;
        let blocks: Vec<String> = spec.stages.iter().map(|s| format!("{:?}", s.blocks)).collect();
        println!(
            "{:<24} {:>10} {:>8.3} {:>8.2}  {}",
            spec.name,
            net.num_parameters(),
            report.total_macs as f64 / 1e9,
            report.share_spread(),
            blocks.join(" ")
        );
        if let Some(dir) = &out {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(format!("{}.json", spec.name)), spec.to_json()? + "\n")?;
        }
    }
    if let Some(dir) = &out {
        println!("wrote {} configs to {}", specs.len(), dir.display());
    }
    Ok(())
}
