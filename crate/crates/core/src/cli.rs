//! The `bhrnet` command line.
//!
//! [`run`] parses arguments, executes one subcommand and returns the exit
//! code: 0 on success, 1 on invalid input and 2 when a check fails.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::blocks::Init;
use crate::cost::{cost_report, CostReport};
use crate::error::{Error, Result};
use crate::net::{load_weights, save_weights, Network, NetworkSpec};
use crate::pose::{
    decode, finite_difference_check, flip_average, identity_pairs, validate_flip_pairs, DecodeConfig, COCO_FLIP_PAIRS,
};
use crate::synth::{evaluate_decoder, sample_scene, sample_scenes, scenes_to_json, EvalConfig, SceneConfig};
use crate::tensor::raw;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bhrnet", version, about = "Lightweight multi-person pose estimation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parameter and MAC report for a network config.
    Cost {
        /// Config file, name under $BHRNET_CONFIG_DIR, or preset.
        #[arg(long)]
        config: String,
        /// Square input size; repeat to compare sizes.
        #[arg(long = "input-size", required = true)]
        input_size: Vec<usize>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        /// Also write the JSON report of the first size here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a network on a BHRT image tensor.
    Infer {
        #[arg(long)]
        config: String,
        /// BHRW weight file; without it, weights are drawn from --seed.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        input: PathBuf,
        /// Writes `<output>.heatmaps.bhrt` and `<output>.tagmaps.bhrt`.
        #[arg(long)]
        output: PathBuf,
        /// Average with the mirrored image.
        #[arg(long)]
        flip: bool,
        /// Comma-separated flip permutation; defaults to COCO for 17 types.
        #[arg(long, value_delimiter = ',')]
        flip_pairs: Option<Vec<usize>>,
    },
    /// Decode heatmaps and tagmaps into poses (JSON).
    Decode {
        #[arg(long)]
        heatmaps: PathBuf,
        #[arg(long)]
        tagmaps: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        threshold: f32,
        #[arg(long = "join-threshold", default_value_t = 1.0)]
        join_threshold: f64,
        #[arg(long = "max-persons", default_value_t = 30)]
        max_persons: usize,
        /// Disable quarter-pixel refinement.
        #[arg(long)]
        no_refine: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compare analytic loss gradients with central differences.
    LossCheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Decode synthetic ground-truth scenes and report OKS.
    SynthEval {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        scenes: usize,
        #[arg(long, default_value_t = 3)]
        persons: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f32,
        #[arg(long = "tag-noise", default_value_t = 0.0)]
        tag_noise: f32,
        #[arg(long, default_value_t = 4)]
        keypoints: usize,
        #[arg(long, default_value_t = 48)]
        extents: usize,
        /// Write the sampled scenes as JSON.
        #[arg(long)]
        save_scenes: Option<PathBuf>,
    },
    /// Per-resolution MAC shares of two configs side by side.
    CompareDist {
        #[arg(long = "config-a")]
        config_a: String,
        #[arg(long = "config-b")]
        config_b: String,
        #[arg(long = "input-size", default_value_t = 256)]
        input_size: usize,
    },
    /// Write a BHRW weight file for a config.
    Init {
        #[arg(long)]
        config: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Zero weights and identity batchnorm instead of random weights.
        #[arg(long)]
        zero: bool,
        #[arg(long)]
        output: PathBuf,
    },
    /// Render one synthetic scene to BHRT maps plus its annotations.
    Scene {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        persons: usize,
        #[arg(long, default_value_t = 4)]
        keypoints: usize,
        #[arg(long, default_value_t = 48)]
        extents: usize,
        /// Writes `<output>.heatmaps.bhrt`, `<output>.tagmaps.bhrt` and `<output>.gt.json`.
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Outcome of a subcommand that ran to completion.
enum Outcome {
    Done(String),
    CheckFailed(String),
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INVALID,
            };
            let target: &mut dyn Write = if code == EXIT_OK { out } else { err };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    match execute(cli.command) {
        Ok(Outcome::Done(text)) => {
            let _ = write!(out, "{text}");
            EXIT_OK
        }
        Ok(Outcome::CheckFailed(text)) => {
            let _ = write!(out, "{text}");
            EXIT_CHECK_FAILED
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INVALID
        }
    }
}

fn build(config: &str, init: &mut Init) -> Result<Network> {
    Network::build(NetworkSpec::resolve(config)?, init)
}

fn execute(command: Command) -> Result<Outcome> {
    let mut s = String::new();
    match command {
        Command::Cost { config, input_size, format, output } => {
            let net = build(&config, &mut Init::zero())?;
            let reports = input_size.iter().map(|&n| cost_report(&net, (n, n))).collect::<Result<Vec<_>>>()?;
            if let Some(path) = output {
                std::fs::write(path, reports[0].to_json()?)?;
            }
            match format {
                Format::Json => {
                    let _ = writeln!(s, "{}", serde_json::to_string_pretty(&reports)?);
                }
                Format::Table => {
                    for r in &reports {
                        let _ = writeln!(s, "{}", r.to_table());
                    }
                    let base = &reports[0];
                    for r in &reports[1..] {
                        let _ = writeln!(
                            s,
                            "MAC ratio {}/{} = {:.4}",
                            r.input[0],
                            base.input[0],
                            r.total_macs as f64 / base.total_macs as f64
                        );
                    }
                }
            }
        }
        Command::Infer { config, weights, seed, input, output, flip, flip_pairs } => {
            let mut net = build(&config, &mut Init::seeded(seed))?;
            if let Some(w) = weights {
                load_weights(w, &mut net)?;
            }
            let image = raw::load(&input)?;
            let (heat, tags) = if flip {
                let k = net.spec().head.num_keypoints;
                let pairs = match flip_pairs {
                    Some(p) => p,
                    None if k == COCO_FLIP_PAIRS.len() => COCO_FLIP_PAIRS.to_vec(),
                    None => identity_pairs(k),
                };
                validate_flip_pairs(&pairs, k)?;
                flip_average(&net, &image, &pairs)?
            } else {
                net.forward(&image)?
            };
            let (hp, tp) = (with_suffix(&output, ".heatmaps.bhrt"), with_suffix(&output, ".tagmaps.bhrt"));
            raw::save(&hp, &heat)?;
            raw::save(&tp, &tags)?;
            let _ = writeln!(s, "heatmaps {:?} -> {}", heat.shape(), hp.display());
            let _ = writeln!(s, "tagmaps {:?} -> {}", tags.shape(), tp.display());
        }
        Command::Decode { heatmaps, tagmaps, threshold, join_threshold, max_persons, no_refine, output } => {
            let cfg = DecodeConfig { threshold, join_threshold, max_persons, refine: !no_refine };
            let poses = decode(&raw::load(heatmaps)?, &raw::load(tagmaps)?, &cfg)?;
            let json = poses.to_json()?;
            if let Some(path) = output {
                std::fs::write(path, &json)?;
            }
            let _ = writeln!(s, "{json}");
        }
        Command::LossCheck { seed, trials, step, tolerance } => {
            if trials == 0 || !(step > 0.0) {
                return Err(Error::Config("loss-check needs trials > 0 and a positive step".into()));
            }
            let r = finite_difference_check(seed, trials, step)?;
            let pass = r.max_rel_error < tolerance;
            let _ = writeln!(s, "trials: {}", r.trials);
            let _ = writeln!(s, "step: {:e}", r.step);
            let _ = writeln!(
                s,
                "max relative error: {:.3e} (tolerance {:e}) {}",
                r.max_rel_error,
                tolerance,
                verdict(pass)
            );
            if !pass {
                return Ok(Outcome::CheckFailed(s));
            }
        }
        Command::SynthEval { seed, scenes, persons, noise, tag_noise, keypoints, extents, save_scenes } => {
            let cfg = SceneConfig {
                num_keypoints: keypoints,
                extents: (extents, extents),
                num_persons: persons,
                ..SceneConfig::default()
            };
            let set = sample_scenes(seed, scenes, &cfg)?;
            if let Some(path) = save_scenes {
                std::fs::write(path, scenes_to_json(&set)?)?;
            }
            let report = evaluate_decoder(&set, &EvalConfig { noise, tag_noise, ..EvalConfig::default() })?;
            let _ = writeln!(s, "{}", serde_json::to_string_pretty(&report)?);
        }
        Command::CompareDist { config_a, config_b, input_size } => {
            let a = cost_report(&build(&config_a, &mut Init::zero())?, (input_size, input_size))?;
            let b = cost_report(&build(&config_b, &mut Init::zero())?, (input_size, input_size))?;
            let (text, pass) = compare_distributions(&a, &b);
            s.push_str(&text);
            if !pass {
                return Ok(Outcome::CheckFailed(s));
            }
        }
        Command::Init { config, seed, zero, output } => {
            let mut init = if zero { Init::zero() } else { Init::seeded(seed) };
            let net = build(&config, &mut init)?;
            save_weights(&output, &net)?;
            let _ = writeln!(s, "{} parameter arrays -> {}", net.inventory().len(), output.display());
        }
        Command::Scene { seed, persons, keypoints, extents, output } => {
            let cfg = SceneConfig {
                num_keypoints: keypoints,
                extents: (extents, extents),
                num_persons: persons,
                ..SceneConfig::default()
            };
            let scene = sample_scene(seed, &cfg)?;
            raw::save(with_suffix(&output, ".heatmaps.bhrt"), &scene.maps.heatmaps)?;
            raw::save(with_suffix(&output, ".tagmaps.bhrt"), &scene.maps.tagmaps)?;
            std::fs::write(with_suffix(&output, ".gt.json"), scene.gt.to_json()?)?;
            let _ = writeln!(s, "{} persons, {keypoints} keypoint types, {extents}x{extents}", scene.gt.len());
        }
    }
    Ok(Outcome::Done(s))
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Side-by-side share table. The check passes when `a`'s resolution shares
/// strictly decrease and `b`'s max/min spread is at most half of `a`'s.
pub fn compare_distributions(a: &CostReport, b: &CostReport) -> (String, bool) {
    let mut s = String::new();
    let _ = writeln!(s, "{:<8} {:>12} {:>12}", "bucket", a.network, b.network);
    for (x, y) in a.buckets.iter().zip(&b.buckets) {
        let _ = writeln!(s, "{:<8} {:>11.2}% {:>11.2}%", x.label, x.share_pct, y.share_pct);
    }
    let (ra, rb) = (a.resolution_shares(), b.resolution_shares());
    let _ = writeln!(s, "resolution-only shares:");
    for (i, (x, y)) in ra.iter().zip(&rb).enumerate() {
        let _ = writeln!(s, "{:<8} {:>11.2}% {:>11.2}%", format!("1/{}", 4 << i), 100.0 * x, 100.0 * y);
    }
    let (sa, sb) = (a.share_spread(), b.share_spread());
    let decreasing = ra.windows(2).all(|w| w[0] > w[1]);
    let balanced = sb <= sa / 2.0;
    let _ = writeln!(s, "spread (max/min): {:.3} vs {:.3}", sa, sb);
    let _ = writeln!(s, "{} shares decrease with resolution: {}", a.network, verdict(decreasing));
    let _ = writeln!(s, "{} spread <= half of {}: {}", b.network, a.network, verdict(balanced));
    (s, decreasing && balanced)
}
