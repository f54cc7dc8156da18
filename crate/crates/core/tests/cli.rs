use std::path::Path;
use std::process::Command;

use bhrnet::blocks::Init;
use bhrnet::cli::run;
use bhrnet::net::{Network, NetworkSpec};
use bhrnet::pose::{decode, DecodeConfig, PoseSet};
use bhrnet::tensor::raw;
use bhrnet::Tensor;

fn cli(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(std::iter::once("bhrnet").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn cost_reports_exact_ratios() {
    let (code, out, _) =
        cli(&["cost", "--config", "bhrnet-32", "--input-size", "256", "--input-size", "384", "--input-size", "512"]);
    assert_eq!(code, 0);
    assert!(out.contains("MAC ratio 384/256 = 2.2500"), "{out}");
    assert!(out.contains("MAC ratio 512/256 = 4.0000"), "{out}");
}

#[test]
fn cost_json_is_parseable() {
    let (code, out, _) = cli(&["cost", "--config", "hrnet-32", "--input-size", "256", "--format", "json"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v[0]["network"], "hrnet-32");
    assert!(v[0]["total_macs"].as_u64().unwrap() > 0);
}

#[test]
fn infer_then_decode_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let image = Tensor::from_fn([1, 3, 64, 64], |_, c, y, x| ((c * 13 + y * 3 + x) % 29) as f32 / 29.0);
    let input = dir.path().join("image.bhrt");
    raw::save(&input, &image).unwrap();
    let weights = dir.path().join("net.bhrw");
    assert_eq!(cli(&["init", "--config", "bhrnet-25", "--seed", "4", "--output", path(&weights)]).0, 0);

    let prefix = dir.path().join("out");
    let (code, _, err) = cli(&[
        "infer",
        "--config",
        "bhrnet-25",
        "--weights",
        path(&weights),
        "--input",
        path(&input),
        "--output",
        path(&prefix),
    ]);
    assert_eq!(code, 0, "{err}");
    let heat = raw::load(dir.path().join("out.heatmaps.bhrt")).unwrap();
    let tags = raw::load(dir.path().join("out.tagmaps.bhrt")).unwrap();

    let net = Network::build(NetworkSpec::resolve("bhrnet-25").unwrap(), &mut Init::seeded(4)).unwrap();
    let (h, t) = net.forward(&image).unwrap();
    assert_eq!(heat, h);
    assert_eq!(tags, t);

    let poses = dir.path().join("poses.json");
    let (code, _, err) = cli(&[
        "decode",
        "--heatmaps",
        path(&dir.path().join("out.heatmaps.bhrt")),
        "--tagmaps",
        path(&dir.path().join("out.tagmaps.bhrt")),
        "--output",
        path(&poses),
    ]);
    assert_eq!(code, 0, "{err}");
    let decoded = PoseSet::from_json(&std::fs::read_to_string(&poses).unwrap()).unwrap();
    assert_eq!(decoded, decode(&h, &t, &DecodeConfig::default()).unwrap());
}

#[test]
fn flip_inference_runs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("image.bhrt");
    raw::save(&input, &Tensor::full([1, 3, 64, 64], 0.25)).unwrap();
    let prefix = dir.path().join("flip");
    let (code, out, err) =
        cli(&["infer", "--config", "bhrnet-25", "--input", path(&input), "--output", path(&prefix), "--flip"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("[1, 17, 32, 32]"), "{out}");
    let (code, _, _) = cli(&[
        "infer",
        "--config",
        "bhrnet-25",
        "--input",
        path(&input),
        "--output",
        path(&prefix),
        "--flip",
        "--flip-pairs",
        "0,1",
    ]);
    assert_eq!(code, 1);
}

#[test]
fn a_rendered_two_person_scene_decodes_to_two_poses() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("scene");
    let (code, _, err) = cli(&["scene", "--seed", "3", "--persons", "2", "--output", path(&prefix)]);
    assert_eq!(code, 0, "{err}");
    let (code, out, err) = cli(&[
        "decode",
        "--heatmaps",
        path(&dir.path().join("scene.heatmaps.bhrt")),
        "--tagmaps",
        path(&dir.path().join("scene.tagmaps.bhrt")),
    ]);
    assert_eq!(code, 0, "{err}");
    let decoded = PoseSet::from_json(&out).unwrap();
    let gt = PoseSet::from_json(&std::fs::read_to_string(dir.path().join("scene.gt.json")).unwrap()).unwrap();
    assert_eq!(decoded.len(), 2);
    assert!(bhrnet::synth::same_grouping(&decoded, &gt));
}

#[test]
fn checks_report_pass_with_exit_zero() {
    let (code, out, _) = cli(&["loss-check", "--trials", "5"]);
    assert_eq!(code, 0);
    assert!(out.contains("PASS"));
    let (code, out, _) = cli(&["compare-dist", "--config-a", "hrnet-32", "--config-b", "bhrnet-32"]);
    assert_eq!(code, 0, "{out}");
    let (code, out, _) = cli(&["synth-eval", "--scenes", "10"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["mean_oks"], 1.0);
}

#[test]
fn failed_checks_exit_two() {
    let (code, out, _) = cli(&["loss-check", "--trials", "2", "--tolerance", "1e-30"]);
    assert_eq!(code, 2);
    assert!(out.contains("FAIL"));
    let (code, _, _) = cli(&["compare-dist", "--config-a", "bhrnet-32", "--config-b", "hrnet-32"]);
    assert_eq!(code, 2);
}

#[test]
fn invalid_invocations_exit_one() {
    assert_eq!(cli(&["cost", "--config", "no-such-net", "--input-size", "256"]).0, 1);
    assert_eq!(cli(&["cost", "--config", "bhrnet-32", "--input-size", "100"]).0, 1);
    assert_eq!(cli(&["frobnicate"]).0, 1);
    assert_eq!(cli(&["decode", "--heatmaps", "/nonexistent", "--tagmaps", "/nonexistent"]).0, 1);
    let (code, out, _) = cli(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("cost"));
}

#[test]
fn binary_resolves_configs_from_the_config_dir() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = NetworkSpec::hrnet(8);
    spec.name = "tiny".into();
    std::fs::write(dir.path().join("tiny.json"), spec.to_json().unwrap()).unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_bhrnet"))
        .args(["cost", "--config", "tiny", "--input-size", "64"])
        .env("BHRNET_CONFIG_DIR", dir.path())
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(String::from_utf8_lossy(&output.stdout).starts_with("tiny @ 64x64"));

    let missing = Command::new(env!("CARGO_BIN_EXE_bhrnet"))
        .args(["cost", "--config", "tiny", "--input-size", "64"])
        .env_remove("BHRNET_CONFIG_DIR")
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
}
