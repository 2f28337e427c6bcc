use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn de() -> Command {
    Command::new(env!("CARGO_BIN_EXE_de"))
}

fn run(args: &[&str]) -> Output {
    de().args(args).output().unwrap()
}

fn run_stdin(args: &[&str], input: &[u8]) -> Output {
    let mut child = de()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

fn ok(out: Output) -> Vec<u8> {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_encode_decode_pipeline_recovers_three_people() {
    let scene = ok(run(&["gen", "--seed", "1", "--n", "3"]));
    let stack = ok(run_stdin(&["encode"], &scene));
    assert_eq!(&stack[..4], b"DEFS");
    let results = json(&ok(run_stdin(&["decode", "--image-id", "1"], &stack)));
    let results = results.as_array().unwrap();
    assert_eq!(results.len(), 3);
    for r in results {
        assert_eq!(r["image_id"], 1);
        assert_eq!(r["keypoints"].as_array().unwrap().len(), 17 * 3);
    }
}

#[test]
fn decoded_results_score_perfectly_against_their_scene() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.json");
    let stack = dir.path().join("scene.defs");
    let preds = dir.path().join("preds.json");
    ok(run(&["gen", "--seed", "5", "--n", "2", "-o", path(&scene)]));
    ok(run(&["encode", path(&scene), "-o", path(&stack)]));
    ok(run(&["decode", path(&stack), "--image-id", "5", "-o", path(&preds)]));
    let report = json(&ok(run(&["eval", path(&preds), path(&scene)])));
    assert_eq!(report["AP"], 1.0);
    let report = json(&ok(run(&["eval", path(&preds), path(&scene), "--metric", "pckh"])));
    assert_eq!(report["total"], 100.0);
}

fn visible_joints(v: &Value) -> Vec<Option<(f64, f64)>> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|j| j["visible"].as_bool().unwrap().then(|| (j["x"].as_f64().unwrap(), j["y"].as_f64().unwrap())))
        .collect()
}

fn result_joints(v: &Value) -> Vec<Option<(f64, f64)>> {
    v["keypoints"]
        .as_array()
        .unwrap()
        .chunks(3)
        .map(|c| (c[2].as_f64().unwrap() > 0.0).then(|| (c[0].as_f64().unwrap(), c[1].as_f64().unwrap())))
        .collect()
}

/// Sum of joint errors and joint count, each ground-truth person matched to
/// the prediction with the smallest mean distance over shared joints.
fn joint_error(scenes: &Value, results: &Value) -> (f64, usize) {
    let (mut sum, mut count) = (0.0, 0);
    for scene in scenes.as_array().unwrap() {
        let preds: Vec<_> = results
            .as_array()
            .unwrap()
            .iter()
            .filter(|r| r["image_id"] == scene["image_id"])
            .map(result_joints)
            .collect();
        for person in scene["persons"].as_array().unwrap() {
            let gt = visible_joints(&person["joints"]);
            let dists = |p: &Vec<Option<(f64, f64)>>| -> Vec<f64> {
                gt.iter()
                    .zip(p)
                    .filter_map(|(g, q)| Some((g.as_ref()?, q.as_ref()?)))
                    .map(|(g, q)| (g.0 - q.0).hypot(g.1 - q.1))
                    .collect()
            };
            let best = preds
                .iter()
                .map(dists)
                .filter(|d| !d.is_empty())
                .min_by(|a, b| {
                    let ma = a.iter().sum::<f64>() / a.len() as f64;
                    let mb = b.iter().sum::<f64>() / b.len() as f64;
                    ma.total_cmp(&mb)
                })
                .expect("every person is decoded");
            sum += best.iter().sum::<f64>();
            count += best.len();
        }
    }
    (sum, count)
}

#[test]
fn refinement_lowers_error_on_jittered_peaks() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes.json");
    let stacks = dir.path().join("stacks");
    ok(run(&[
        "gen", "--seed", "100", "--count", "12", "--n", "3", "--drop-prob", "0", "-o", path(&scenes),
    ]));
    ok(run(&[
        "encode", path(&scenes), "--jitter", "3", "--jitter-target", "level2", "--noise-seed", "9", "-o",
        path(&stacks),
    ]));
    let files: Vec<String> = (100..112).map(|i| path(&stacks.join(format!("{i}.defs"))).to_string()).collect();
    let decode = |mrm: &str| {
        let mut args = vec!["decode", "--image-id", "100", "--mrm", mrm];
        args.extend(files.iter().map(String::as_str));
        json(&ok(run(&args)))
    };
    let truth = json(&std::fs::read(&scenes).unwrap());
    let (off_sum, off_n) = joint_error(&truth, &decode("off"));
    let (on_sum, on_n) = joint_error(&truth, &decode("on"));
    assert_eq!(off_n, on_n);
    assert!(on_sum < off_sum, "mrm on {on_sum} vs off {off_sum}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["decode", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("decode"));
}

#[test]
fn malformed_inputs_exit_two() {
    assert_eq!(run_stdin(&["decode"], b"not a stack").status.code(), Some(2));
    assert_eq!(run_stdin(&["encode"], b"{\"persons\": 3}").status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(run(&["eval", path(&missing), path(&missing)]).status.code(), Some(2));
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, "{\"decoder\": {\"bogus\": 1}}").unwrap();
    assert_eq!(run(&["--config", path(&cfg), "gen"]).status.code(), Some(2));
}

#[test]
fn impossible_requests_are_usage_errors() {
    assert_eq!(run(&["gen", "--width", "32", "--height", "32"]).status.code(), Some(1));
    assert_eq!(run(&["--jobs", "0", "gen"]).status.code(), Some(1));
    let scenes = ok(run(&["gen", "--count", "2"]));
    assert_eq!(run_stdin(&["encode"], &scenes).status.code(), Some(1));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, "{\"scene\": {\"drop_joint_prob\": 1.0}, \"encoder\": {\"tau\": 3.0}}").unwrap();
    let count_visible = |bytes: &[u8]| {
        json(bytes)["persons"][0]["joints"].as_array().unwrap().iter().filter(|j| j["visible"] == true).count()
    };
    let from_cfg = ok(run(&["--config", path(&cfg), "gen", "--seed", "3"]));
    assert_eq!(count_visible(&from_cfg), 1);
    let overridden = ok(run(&["--config", path(&cfg), "gen", "--seed", "3", "--drop-prob", "0"]));
    assert_eq!(count_visible(&overridden), 17);

    let plain = ok(run_stdin(&["encode"], &overridden));
    let from_cfg = ok(run_stdin(&["--config", path(&cfg), "encode"], &overridden));
    let flagged = ok(run_stdin(&["--config", path(&cfg), "encode", "--tau", "7"], &overridden));
    assert_ne!(plain, from_cfg);
    assert_eq!(plain, flagged);
}

#[test]
fn output_is_deterministic_with_sorted_keys() {
    let a = ok(run(&["gen", "--seed", "42", "--n", "4"]));
    let b = ok(run(&["--jobs", "3", "gen", "--seed", "42", "--n", "4"]));
    assert_eq!(a, b);
    let text = String::from_utf8(a.clone()).unwrap();
    let top: Vec<usize> = ["\"height\"", "\"image_id\"", "\"persons\"", "\"width\""]
        .iter()
        .map(|k| text.find(k).unwrap())
        .collect();
    assert!(top.windows(2).all(|w| w[0] < w[1]));

    let stack = ok(run_stdin(&["encode"], &a));
    let r1 = ok(run_stdin(&["decode"], &stack));
    let r2 = ok(run_stdin(&["--jobs", "2", "decode", "--mrm"], &stack));
    let r3 = ok(run_stdin(&["decode", "--mrm", "on"], &stack));
    assert_eq!(r2, r3);
    assert_eq!(json(&r1).as_array().unwrap().len(), 4);
}

#[test]
fn refine_loss_bench_and_render_run() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("s.json");
    let stack = dir.path().join("s.defs");
    let preds = dir.path().join("p.json");
    let image = dir.path().join("s.ppm");
    ok(run(&["gen", "--seed", "2", "--n", "2", "-o", path(&scene)]));
    ok(run(&["encode", path(&scene), "-o", path(&stack)]));
    ok(run(&["decode", path(&stack), "--image-id", "2", "-o", path(&preds)]));

    let refined = json(&ok(run(&["refine", path(&preds), path(&stack)])));
    assert_eq!(refined, json(&std::fs::read(&preds).unwrap()));

    let loss = json(&ok(run(&["loss", path(&stack), path(&stack), "--scene", path(&scene)])));
    for key in ["confidence", "displacement", "pull"] {
        assert_eq!(loss[key], 0.0, "{key}");
    }
    let decoded = json(&ok(run(&["loss", path(&stack), path(&stack)])));
    assert_eq!(loss, decoded);

    let bench = json(&ok(run(&["bench", "--images", "2", "--n", "2"])));
    assert_eq!(bench["decoded_persons"], 4);

    ok(run(&["render", path(&scene), "-o", path(&image)]));
    let ppm = std::fs::read(&image).unwrap();
    assert!(ppm.starts_with(b"P6\n256 256\n255\n"));
    assert_eq!(ppm.len(), 15 + 256 * 256 * 3);
}

#[test]
fn shorthand_binaries_match_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("s.json");
    let via_alias = Command::new(env!("CARGO_BIN_EXE_de-gen"))
        .args(["--seed", "7", "--n", "2", "-o", path(&scene)])
        .output()
        .unwrap();
    assert!(via_alias.status.success());
    assert_eq!(std::fs::read(&scene).unwrap(), ok(run(&["gen", "--seed", "7", "--n", "2"])));

    let stack = dir.path().join("s.defs");
    ok(run(&["encode", path(&scene), "-o", path(&stack)]));
    let loss = Command::new(env!("CARGO_BIN_EXE_de-loss"))
        .args([path(&stack), path(&stack), "--alpha", "0.5"])
        .output()
        .unwrap();
    assert_eq!(json(&loss.stdout)["alpha"], 0.5);

    let bad = Command::new(env!("CARGO_BIN_EXE_de-eval")).arg("--bogus").output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
