mod common;

use std::path::Path;

use common::{ok, p, run, sha256, small_phantom, validate, FAST_REG};
use lesiontrack::nifti::{load_mask, load_volume};

fn code(out: &std::process::Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn same_files(a: &Path, b: &Path, names: &[&str]) {
    for n in names {
        assert_eq!(std::fs::read(a.join(n)).unwrap(), std::fs::read(b.join(n)).unwrap(), "{n} differs");
    }
}

#[test]
fn phantom_is_byte_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    for o in [&a, &b] {
        ok(["phantom", "--shape", "64", "--lesions", "2", "--seed", "7", "--out", &p(o)]);
    }
    same_files(&a, &b, &["image.nii.gz", "mask.nii.gz", "phantom.json"]);
    let meta = validate("phantom", &a.join("phantom.json"));
    assert_eq!(meta["lesions"].as_array().unwrap().len(), 2);
    assert_eq!(load_mask(a.join("mask.nii.gz")).unwrap().num_instances(), 2);
}

#[test]
fn phantom_without_lesions_has_empty_mask() {
    let d = tempfile::tempdir().unwrap();
    ok(["phantom", "--shape", "16", "--lesions", "0", "--seed", "1", "--out", &p(d.path())]);
    let m = load_mask(d.path().join("mask.nii.gz")).unwrap();
    assert_eq!(m.num_instances(), 0);
    assert!(m.data().iter().all(|&l| l == 0));
    validate("phantom", &d.path().join("phantom.json"));
}

#[test]
fn phantom_rejects_oversized_lesions() {
    let d = tempfile::tempdir().unwrap();
    let out = run(["phantom", "--shape", "16", "--radius", "30,40", "--seed", "1", "--out", &p(d.path())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("does not fit"), "{}", stderr(&out));
}

#[test]
fn seeded_commands_require_a_seed() {
    let d = tempfile::tempdir().unwrap();
    let out = run(["phantom", "--shape", "16", "--out", &p(d.path())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--seed"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.toml");
    std::fs::write(&cfg, "[phantom]\nshapes = [8, 8, 8]\n").unwrap();
    let out = run(["--config", &p(&cfg), "phantom", "--seed", "1", "--out", &p(d.path())]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn config_file_supplies_seed_and_spec() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.json");
    std::fs::write(&cfg, r#"{"seed": 5, "phantom": {"shape": [20, 18, 16], "lesions": 1, "radius_mm": [2.0, 3.0]}}"#).unwrap();
    ok(["--config", &p(&cfg), "phantom", "--out", &p(d.path())]);
    let v = load_volume(d.path().join("image.nii.gz")).unwrap();
    assert_eq!(v.grid().shape, [20, 18, 16]);
    assert_eq!(validate("phantom", &d.path().join("phantom.json"))["seed"], 5);
}

/// Checksums of `synth --seed 11` on `phantom --shape 40 --lesions 2
/// --radius 4,5 --seed 3`. A change here means a seeded random stream or a
/// kernel changed.
const GOLDEN: [(&str, &str); 6] = [
    ("image.nii.gz", "d2a0fd86d9df6560bf57c6c735df70222ad137f371c67045af9e35e98a6ef98e"),
    ("mask.nii.gz", "8dfe8881835ef9e58042f79ab6a7d5184053b1d660c9eb18fdf900e879574d5a"),
    ("field_dx.nii.gz", "d921873338c0cfe6c385a9ba841cf6c2ce993bc94963561476899f7ad80dfde2"),
    ("field_dy.nii.gz", "3b9dc2f577a7881d0aee85bd75cc7ac927945679fa1a0093663c16af33a9ed63"),
    ("field_dz.nii.gz", "aac8d1fcb2e061851851a33f27a0ab9d9735bc01d0f45485f87461faab6f6620"),
    ("params_used.json", "9ff82fc971fdbb6dc8b9f4bd462df5df87a614c142be9d1f48934280d985128b"),
];

#[test]
fn synth_matches_golden_checksums() {
    let d = tempfile::tempdir().unwrap();
    let (ph, s) = (d.path().join("ph"), d.path().join("s"));
    ok(["phantom", "--shape", "40", "--lesions", "2", "--radius", "4,5", "--seed", "3", "--out", &p(&ph)]);
    ok([
        "synth", "--image", &p(&ph.join("image.nii.gz")), "--mask", &p(&ph.join("mask.nii.gz")),
        "--seed", "11", "--out", &p(&s),
    ]);
    let params = validate("params_used", &s.join("params_used.json"));
    assert_eq!(params["seed"], 11);
    validate("field_sidecar", &s.join("field.json"));
    let got: Vec<(String, String)> = GOLDEN.iter().map(|(n, _)| (n.to_string(), sha256(&s.join(n)))).collect();
    for ((name, want), (_, have)) in GOLDEN.iter().zip(&got) {
        assert_eq!(have, want, "{name}: all checksums {got:?}");
    }
}

#[test]
fn synth_is_deterministic_and_identity_when_disabled() {
    let d = tempfile::tempdir().unwrap();
    let ph = d.path().join("ph");
    small_phantom(&ph, 2);
    let img = p(&ph.join("image.nii.gz"));
    let mask = p(&ph.join("mask.nii.gz"));
    let (a, b, z) = (d.path().join("a"), d.path().join("b"), d.path().join("z"));
    for o in [&a, &b] {
        ok(["synth", "--image", &img, "--mask", &mask, "--seed", "4", "--out", &p(o)]);
    }
    same_files(&a, &b, &["image.nii.gz", "mask.nii.gz", "field.json", "field_dx.nii.gz", "params_used.json"]);

    ok([
        "synth", "--image", &img, "--mask", &mask, "--seed", "4", "--lesion.amplitude", "0", "--aug.off",
        "--out", &p(&z),
    ]);
    assert_eq!(load_volume(z.join("image.nii.gz")).unwrap(), load_volume(ph.join("image.nii.gz")).unwrap());
    assert_eq!(load_mask(z.join("mask.nii.gz")).unwrap(), load_mask(ph.join("mask.nii.gz")).unwrap());
    let u = lesiontrack::nifti::load_field(z.join("field.json")).unwrap();
    assert_eq!(u.max_norm(), 0.0);
}

#[test]
fn synth_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let ph = d.path().join("ph");
    small_phantom(&ph, 2);
    let img = p(&ph.join("image.nii.gz"));
    let out = run(["synth", "--image", &img, "--mask", "missing.nii.gz", "--seed", "1", "--out", &p(d.path())]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));

    let empty = d.path().join("empty");
    ok(["phantom", "--shape", "24", "--lesions", "0", "--seed", "1", "--out", &p(&empty)]);
    let out = run([
        "synth", "--image", &img, "--mask", &p(&empty.join("mask.nii.gz")), "--seed", "1", "--out", &p(d.path()),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));

    let out = run(["synth", "--image", &img, "--mask", &p(&ph.join("mask.nii.gz")), "--out", &p(d.path())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn prompts_validate_and_repeat() {
    let d = tempfile::tempdir().unwrap();
    let ph = d.path().join("ph");
    ok(["phantom", "--shape", "32", "--lesions", "2", "--radius", "3,4", "--seed", "5", "--out", &p(&ph)]);
    let mask = p(&ph.join("mask.nii.gz"));
    for kind in ["point", "box", "mask"] {
        let (a, b) = (d.path().join(format!("{kind}_a")), d.path().join(format!("{kind}_b")));
        for o in [&a, &b] {
            ok(["prompt", "--mask", &mask, "--type", kind, "--seed", "9", "--raster", "--out", &p(o)]);
        }
        same_files(&a, &b, &["prompts.json", "prompt_1.nii.gz", "prompt_2.nii.gz"]);
        let doc = validate("prompts", &a.join("prompts.json"));
        let prompts = doc["prompts"].as_array().unwrap();
        assert_eq!(prompts.len(), 2);
        assert!(prompts.iter().all(|r| r["type"] == kind));
    }
    let out = run(["prompt", "--mask", &mask, "--label", "9", "--seed", "1", "--out", &p(d.path())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn register_writes_fields_and_diagnostics() {
    let d = tempfile::tempdir().unwrap();
    let (ph, s, r) = (d.path().join("ph"), d.path().join("s"), d.path().join("r"));
    small_phantom(&ph, 6);
    ok([
        "synth", "--image", &p(&ph.join("image.nii.gz")), "--mask", &p(&ph.join("mask.nii.gz")), "--seed", "2",
        "--out", &p(&s),
    ]);
    let mut args = vec![
        "register".to_string(), "--baseline".into(), p(&ph.join("image.nii.gz")), "--followup".into(),
        p(&s.join("image.nii.gz")), "--out".into(), p(&r),
    ];
    args.extend(FAST_REG.iter().map(|s| s.to_string()));
    ok(&args);
    let diag = validate("diagnostics", &r.join("diagnostics.json"));
    assert_eq!(diag["status"], "ok");
    assert!(diag["final_objective"].as_f64().unwrap() <= diag["initial_objective"].as_f64().unwrap());
    for f in ["u_fwd.json", "u_bwd.json"] {
        validate("field_sidecar", &r.join(f));
        let u = lesiontrack::nifti::load_field(r.join(f)).unwrap();
        assert_eq!(u.grid().shape, [24; 3]);
    }
}

#[test]
fn register_divergence_exits_4_with_diagnostics() {
    let d = tempfile::tempdir().unwrap();
    let (ph, s, r) = (d.path().join("ph"), d.path().join("s"), d.path().join("r"));
    small_phantom(&ph, 6);
    ok([
        "synth", "--image", &p(&ph.join("image.nii.gz")), "--mask", &p(&ph.join("mask.nii.gz")), "--seed", "2",
        "--out", &p(&s),
    ]);
    // steps of 1e300 voxels overflow the inverse-consistency term
    let cfg = d.path().join("div.toml");
    std::fs::write(&cfg, "[registration]\nstep_size = 1e300\nmax_step = 1e300\n").unwrap();
    let out = run([
        "--config", &p(&cfg), "register", "--baseline", &p(&ph.join("image.nii.gz")), "--followup",
        &p(&s.join("image.nii.gz")), "--work-shape", "16", "--levels", "1", "--iters", "3", "--out", &p(&r),
    ]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    let diag = validate("diagnostics", &r.join("diagnostics.json"));
    assert_eq!(diag["status"], "diverged");
}

#[test]
fn register_missing_input_is_io_error() {
    let d = tempfile::tempdir().unwrap();
    let out = run(["register", "--baseline", "nope.nii", "--followup", "nope.nii", "--out", &p(d.path())]);
    assert_eq!(code(&out), 1);
}

/// Three-scan series built by chaining `synth`; returns the manifest path.
fn series(dir: &Path) -> std::path::PathBuf {
    let ph = dir.join("t0");
    ok(["phantom", "--shape", "32", "--lesions", "1", "--radius", "4,5", "--seed", "8", "--out", &p(&ph)]);
    let mut prev = ph;
    for (i, seed) in [(1, "21"), (2, "22")] {
        let next = dir.join(format!("t{i}"));
        ok([
            "synth", "--image", &p(&prev.join("image.nii.gz")), "--mask", &p(&prev.join("mask.nii.gz")),
            "--seed", seed, "--out", &p(&next),
        ]);
        prev = next;
    }
    let manifest = serde_json::json!({
        "patient_id": "P0",
        "scans": (0..3).map(|i| serde_json::json!({
            "t": i, "image": format!("t{i}/image.nii.gz"), "gt_mask": format!("t{i}/mask.nii.gz")
        })).collect::<Vec<_>>()
    });
    let path = dir.join("series.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    common::validate_value("series_manifest", &manifest);
    path
}

#[test]
fn track_then_eval() {
    let d = tempfile::tempdir().unwrap();
    let manifest = series(d.path());
    let tr = d.path().join("track");
    let mut args = vec![
        "track".to_string(), "--series".into(), p(&manifest), "--patch-size".into(), "24".into(), "--out".into(), p(&tr),
    ];
    args.extend(FAST_REG.iter().map(|s| s.to_string()));
    ok(&args);
    let report = validate("tracking_report", &tr.join("tracking_report.json"));
    let tps = report["timepoints"].as_array().unwrap();
    assert_eq!(tps.len(), 3);
    let empty = tps
        .iter()
        .flat_map(|t| t["lesions"].as_array().unwrap())
        .filter(|l| l["empty"].as_bool().unwrap())
        .count();
    assert_eq!(empty, 0);
    for t in 0..3 {
        assert!(tr.join(format!("pred_t{t}.nii.gz")).is_file());
    }
    validate("eval_manifest", &tr.join("predictions.json"));

    let ev = d.path().join("eval");
    let out = ok(["eval", "--manifest", &p(&tr.join("predictions.json")), "--out", &p(&ev)]);
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let metrics = validate("metrics", &ev.join("metrics.json"));
    assert_eq!(printed, metrics);
    assert_eq!(metrics["overall"]["cpm_at_25"], 100.0);
    let csv = std::fs::read_to_string(ev.join("lesions.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn track_with_prompt_file_and_point_mode() {
    let d = tempfile::tempdir().unwrap();
    let manifest = series(d.path());
    let pr = d.path().join("prompts");
    ok(["prompt", "--mask", &p(&d.path().join("t0/mask.nii.gz")), "--type", "point", "--seed", "3", "--out", &p(&pr)]);
    let tr = d.path().join("track");
    let mut args = vec![
        "track".to_string(), "--series".into(), p(&manifest), "--prompts".into(), p(&pr.join("prompts.json")),
        "--mode".into(), "point".into(), "--patch-size".into(), "24".into(), "--out".into(), p(&tr),
    ];
    args.extend(FAST_REG.iter().map(|s| s.to_string()));
    ok(&args);
    let report = validate("tracking_report", &tr.join("tracking_report.json"));
    assert_eq!(report["mode"], "point");
    assert_eq!(report["timepoints"][1]["lesions"][0]["prompt"]["type"], "point");
}

fn eval_manifest(dir: &Path, gt: &Path, pred: &Path) -> std::path::PathBuf {
    let m = serde_json::json!({"scans": [
        {"patient_id": "A", "scan_id": "s0", "gt": p(gt), "pred": p(pred)}
    ]});
    common::validate_value("eval_manifest", &m);
    let path = dir.join("eval.json");
    std::fs::write(&path, m.to_string()).unwrap();
    path
}

#[test]
fn eval_of_ground_truth_is_perfect() {
    let d = tempfile::tempdir().unwrap();
    let ph = d.path().join("ph");
    ok(["phantom", "--shape", "32", "--lesions", "2", "--radius", "3,4", "--seed", "5", "--out", &p(&ph)]);
    let m = ph.join("mask.nii.gz");
    let manifest = eval_manifest(d.path(), &m, &m);
    let out = ok(["eval", "--manifest", &p(&manifest), "--out", &p(&d.path().join("ev"))]);
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    validate_metrics(&r);
    assert_eq!(r["overall"]["dice"], 1.0);
    assert_eq!(r["overall"]["cpm_at_25"], 100.0);
    assert_eq!(r["overall"]["med_mm"], 0.0);
}

fn validate_metrics(v: &serde_json::Value) {
    common::validate_value("metrics", v);
}

#[test]
fn eval_grid_mismatch_names_the_scan() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    ok(["phantom", "--shape", "24", "--lesions", "1", "--radius", "3,4", "--seed", "5", "--out", &p(&a)]);
    ok(["phantom", "--shape", "20", "--lesions", "1", "--radius", "3,4", "--seed", "5", "--out", &p(&b)]);
    let manifest = eval_manifest(d.path(), &a.join("mask.nii.gz"), &b.join("mask.nii.gz"));
    let out = run(["eval", "--manifest", &p(&manifest), "--out", &p(&d.path().join("ev"))]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("scan s0 of patient A"), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
}

#[test]
fn thread_count_does_not_change_results() {
    let d = tempfile::tempdir().unwrap();
    let ph = d.path().join("ph");
    small_phantom(&ph, 2);
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    let args = |o: &Path| {
        vec![
            "synth".to_string(), "--image".into(), p(&ph.join("image.nii.gz")), "--mask".into(),
            p(&ph.join("mask.nii.gz")), "--seed".into(), "4".into(), "--out".into(), p(o),
        ]
    };
    let one = common::bin().env("LL_THREADS", "1").args(args(&a)).output().unwrap();
    assert!(one.status.success());
    let four = common::bin().args(["--threads", "4"]).args(args(&b)).output().unwrap();
    assert!(four.status.success());
    same_files(&a, &b, &["image.nii.gz", "mask.nii.gz", "field_dx.nii.gz", "params_used.json"]);
    let zero = common::bin().env("LL_THREADS", "0").args(args(&a)).output().unwrap();
    assert_eq!(zero.status.code(), Some(2));
}
