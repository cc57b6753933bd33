#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lesiontrack"));
    c.env_remove("LL_THREADS");
    c
}

/// Run the binary with `args`, returning the raw output.
pub fn run<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    bin().args(args).output().expect("spawn lesiontrack")
}

/// Run and require exit code 0.
pub fn ok<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = run(args);
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn p(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas")
}

/// Validate a JSON document against `schemas/<name>.schema.json`.
pub fn validate_value(name: &str, doc: &serde_json::Value) {
    let text = std::fs::read_to_string(schema_dir().join(format!("{name}.schema.json"))).unwrap();
    let schema: serde_json::Value = serde_json::from_str(&text).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).expect("schema compiles");
    if let Err(errors) = compiled.validate(doc) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("{name} schema violations:\n{}", msgs.join("\n"));
    };
}

pub fn validate(name: &str, file: &Path) -> serde_json::Value {
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(file).unwrap()).unwrap();
    validate_value(name, &doc);
    doc
}

pub fn sha256(path: &Path) -> String {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path).unwrap();
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Phantom at `dir` with a small, quick spec.
pub fn small_phantom(dir: &Path, seed: u64) {
    ok([
        "phantom", "--shape", "24", "--lesions", "1", "--radius", "3,4", "--seed", &seed.to_string(), "--out", &p(dir),
    ]);
}

/// Registration settings small enough for tests.
pub const FAST_REG: [&str; 8] = ["--work-shape", "24", "--levels", "2,1", "--iters", "20,10", "--similarity", "local:2"];
