//! Helpers shared by the CLI test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

pub const BIN: &str = env!("CARGO_BIN_EXE_mapdelta");

/// Runs the binary with a clean `MAPDELTA_*` environment plus `env`.
pub fn mapdelta(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    for (k, _) in std::env::vars() {
        if k.starts_with("MAPDELTA_") {
            cmd.env_remove(k);
        }
    }
    cmd.args(args).arg("--quiet");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

/// Hex SHA-256 of every file under `path` (or of `path` itself), keyed by relative path.
pub fn hash_tree(path: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    if path.is_file() {
        out.insert(String::new(), hex(&fs::read(path).unwrap()));
        return out;
    }
    let mut stack = vec![path.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(path).unwrap().display().to_string();
                out.insert(rel, hex(&fs::read(&p).unwrap()));
            }
        }
    }
    out
}

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// A small scene with a section so every subcommand has something to do.
pub const SMALL_SPEC: &str = r#"{
  "seed": 3,
  "n_map_images": 4,
  "n_query_images": 4,
  "section": { "n_images": 2 }
}"#;

/// Runs the whole subcommand chain into `dir` and returns each output's hashes.
pub fn run_chain(dir: &Path, extra: &[&str]) -> BTreeMap<String, BTreeMap<String, String>> {
    let p = |name: &str| dir.join(name).display().to_string();
    let spec = p("spec.json");
    fs::write(&spec, SMALL_SPEC).unwrap();
    let steps: Vec<(&str, Vec<String>)> = vec![
        ("bundle", vec!["synth".into(), "--spec".into(), spec.clone(), "--out".into(), p("bundle")]),
        ("pairs.json", vec!["pair-select".into(), "--bundle".into(), p("bundle"), "--out".into(), p("pairs.json")]),
        (
            "align.json",
            vec!["align".into(), "--bundle".into(), p("bundle"), "--pairs".into(), p("pairs.json"), "--out".into(), p("align.json")],
        ),
        (
            "masks",
            vec!["detect".into(), "--bundle".into(), p("bundle"), "--alignments".into(), p("align.json"), "--out".into(), p("masks")],
        ),
        (
            "masters",
            vec![
                "aggregate".into(),
                "--masks".into(),
                p("masks"),
                "--bundle".into(),
                p("bundle"),
                "--min-support".into(),
                "2".into(),
                "--out".into(),
                p("masters"),
            ],
        ),
        (
            "tags.json",
            vec!["propagate".into(), "--bundle".into(), p("bundle"), "--masters".into(), p("masters"), "--out".into(), p("tags.json")],
        ),
        ("updated", vec!["update".into(), "--bundle".into(), p("bundle"), "--tags".into(), p("tags.json"), "--out".into(), p("updated")]),
        (
            "merged",
            vec![
                "augment".into(),
                "--old".into(),
                p("updated"),
                "--section".into(),
                p("bundle/section"),
                "--corr".into(),
                p("bundle/corr.json"),
                "--out".into(),
                p("merged"),
                "--report".into(),
                p("augment.json"),
            ],
        ),
        ("eval.json", vec!["eval".into(), "--pred".into(), p("masks"), "--gt".into(), p("bundle/truth"), "--out".into(), p("eval.json")]),
        ("e2e.json", vec!["e2e".into(), "--spec".into(), spec.clone(), "--report".into(), p("e2e.json")]),
        ("config.json", vec!["config".into(), "init".into(), "--out".into(), p("config.json")]),
    ];
    let mut hashes = BTreeMap::new();
    for (output, args) in steps {
        let mut args: Vec<&str> = args.iter().map(String::as_str).collect();
        args.extend_from_slice(extra);
        let o = mapdelta(&args, &[]);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        hashes.insert(output.to_string(), hash_tree(&dir.join(output)));
    }
    hashes.insert("augment.json".into(), hash_tree(&dir.join("augment.json")));
    hashes
}
