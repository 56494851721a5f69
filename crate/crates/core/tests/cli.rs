use std::path::Path;
use std::process::{Command, Output};

use automaton_drive::pipeline::RunManifest;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_automaton-drive")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = cli(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn error_line(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = r#"
[model]
model = "controller"
states = 3
predicates = 4
raster = { channels = 5, size = 32, resolution = 1.0 }

[train]
iterations = 20
batch_size = 4
jobs = 1

[sweep]
seeds = [0]
states = [3, 6]
train = { iterations = 3, batch_size = 2 }
controller = { raster = { channels = 5, size = 32, resolution = 1.0 } }
baseline = { raster = { channels = 5, size = 32, resolution = 1.0 } }
"#;

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    std::fs::write(p("small.toml"), SMALL).unwrap();
    let data = p("data");
    ok(&["gen-data", "--out", s(&data), "--scenes", "10", "--seed", "3", "--config", s(&p("small.toml"))]);
    assert!(data.join("manifest.json").exists());

    let ckpt = p("model.ckpt");
    ok(&["train", "--data", s(&data), "--out", s(&ckpt), "--config", s(&p("small.toml"))]);
    let m = RunManifest::load(&p("model.ckpt.manifest.json")).unwrap();
    assert_eq!(m.command, "train");
    assert_eq!(m.checkpoint_sha256.as_deref().map(str::len), Some(64));
    let curve = std::fs::read_to_string(p("model.ckpt.loss.csv")).unwrap();
    assert!(curve.starts_with("iteration,loss\n"));

    let scene = data.join("scene_009.json");
    for name in ["a.csv", "b.csv"] {
        ok(&["rollout", "--ckpt", s(&ckpt), "--scene", s(&scene), "--trace", s(&p(name))]);
    }
    assert_eq!(std::fs::read(p("a.csv")).unwrap(), std::fs::read(p("b.csv")).unwrap());

    let out = ok(&["eval", "--ckpt", s(&ckpt), "--data", s(&data), "--seeds", "2", "--out", s(&p("m.csv")), "--jobs", "2"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("goal_distance"));
    let rows = std::fs::read_to_string(p("m.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 2);

    ok(&["saliency", "--ckpt", s(&ckpt), "--scene", s(&scene), "--out", s(&p("sal"))]);
    let maps = std::fs::read_dir(p("sal")).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "pgm")).count();
    assert_eq!(maps, 40 * 3);
    assert!(p("sal/manifest.json").exists());

    ok(&["sweep", "--kind", "qstates", "--data", s(&data), "--out", s(&p("sweep.csv")), "--config", s(&p("small.toml")), "--jobs", "1"]);
    let sweep = std::fs::read_to_string(p("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 2);
}

#[test]
fn failures_map_to_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    std::fs::write(p("small.toml"), SMALL).unwrap();
    let data = p("data");
    ok(&["gen-data", "--out", s(&data), "--scenes", "5", "--config", s(&p("small.toml"))]);

    // default 64x64 model against a 32x32 dataset
    let ckpt = p("wide.ckpt");
    let model = automaton_drive::model::Model::new(Default::default(), 0).unwrap();
    model.save(&ckpt).unwrap();
    let out = cli(&["eval", "--ckpt", s(&ckpt), "--data", s(&data), "--out", s(&p("m.csv"))]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_line(&out)["error"], "schema");

    let out = cli(&["eval", "--ckpt", s(&p("missing.ckpt")), "--data", s(&data), "--out", s(&p("m.csv"))]);
    assert_eq!(out.status.code(), Some(5));
    assert_eq!(error_line(&out)["code"], 5);

    let out = cli(&["train", "--data", s(&data), "--out", s(&p("x.ckpt")), "--bogus"]);
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(p("bad.toml"), "[train]\nbatch_size = 0\n[model]\nmodel = \"controller\"\nraster = { channels = 5, size = 32, resolution = 1.0 }\n").unwrap();
    let out = cli(&["train", "--data", s(&data), "--out", s(&p("x.ckpt")), "--config", s(&p("bad.toml"))]);
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(p("broken.toml"), "[train\n").unwrap();
    let out = cli(&["train", "--data", s(&data), "--out", s(&p("x.ckpt")), "--config", s(&p("broken.toml"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn help_lists_every_command() {
    let out = ok(&["--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for c in ["gen-data", "train", "rollout", "eval", "sweep", "saliency"] {
        assert!(text.contains(c), "{c}");
    }
}
