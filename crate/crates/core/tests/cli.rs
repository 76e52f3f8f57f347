use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn kinnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinnet"))
        .args(args)
        .env_remove("KINNET_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("kinnet.toml");
    fs::write(&path, "seed = 7\n\n[simulate]\nn_provinces = 4\n").unwrap();
    path
}

#[test]
fn stage_by_stage_matches_all_and_reruns_are_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let sim = tmp.path().join("sim");
    let sim_s = sim.to_str().unwrap();
    ok(kinnet(&["--config", cfg, "--out", sim_s, "simulate"]));
    let elections = sim.join("synthetic/elections.csv");
    let socio = sim.join("synthetic/socio.csv");
    assert!(elections.exists() && socio.exists() && sim.join("synthetic/truth.json").exists());

    let staged = tmp.path().join("staged");
    let staged_s = staged.to_str().unwrap();
    ok(kinnet(&["--config", cfg, "--out", staged_s, "ingest", "--elections", elections.to_str().unwrap()]));
    for stage in ["graph", "detect", "metrics", "party", "trend"] {
        ok(kinnet(&["--config", cfg, "--out", staged_s, stage]));
    }
    ok(kinnet(&["--config", cfg, "--out", staged_s, "regress", "--socio", socio.to_str().unwrap()]));
    ok(kinnet(&["--config", cfg, "--out", staged_s, "report"]));

    let all = tmp.path().join("all");
    ok(kinnet(&[
        "--config",
        cfg,
        "--out",
        all.to_str().unwrap(),
        "--workers",
        "1",
        "all",
        "--elections",
        elections.to_str().unwrap(),
        "--socio",
        socio.to_str().unwrap(),
    ]));
    let staged_files = files(&staged);
    let rel = |root: &Path, fs_: &[PathBuf]| -> Vec<PathBuf> {
        fs_.iter().map(|p| p.strip_prefix(root).unwrap().to_path_buf()).collect()
    };
    assert_eq!(rel(&staged, &staged_files), rel(&all, &files(&all)));
    for p in &staged_files {
        let twin = all.join(p.strip_prefix(&staged).unwrap());
        assert_eq!(fs::read(p).unwrap(), fs::read(&twin).unwrap(), "{}", p.display());
    }

    // Every output names the tool version and config hash.
    for p in &staged_files {
        let text = fs::read_to_string(p).unwrap();
        assert!(text.contains("config_sha256"), "{} lacks metadata", p.display());
        assert!(text.contains(env!("CARGO_PKG_VERSION")), "{} lacks version", p.display());
    }

    // Rerunning a stage rewrites identical bytes.
    let before: Vec<Vec<u8>> = staged_files.iter().map(|p| fs::read(p).unwrap()).collect();
    ok(kinnet(&["--config", cfg, "--out", staged_s, "metrics"]));
    ok(kinnet(&["--config", cfg, "--out", staged_s, "detect"]));
    let after: Vec<Vec<u8>> = staged_files.iter().map(|p| fs::read(p).unwrap()).collect();
    assert!(before == after);
}

#[test]
fn out_of_order_stage_names_its_prerequisite() {
    let tmp = tempfile::tempdir().unwrap();
    let out = kinnet(&["--out", tmp.path().to_str().unwrap(), "metrics"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("partition.csv") && err.contains("kinnet detect"), "{err}");
}

#[test]
fn worker_env_var_does_not_change_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let run = |dir: &str, workers: Option<&str>| {
        let out = tmp.path().join(dir);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_kinnet"));
        cmd.args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "all", "--synthetic"]);
        match workers {
            Some(w) => cmd.env("KINNET_WORKERS", w),
            None => cmd.env_remove("KINNET_WORKERS"),
        };
        ok(cmd.output().unwrap());
        out
    };
    let a = run("a", Some("1"));
    let b = run("b", Some("3"));
    let fa = files(&a);
    assert!(!fa.is_empty());
    for p in &fa {
        assert_eq!(fs::read(p).unwrap(), fs::read(b.join(p.strip_prefix(&a).unwrap())).unwrap());
    }
}

#[test]
fn bad_config_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[leiden]\ngamma = \"high\"\n").unwrap();
    let out = kinnet(&["--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap(), "simulate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
}

#[test]
fn readme_config_lists_the_defaults() {
    let readme = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md")).unwrap();
    let start = readme.find("```toml\n").expect("toml block") + 8;
    let end = start + readme[start..].find("```").unwrap();
    let cfg = kinnet::pipeline::RunConfig::from_toml(&readme[start..end]).unwrap();
    assert_eq!(cfg.hash(), kinnet::pipeline::RunConfig::default().hash());
}
