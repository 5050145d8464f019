use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use autoprune::environ::search;
use autoprune::evaluators::ProxyModel;
use autoprune::harness::RunConfig;

fn autoprune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autoprune"))
        .args(args)
        .output()
        .unwrap()
}

fn nets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../nets")
}

fn write_config(dir: &Path, out: &str, extra: &str) -> PathBuf {
    let path = dir.join(format!("{out}.cfg"));
    fs::write(
        &path,
        format!("evaluator = proxy\nconstraint = flops\nalpha = 0.5\nepisodes = 60\nwarmup_episodes = 20\ncheckpoint_every = 20\nout_dir = {out}\n{extra}"),
    )
    .unwrap();
    path
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn flops_prints_the_anchor_totals() {
    let out = autoprune(&["flops", nets().join("vgg19.net").to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("total,,19632062464\n"), "{text}");
}

#[test]
fn full_run_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run", "");
    let cfg = cfg.to_str().unwrap();
    for args in [
        vec!["search", cfg],
        vec!["baseline", cfg, "--policy", "all"],
        vec!["random", cfg],
        vec!["oracle", cfg],
    ] {
        let out = autoprune(&args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let run = tmp.path().join("run");
    let before = snapshot(&run);
    let out = autoprune(&["report", run.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(before, snapshot(&run), "report must not touch the run directory");
    let text = String::from_utf8(out.stdout).unwrap();
    let table: Vec<&str> = text.lines().skip(1).take_while(|l| !l.is_empty()).collect();
    assert_eq!(table[0], "policy,error,flops_fraction,reward,ratios,note");
    let rows: Vec<&str> = table[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        rows,
        [
            "learned",
            "uniform",
            "shallow_aggressive",
            "deep_aggressive",
            "random",
            "oracle"
        ]
    );
    assert!(text.contains("# reward vs episode\n") && text.contains("# accuracy vs flops\n"));

    let manifest: autoprune::harness::RunManifest =
        autoprune::harness::read_json(&run.join(autoprune::harness::MANIFEST)).unwrap();
    for record in &manifest.commands {
        for artifact in &record.artifacts {
            assert!(run.join(artifact).exists(), "{artifact} listed but missing");
        }
    }
    assert_eq!(manifest.commands.len(), 4);
}

#[test]
fn errors_exit_nonzero_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = autoprune(&["report", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no run artifacts"));

    let bad = tmp.path().join("bad.cfg");
    fs::write(&bad, "episodes = 10\nlearning_rate = 3\n").unwrap();
    let out = autoprune(&["search", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key `learning_rate`"));

    assert!(!autoprune(&["search", "/nonexistent/x.cfg"]).status.success());
    assert!(!autoprune(&["flops", "--bogus"]).status.success());
    assert!(!autoprune(&["frobnicate"]).status.success());
}

#[test]
fn resumed_run_matches_an_uninterrupted_one() {
    let tmp = tempfile::tempdir().unwrap();
    let full = write_config(tmp.path(), "full", "");
    assert!(autoprune(&["search", full.to_str().unwrap()]).status.success());

    let part = write_config(tmp.path(), "part", "");
    let mut config = RunConfig::load(&part).unwrap();
    config.search.stop_after = Some(40);
    let outcome = search(&config.search, &ProxyModel::benchmark(), Some(&config.out_dir), false).unwrap();
    assert!(!outcome.complete);
    let out = autoprune(&["search", part.to_str().unwrap(), "--resume"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let a = fs::read(tmp.path().join("full/episodes.jsonl")).unwrap();
    let b = fs::read(tmp.path().join("part/episodes.jsonl")).unwrap();
    assert_eq!(a, b);
}
