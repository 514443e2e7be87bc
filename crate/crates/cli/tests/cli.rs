use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TEXT: &str = "the quick brown fox jumps over the lazy dog. the dog sleeps and the fox runs away. ";

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("corpus.txt"), TEXT.repeat(6)).unwrap();
        let config = format!(
            "seed = 4\nout_dir = \"out\"\n[model]\nkind = \"mlp\"\nhidden = [8]\ncontext = 1\n\
             [data]\ncorpus = \"corpus.txt\"\nseq_len = 24\ncalibration = 3\nheldout = 3\n\
             [train]\nepochs = 1\nlr = 0.5\nbatch_size = 4\n{extra}"
        );
        std::fs::write(dir.path().join("run.toml"), config).unwrap();
        Self { dir }
    }

    fn path(&self, p: &str) -> PathBuf {
        self.dir.path().join(p)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_mprune"))
            .arg("--config")
            .arg(self.path("run.toml"))
            .args(args)
            .output()
            .unwrap()
    }

    fn trained(&self) -> PathBuf {
        let out = self.run(&["train"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        self.path("out/model.ckpt")
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn config_errors_exit_2() {
    let ws = Workspace::new("");
    std::fs::write(ws.path("corpus.txt"), "").unwrap();
    let out = ws.run(&["train"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let missing = Command::new(env!("CARGO_BIN_EXE_mprune"))
        .args(["--config", "/nonexistent/run.toml", "train"])
        .output()
        .unwrap();
    assert_eq!(code(&missing), 2);

    let ws = Workspace::new("");
    assert_eq!(code(&ws.run(&["--criterion", "magnitude", "prune"])), 2);
    assert_eq!(code(&ws.run(&["prune"])), 2, "no checkpoint given");
}

#[test]
fn exploding_learning_rate_exits_3() {
    let ws = Workspace::new("");
    let text = std::fs::read_to_string(ws.path("run.toml")).unwrap().replace("lr = 0.5", "lr = 1e300");
    std::fs::write(ws.path("run.toml"), text).unwrap();
    assert_eq!(code(&ws.run(&["train"])), 3);
}

#[test]
fn diverging_envelope_solver_exits_5() {
    let ws = Workspace::new("[moreau]\nrho = 1e9\ngamma = 1e9\n");
    let ckpt = ws.trained();
    let out = ws.run(&["--checkpoint", ckpt.to_str().unwrap(), "--criterion", "moreau", "prune"]);
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn training_is_byte_deterministic() {
    let ws = Workspace::new("");
    let first = std::fs::read(ws.trained()).unwrap();
    let second = std::fs::read(ws.trained()).unwrap();
    assert_eq!(first, second);
    let out = ws.run(&["--seed", "5", "--out", ws.path("other").to_str().unwrap(), "train"]);
    assert!(out.status.success());
    assert_ne!(std::fs::read(ws.path("other/model.ckpt")).unwrap(), first);
}

#[test]
fn zero_ratio_keeps_every_parameter() {
    let ws = Workspace::new("");
    let ckpt = ws.trained();
    let out = ws.run(&["--checkpoint", ckpt.to_str().unwrap(), "--ratio", "0", "--criterion", "plain", "prune"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&ws.path("out/importance.json"));
    assert_eq!(doc["params_before"], doc["params_after"]);
    assert_eq!(doc["prune_set"].as_array().unwrap().len(), 0);
    let csv = std::fs::read_to_string(ws.path("out/importance.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "group_id,class,score,pruned");
    assert_eq!(csv.lines().count(), 9);
}

#[test]
fn recover_with_zero_learning_rate_is_identity() {
    let ws = Workspace::new("[recover]\nepochs = 1\nlr = 0.0\n");
    let ckpt = ws.trained();
    assert!(ws.run(&["--checkpoint", ckpt.to_str().unwrap(), "--criterion", "plain", "prune"]).status.success());
    let pruned = ws.path("out/pruned.ckpt");
    let out = ws.run(&["--checkpoint", pruned.to_str().unwrap(), "recover"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(ws.path("out/recovered.ckpt")).unwrap(), std::fs::read(pruned).unwrap());
}

#[test]
fn identical_perturbations_give_identical_prune_sets() {
    let ws = Workspace::new("[robustness]\ncriteria = [\"plain\", \"moreau\"]\nfirst = { kind = \"identity\" }\nsecond = { kind = \"identity\" }\n");
    let ckpt = ws.trained();
    let out = ws.run(&["--checkpoint", ckpt.to_str().unwrap(), "--strict", "robustness"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&ws.path("out/robustness.json"));
    for r in doc["reports"].as_array().unwrap() {
        assert_eq!(r["jaccard"], 1.0);
        assert_eq!(r["importance_distance"], 0.0);
    }
    assert!(ws.path("out/robustness.csv").is_file());
}
