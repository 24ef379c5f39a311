use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_efld-lab"));
    c.env_remove("EFLD_DATA_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn efld-lab")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = "[data]\nsource = \"synthetic\"\nn = 60\ntest_n = 30\ndim = 4\nclasses = 3\n\
                     [optimizer]\nbatch_size = 10\n[run]\nsteps = 40\n[bound]\neval_every = 5\n";

fn quadratic_config() -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/quadratic_minimal.toml")).unwrap()
}

#[test]
fn minimal_quadratic_run_writes_100_rows() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "q.toml", &quadratic_config());
    let out = tmp.path().join("out");
    let o = run(&["train", "--config", &cfg, "--out", out.to_str().unwrap(), "--seeds", "0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("seed_0.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 101);
    assert!(lines[0].starts_with("t,epoch,eta,sigma,alpha,mean_disc"));
    for f in ["aggregate.csv", "bound.svg", "errors.svg", "bound_train.svg", "grad_stats.svg", "meta.txt"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn same_config_and_seeds_give_identical_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "s.toml", SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, threads) in [(&a, "1"), (&b, "2")] {
        let o = run(&["train", "--config", &cfg, "--out", dir.to_str().unwrap(), "--seeds", "0..3", "--threads", threads]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["seed_0.csv", "seed_2.csv", "aggregate.csv", "bound.svg", "errors.svg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn aggregate_ignores_seed_order() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "s.toml", SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(code(&run(&["train", "--config", &cfg, "--out", a.to_str().unwrap(), "--seeds", "0,1,2"])), 0);
    assert_eq!(code(&run(&["train", "--config", &cfg, "--out", b.to_str().unwrap(), "--seeds", "2,0,1"])), 0);
    assert_eq!(fs::read(a.join("aggregate.csv")).unwrap(), fs::read(b.join("aggregate.csv")).unwrap());
}

#[test]
fn config_errors_exit_1_and_name_the_key() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "[optimizer]\nlearnig_rate = 0.1\n");
    let o = run(&["train", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("learnig_rate"), "{}", stderr(&o));

    let cfg = write(tmp.path(), "sweep.toml", &format!("{SMALL}[sweep]\naxis = \"alpha\"\nvalues = []\n"));
    let o = run(&["sweep", "--config", &cfg, "--out", tmp.path().to_str().unwrap(), "--seeds", "0"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("empty"), "{}", stderr(&o));
}

#[test]
fn missing_config_exits_2() {
    let o = run(&["train", "--config", "/nonexistent/run.toml"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn diverging_run_exits_3() {
    let tmp = TempDir::new().unwrap();
    let text = SMALL.replace("[optimizer]\n", "[optimizer]\nkind = \"sgd\"\ndecay_rate = 1.0\neta0 = 1e308\n");
    let cfg = write(tmp.path(), "nan.toml", &text);
    let o = run(&["train", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap(), "--seeds", "0"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("step"), "{}", stderr(&o));
}

#[test]
fn verify_exit_codes() {
    let o = run(&["verify", "lemmas"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
    let o = run(&["verify", "nonsense"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("unknown suite"));
    // The unhalved-TV link of the divergence chain is false on some pairs.
    let o = run(&["verify", "divergences"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("trial"));
}

#[test]
fn sweep_over_n_scales_bound_exactly() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "s.toml", SMALL);
    let out = tmp.path().join("sw");
    let o = run(&[
        "sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--seeds", "0", "--axis", "n", "--values", "500,1000,2000",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let bounds: Vec<f64> =
        summary.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(bounds.len(), 3);
    assert!((bounds[0] / bounds[1] - 2.0).abs() < 1e-12);
    assert!((bounds[1] / bounds[2] - 2.0).abs() < 1e-12);
    assert!(out.join("sweep.csv").is_file() && out.join("sweep_bound.svg").is_file());
}

#[test]
fn plot_single_series_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "q.toml", &quadratic_config());
    let out = tmp.path().join("run");
    assert_eq!(code(&run(&["train", "--config", &cfg, "--out", out.to_str().unwrap(), "--seeds", "0"])), 0);
    let csv = out.join("seed_0.csv");
    let svg_a = tmp.path().join("a.svg");
    let svg_b = tmp.path().join("b.svg");
    for svg in [&svg_a, &svg_b] {
        let o = run(&["plot", csv.to_str().unwrap(), "--y", "our_bound", "--log", "--out", svg.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let text = fs::read_to_string(&svg_a).unwrap();
    assert_eq!(text.matches("<polyline").count(), 1);
    assert!(text.contains(">t<") && text.contains("our_bound"));
    assert!(text.contains(r#"width="800""#) && text.contains(r#"height="600""#));
    assert_eq!(fs::read(&svg_a).unwrap(), fs::read(&svg_b).unwrap());

    let o = run(&[
        "plot", csv.to_str().unwrap(), "--y", "mean_grad_sq,mean_disc,incoh_surrogate", "--log", "--out",
        tmp.path().join("stats.svg").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
}

#[test]
fn plot_rejects_bad_csvs() {
    let tmp = TempDir::new().unwrap();
    let empty = write(tmp.path(), "empty.csv", "");
    let o = run(&["plot", &empty, "--out", tmp.path().join("e.svg").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("empty"), "{}", stderr(&o));

    let wrong = write(tmp.path(), "wrong.csv", "t,epoch,eta,sigma,alfa\n1,0,1,1,1\n");
    let o = run(&["plot", &wrong, "--out", tmp.path().join("w.svg").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("alfa") && stderr(&o).contains("alpha"), "{}", stderr(&o));
}

#[test]
fn larger_inverse_temperature_gives_larger_bound() {
    use efld_lab::config::RunConfig;
    let cfg = RunConfig::from_toml(SMALL).unwrap();
    let bound_at = |beta: f64| {
        let mut c = cfg.clone();
        c.optimizer.beta = Some(beta);
        let out = efld_lab::commands::train(&c, &[0, 1], None, 1).unwrap();
        out.final_median("our_bound")
    };
    let (low, high) = (bound_at(5000.0), bound_at(55000.0));
    assert!(high > low, "beta 55000 gives {high}, beta 5000 gives {low}");
}
