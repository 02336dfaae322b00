use std::path::Path;
use std::process::{Command, Output};

fn greenfit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_greenfit"))
        .args(args)
        .current_dir(cwd)
        .env_remove("GREENFIT_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn generate_train_eval_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    let o = greenfit(
        &["generate", "--problem", "poisson1d", "--grid", "33", "--train", "30", "--test", "8", "--gp-scale", "0.05", "--out", "data"],
        cwd,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("pairs=38"));

    let config = "[train]\nnmax = 20\ndict = 64\nseed = 2\n";
    std::fs::write(cwd.join("run.toml"), config).unwrap();
    let o = greenfit(&["--config", "run.toml", "train", "--data", "data", "--out", "run"], cwd);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("n=20"), "{}", stdout(&o));
    assert!(stderr(&o).contains("n=0 "), "progress rows go to stderr");
    let trace = std::fs::read_to_string(cwd.join("run/trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 22);

    let o = greenfit(&["eval", "--model", "run"], cwd);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("model_kind=oga") && out.contains("pairs=8") && out.contains("eps_G="), "{out}");

    let o = greenfit(&["rate", "--trace", "run", "--window", "4..20", "--metric", "residual_H"], cwd);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("residual_H: slope=-"), "{}", stdout(&o));

    let o = greenfit(&["-q", "train", "--data", "data", "--out", "run", "--nmax", "4", "--mode", "pwoga", "--sensors", "5..8"], cwd);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--force"));
    let o = greenfit(
        &["-q", "--force", "train", "--data", "data", "--out", "run", "--nmax", "4", "--mode", "pwoga", "--sensors", "5..8"],
        cwd,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).is_empty(), "quiet run printed {}", stderr(&o));
    assert!(stdout(&o).contains("termination=completed=3"), "{}", stdout(&o));
}

#[test]
fn bad_input_exits_with_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    let o = greenfit(&["repro", "nope"], cwd);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown preset"));

    std::fs::write(cwd.join("bad.toml"), "[train]\nbogus = 1\n").unwrap();
    let o = greenfit(&["--config", "bad.toml", "train"], cwd);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));

    let o = greenfit(&["train", "--data", "missing", "--out", "run"], cwd);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("manifest.txt"), "{}", stderr(&o));
}
