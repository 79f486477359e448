use std::path::Path;
use std::process::{Command, Output};

fn telecoop(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_telecoop"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn compare_writes_traces_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = telecoop(&["compare", "--out", "run", "--duration", "3"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("fic_steady_force"));
    for f in [
        "config.toml",
        "report.json",
        "exp1_fic.csv",
        "exp1_fic.meta.json",
        "exp1_ic.csv",
    ] {
        assert!(dir.path().join("run").join(f).exists(), "missing {f}");
    }
    let audit = telecoop(
        &[
            "audit",
            "--trace",
            "run/exp1_fic.csv",
            "--trace",
            "run/exp1_ic.csv",
        ],
        dir.path(),
    );
    assert!(audit.status.success(), "{}", stdout(&audit));
    let plot = telecoop(
        &[
            "plot",
            "--kind",
            "force-profile",
            "--trace",
            "run/exp1_fic.csv",
            "--out",
            "f.csv",
        ],
        dir.path(),
    );
    assert!(plot.status.success());
}

#[test]
fn saved_config_reruns_to_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    assert!(telecoop(
        &[
            "run",
            "exp52",
            "--seed",
            "3",
            "--duration",
            "1.5",
            "--out",
            "a"
        ],
        dir.path()
    )
    .status
    .success());
    let o = telecoop(
        &["run", "--config", "a/config.toml", "--out", "b"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = std::fs::read(dir.path().join("a/exp52_funnel.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/exp52_funnel.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn validation_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.toml"),
        "[controller.linear]\nx_b = 0.0\n",
    )
    .unwrap();
    let o = telecoop(&["run", "exp1", "--config", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("x_b"));
    assert_eq!(
        telecoop(&["run", "nosuch"], dir.path()).status.code(),
        Some(2)
    );
    assert_eq!(
        telecoop(&["run", "exp1", "--duration", "-1"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // a soft, heavy plant with a huge step blows up at this dt
    std::fs::write(
        dir.path().join("wild.toml"),
        "dt = 0.01\n[controller.linear]\nk_zeta = 4000.0\nf_max = 2000.0\nx_b = 0.4\ndamping = 0.0\n[plant]\nkind = \"planar\"\nlengths = [0.3, 0.3, 0.2]\nmasses = [0.01, 0.01, 0.01]\n[scenario]\nid = \"tracking\"\nsteps = [[0.0, [0.1, 0.1]]]\n",
    )
    .unwrap();
    let o = telecoop(
        &["run", "--config", "wild.toml", "--duration", "5"],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}{}",
        stdout(&o),
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn sweep_subset_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = telecoop(
        &[
            "sweep",
            "--delays",
            "0,0.5",
            "--rates",
            "20",
            "--duration",
            "15",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).matches("PASS").count(), 2);
}

#[test]
fn serve_runs_for_a_bounded_time() {
    let dir = tempfile::tempdir().unwrap();
    let o = telecoop(
        &["serve", "--port", "0", "--duration", "0.5", "--out", "s"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("serving on ws://127.0.0.1:"));
    assert!(dir.path().join("s/session.json").exists());
}
