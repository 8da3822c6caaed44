use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rffid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rffid")).args(args).output().unwrap()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("smoke.cfg");
    fs::write(
        &path,
        format!(
            "# smoke sweep\nprofiles = T1,T2\ntrain_frames = 6\ntest_frames = 3\ntrials = 2\nsnr_list = 10,20\n\
             n_antennas = 2\nschemes = ORS,DFS\nseed = 9\n{extra}"
        ),
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn analyze_prints_the_bound_table() {
    let out = rffid(&["analyze", "--alpha", "0.95", "--snr", "15", "--n", "4,8,16"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("0.1743"), "{text}");
    assert!(text.contains("0.1232"), "{text}");
    assert!(text.contains("MIWS") && text.contains("DFS"), "{text}");
}

#[test]
fn analyze_rejects_unsorted_antenna_counts() {
    let out = rffid(&["analyze", "--alpha", "0.95", "--snr", "15", "--n", "8,4"]);
    assert!(!out.status.success());
}

#[test]
fn run_writes_results_and_plot_renders_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let csv = dir.path().join("results.csv");
    let out = rffid(&["run", "--config", &cfg, "--out", csv.to_str().unwrap(), "--trials", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("scheme,feature,snr_db,n_antennas,group_size,chi,trial,seed,accuracy")
    );
    assert_eq!(lines.count(), 2 * 2 * 3);

    let svg = dir.path().join("fig.svg");
    let out = rffid(&[
        "plot", "--results", csv.to_str().unwrap(), "--x", "snr_db", "--y", "accuracy", "--series", "scheme",
        "--out", svg.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let svg_text = fs::read_to_string(&svg).unwrap();
    assert_eq!(svg_text.matches("<polyline").count(), 2);
    assert!(svg_text.contains("(n=3,3)"));
}

#[test]
fn run_overrides_scheme_and_feature() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let csv = dir.path().join("r.csv");
    let out = rffid(&[
        "run", "--config", &cfg, "--out", csv.to_str().unwrap(), "--scheme", "UWS,MIWS", "--feature", "itd",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.lines().skip(1).all(|l| l.starts_with("UWS,itd,") || l.starts_with("MIWS,itd,")));
}

#[test]
fn unknown_config_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "antennas = 4\n");
    let out = rffid(&["run", "--config", &cfg, "--out", dir.path().join("r.csv").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("antennas"));
}

#[test]
fn plot_unknown_column_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    fs::write(&csv, "scheme,snr_db,accuracy\nORS,10,0.5\n").unwrap();
    let svg = dir.path().join("fig.svg");
    let out = rffid(&[
        "plot", "--results", csv.to_str().unwrap(), "--x", "snr", "--y", "accuracy", "--series", "scheme",
        "--out", svg.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("snr_db"));
    assert!(!svg.exists());
}

#[test]
fn gen_uses_the_command_line_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, seed) in [(&a, "1"), (&b, "2")] {
        let o = rffid(&["gen", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", seed]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let manifest = fs::read_to_string(a.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 1"), "{manifest}");
    let name = "trial0001_emitter1.jsonl";
    assert_ne!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
}
