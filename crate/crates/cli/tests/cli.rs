use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bcpnp::io::read_csv_values;
use bcpnp::metrics::rmse;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn bcpnp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bcpnp")).args(args).output().unwrap()
}

fn run_config(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    bcpnp(&args)
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

/// `mode -> (rmse_x, ssim_x, rmse_theta)` from `metrics.csv`.
fn metrics(dir: &Path) -> BTreeMap<String, Vec<Option<f64>>> {
    let t = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    let mut lines = t.lines();
    assert_eq!(lines.next(), Some("mode,rmse_x,ssim_x,rmse_theta"));
    lines
        .map(|l| {
            let mut f = l.split(',');
            let mode = f.next().unwrap().to_string();
            (mode, f.map(|v| v.parse().ok()).collect())
        })
        .collect()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.toml");
    fs::write(&p, body).unwrap();
    p
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn minimal_config_is_already_solved() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_config(&configs().join("minimal.toml"), tmp.path(), &[]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let m = metrics(tmp.path());
    assert_eq!(m["bc-pnp"][0], Some(0.0));
    let trace = fs::read_to_string(tmp.path().join("bc-pnp_trace.csv")).unwrap();
    assert!(trace.lines().count() - 1 <= 2);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs().join("multicoil.toml");
    assert!(run_config(&cfg, a.path(), &[]).status.success());
    assert!(run_config(&cfg, b.path(), &[]).status.success());
    let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
    assert!(fa.len() >= 10);
    assert_eq!(fa, fb);

    // a different seed changes the noise draw
    let c = tempfile::tempdir().unwrap();
    assert!(run_config(&cfg, c.path(), &["--seed-override", "99"]).status.success());
    assert_ne!(fa["measurement.csv"], csv_files(c.path())["measurement.csv"]);
}

#[test]
fn desk_deblurring_ordering() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_config(&configs().join("desk_deblur.toml"), tmp.path(), &[]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let m = metrics(tmp.path());
    let (bc, pnp, oracle) = (&m["bc-pnp"], &m["pnp-ista"], &m["pnp-oracle-theta"]);
    assert!(bc[0] <= pnp[0], "{m:?}");
    assert!(oracle[0] <= bc[0], "{m:?}");
    // frozen PnP keeps θ₀, so its kernel error is the initial one
    assert!(bc[2] < pnp[2], "{m:?}");
}

#[test]
fn metrics_recompute_from_emitted_files() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_config(&configs().join("multicoil.toml"), tmp.path(), &[]).status.success());
    let d = tmp.path();
    let truth_img = read_csv_values(&d.join("truth_image.csv")).unwrap();
    let truth_op = read_csv_values(&d.join("truth_operator.csv")).unwrap();
    for (mode, row) in metrics(d) {
        let img = read_csv_values(&d.join(format!("{mode}_image.csv"))).unwrap();
        let op = read_csv_values(&d.join(format!("{mode}_operator.csv"))).unwrap();
        assert_eq!(row[0], Some(rmse(&img, &truth_img).unwrap()));
        assert_eq!(row[2], Some(rmse(&op, &truth_op).unwrap()));
    }
}

#[test]
fn quadratic_theory_checks_pass_strictly() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_config(&configs().join("quadratic.toml"), tmp.path(), &["--strict-checks"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let r: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("bc-pnp_report.json")).unwrap()).unwrap();
    for check in ["constants", "descent", "sequential_bound"] {
        assert_eq!(r["checks"][check]["status"], "passed", "{check}");
    }
    let e: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("ensemble_report.json")).unwrap()).unwrap();
    assert_eq!(e["random_bound"]["status"], "passed");
    assert_eq!(e["random_bound"]["report"]["seeds"], 12);
}

const LINEAR: &str = r#"
[problem]
kind = "linear"
rows = 6
blocks = [3, 2]
matrix = { source = "uniform", lo = -1.0, hi = 1.0, seed = 1 }
truth.blocks = [{ source = "constant", value = 0.5 }, { source = "constant", value = -0.5 }]

[[denoisers]]
kind = "gaussian"
mean = { source = "constant", value = 0.0 }
variance = 1.0
sigma = 0.3

[[denoisers]]
kind = "gaussian"
mean = { source = "constant", value = 0.0 }
variance = 1.0
sigma = 0.3
"#;

/// `1/L_max` for the `LINEAR` problem, read back from a run report.
fn linear_inverse_l_max(dir: &Path) -> f64 {
    let cfg = write_config(dir, &format!("{LINEAR}\n[solver]\nmax_iters = 1\n"));
    let out = dir.join("probe");
    assert!(run_config(&cfg, &out, &[]).status.success());
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("bc-pnp_report.json")).unwrap()).unwrap();
    1.0 / r["lipschitz"]["max"].as_f64().unwrap()
}

#[test]
fn validate_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = bcpnp(&["validate", configs().join("desk_deblur.toml").to_str().unwrap()]);
    assert!(ok.status.success());
    assert_eq!(text(&ok.stdout), "");

    let inv = linear_inverse_l_max(tmp.path());
    let big = write_config(
        tmp.path(),
        &format!("{LINEAR}\n[solver]\nstep = {}\n\n[checks]\nenabled = true\n", 2.0 * inv),
    );
    let o = bcpnp(&["validate", big.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stdout).contains("step size violates Theorem precondition"), "{}", text(&o.stdout));
    // without theory checks the same step is allowed
    let big = write_config(tmp.path(), &format!("{LINEAR}\n[solver]\nstep = {}\n", 2.0 * inv));
    assert!(bcpnp(&["validate", big.to_str().unwrap()]).status.success());

    let shape = fs::read_to_string(configs().join("minimal.toml"))
        .unwrap()
        .replace("image = [8, 8]", "image = [2, 2]")
        .replace("kernel = [1, 1]", "kernel = [3, 3]");
    let p = write_config(tmp.path(), &shape);
    let o = bcpnp(&["validate", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stdout).contains("kernel 3x3 larger than image 2x2"), "{}", text(&o.stdout));

    let p = write_config(tmp.path(), &LINEAR.replace("[[denoisers]]\nkind = \"gaussian\"\nmean = { source = \"constant\", value = 0.0 }\nvariance = 1.0\nsigma = 0.3\n\n", ""));
    let o = bcpnp(&["validate", p.to_str().unwrap()]);
    assert!(text(&o.stdout).contains("1 entries for a 2-block problem"), "{}", text(&o.stdout));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");

    // parse error names the line and field
    let p = write_config(tmp.path(), &LINEAR.replace("rows = 6", "rows = 6\nrowz = 7"));
    let o = run_config(&p, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = text(&o.stderr);
    assert!(err.contains("line") && err.contains("rowz"), "{err}");

    // missing input file
    let p = write_config(
        tmp.path(),
        &LINEAR.replace(r#"{ source = "uniform", lo = -1.0, hi = 1.0, seed = 1 }"#, r#"{ source = "csv", path = "nope.csv" }"#),
    );
    assert_eq!(run_config(&p, &out, &[]).status.code(), Some(1));

    // diverging iterates
    let p = write_config(tmp.path(), &format!("{}\n[solver]\nstep = 1e6\nmax_iters = 5000\n", LINEAR.replace("kind = \"gaussian\"\nmean = { source = \"constant\", value = 0.0 }\nvariance = 1.0\nsigma = 0.3", "kind = \"identity\"")));
    let o = run_config(&p, &out, &[]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o.stderr));
    assert!(text(&o.stderr).contains("non-finite"));

    // a step beyond 1/L_max fails the constants check under --strict-checks
    let inv = linear_inverse_l_max(tmp.path());
    let p = write_config(tmp.path(), &format!("{LINEAR}\n[solver]\nstep = {}\nmax_iters = 3\n", 1.5 * inv));
    assert_eq!(run_config(&p, &out, &[]).status.code(), Some(0));
    let o = run_config(&p, &out, &["--strict-checks"]);
    assert_eq!(o.status.code(), Some(3), "{}", text(&o.stderr));
}

#[test]
fn inputs_are_untouched_and_outputs_confined() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("in");
    fs::create_dir(&src).unwrap();
    fs::write(src.join("kernel.csv"), "1\n").unwrap();
    let body = fs::read_to_string(configs().join("minimal.toml"))
        .unwrap()
        .replace(r#"{ source = "constant", value = 1.0 }"#, r#"{ source = "csv", path = "kernel.csv" }"#);
    let cfg = src.join("config.toml");
    fs::write(&cfg, &body).unwrap();
    let out = tmp.path().join("results");
    assert!(run_config(&cfg, &out, &[]).status.success());
    assert_eq!(fs::read_to_string(&cfg).unwrap(), body);
    assert_eq!(fs::read_to_string(src.join("kernel.csv")).unwrap(), "1\n");
    let mut top: Vec<String> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    top.sort();
    assert_eq!(top, vec!["in", "results"]);
    assert_eq!(fs::read_dir(&src).unwrap().count(), 2);
}
