//! CLI surface and file-format integration tests, run in process through
//! `run_cli` with captured output.

use std::fs;
use std::path::PathBuf;

use mfg_cell::cli::run_cli;
use mfg_cell::config::parse_config;
use mfg_cell::report::{parse_samples, SAMPLES_HEADER};

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let full: Vec<String> = std::iter::once("mfgcell".to_string())
        .chain(args.iter().map(|s| s.to_string()))
        .collect();
    let code = run_cli(full, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn printed_value(stdout: &str, key: &str) -> f64 {
    for line in stdout.lines() {
        if let Some(rest) = line.strip_prefix(&format!("{key} = ")) {
            return rest.parse().unwrap();
        }
    }
    panic!("no `{key}` line in output:\n{stdout}");
}

#[test]
fn solve_flat_prints_expected_sample() {
    let (code, stdout, _) = run(&[
        "solve", "--kind", "power", "--q", "1", "--A", "0", "--P", "3", "--alpha", "4", "--N",
        "64",
    ]);
    assert_eq!(code, 0);
    assert_eq!(printed_value(&stdout, "Hbar"), 0.5);
    assert_eq!(printed_value(&stdout, "bbar"), 3.0);
    assert!(printed_value(&stdout, "R") <= 1e-10);
    assert!(stdout.contains("converged = true"));
}

#[test]
fn solve_accepts_negative_p() {
    let (code, stdout, _) = run(&[
        "solve", "--kind", "power", "--q", "1", "--A", "0", "--P", "-2", "--alpha", "1", "--N",
        "64",
    ]);
    assert_eq!(code, 0);
    assert_eq!(printed_value(&stdout, "Hbar"), 1.0);
}

#[test]
fn sweep_writes_deterministic_tables_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("flat.csv");
    let args = [
        "sweep",
        "--kind",
        "power",
        "--q",
        "1",
        "--A",
        "0",
        "--N",
        "16",
        "--config",
        &write_config(&dir, "sweep.P = [0, 1, 2]\nsweep.alpha = [0, 1, 2]\n"),
        "--out",
        csv.to_str().unwrap(),
    ];
    let (code, stdout, _) = run(&args);
    assert_eq!(code, 0, "{stdout}");
    let text = fs::read_to_string(&csv).unwrap();
    let samples = parse_samples(&text).unwrap();
    assert_eq!(samples.len(), 4);
    let expected = [0.0, -1.0, 0.5, -0.5];
    for (s, want) in samples.iter().zip(expected) {
        assert!((s.hbar - want).abs() <= 1e-12);
    }
    // round-trip: re-parse and re-serialize bit-identically
    assert_eq!(mfg_cell::report::samples_to_string(&samples), text);

    let summary = fs::read_to_string(csv.with_extension("summary.txt")).unwrap();
    assert!(summary.contains("points: 4"));
    assert!(summary.contains("alpha-monotone"));

    // identical flags give byte-identical tables
    let csv2 = dir.path().join("flat2.csv");
    let mut args2 = args;
    args2[12] = csv2.to_str().unwrap();
    let (code2, _, _) = run(&args2);
    assert_eq!(code2, 0);
    assert_eq!(text, fs::read_to_string(&csv2).unwrap());
    // summaries agree modulo the timestamp line
    let strip = |s: String| -> String {
        s.lines()
            .filter(|l| !l.starts_with("generated_at:"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(
        strip(summary),
        strip(fs::read_to_string(csv2.with_extension("summary.txt")).unwrap())
    );
}

fn write_config(dir: &tempfile::TempDir, body: &str) -> String {
    static COUNTER: std::sync::atomic::AtomicU32 = std::sync::atomic::AtomicU32::new(0);
    let id = COUNTER.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
    let path = dir.path().join(format!("config{id}.conf"));
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

#[test]
fn refine_prints_unit_order_for_log_case() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(&dir, "solver.tol_residual = 1e-9\n");
    let (code, stdout, _) = run(&[
        "refine", "--kind", "log", "--A", "100", "--P", "5", "--alpha", "4", "--N-list",
        "50,100,200,400", "--config", &config,
    ]);
    assert_eq!(code, 0, "{stdout}");
    let order = printed_value(&stdout, "fitted_order");
    assert!((0.8..=1.2).contains(&order), "order {order}");
}

#[test]
fn audit_reports_corruption_but_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let config = write_config(&dir, "sweep.P = [0, 1, 2]\nsweep.alpha = [0, 1, 2]\n");
    let (code, _, _) = run(&[
        "sweep", "--kind", "power", "--q", "1", "--A", "0", "--N", "16", "--config", &config,
        "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);

    // corrupt: make Hbar increase along alpha at P=0
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[2].split(',').map(String::from).collect();
    fields[2] = "5.0".into();
    lines[2] = fields.join(",");
    fs::write(&csv, lines.join("\n") + "\n").unwrap();

    let (code, stdout, _) = run(&[
        "audit", "--kind", "power", "--q", "1", "--A", "0", "--N", "16", "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "audit reports, does not fail");
    assert!(stdout.contains("audit alpha-monotone: FAIL"), "{stdout}");
    assert!(stdout.contains("failed"));
}

#[test]
fn exit_codes() {
    // configuration error: log coupling with alpha_min = 0
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(&dir, "potential.kind = log\nsweep.alpha = [0, 20, 3]\n");
    let (code, _, stderr) = run(&["sweep", "--config", &config]);
    assert_eq!(code, 2);
    assert!(stderr.contains("log potential requires alpha_min > 0"), "{stderr}");

    // configuration error: unknown key
    let config = write_config(&dir, "potential.frequency = 2\n");
    let (code, _, stderr) = run(&["solve", "--config", &config]);
    assert_eq!(code, 2);
    assert!(stderr.contains("unknown key `potential.frequency`"));

    // configuration error: unreadable config path
    let (code, _, _) = run(&["solve", "--config", "/nonexistent/file.conf"]);
    assert_eq!(code, 2);

    // configuration error: audit without a samples file
    let (code, _, _) = run(&["audit"]);
    assert_eq!(code, 2);

    // configuration error: bad flag value
    let (code, _, _) = run(&["solve", "--kind", "cubic"]);
    assert_eq!(code, 2);

    // solver failure: iteration cap too small to converge
    let config = write_config(&dir, "solver.max_iterations = 1\n");
    let (code, _, _) = run(&[
        "solve", "--kind", "power", "--q", "1", "--A", "100", "--P", "3", "--alpha", "2", "--N",
        "64", "--config", &config,
    ]);
    assert_eq!(code, 1);

    // unwritable output path
    let config = write_config(&dir, "sweep.P = [0, 1, 2]\nsweep.alpha = [0, 1, 2]\n");
    let (code, _, _) = run(&[
        "sweep", "--kind", "power", "--q", "1", "--A", "0", "--N", "16", "--config", &config,
        "--out", "/nonexistent/dir/out.csv",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn slice_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("slice.csv");
    let (code, stdout, _) = run(&[
        "slice", "--kind", "power", "--q", "1", "--A", "0", "--alpha", "10", "--N", "32",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stdout}");
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("P,Hbar_over_P2,drift_gap_rel\n"));
    // flat potential: exact closed form at P = 30
    let last = text.lines().last().unwrap();
    let ratio: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!((ratio - (0.5 - 10.0 / 900.0)).abs() <= 1e-12);
}

#[test]
fn shipped_configs_parse() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let text = fs::read_to_string(root.join("power-q1-sweep.conf")).unwrap();
    let config = parse_config(&text).unwrap();
    assert_eq!(config.grid_n, 400);
    assert_eq!(config.p_range, (-10.0, 10.0, 51));
    assert_eq!(config.alpha_range, (0.0, 20.0, 51));
    assert_eq!(config.mode, mfg_cell::config::Mode::Sweep);

    for name in [
        "power-q2-sweep.conf",
        "log-sweep.conf",
        "log-refine.conf",
        "asymptotic-slice.conf",
    ] {
        let text = fs::read_to_string(root.join(name)).unwrap();
        parse_config(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn header_is_stable() {
    assert_eq!(
        SAMPLES_HEADER,
        "P,alpha,Hbar,bbar,dH_dP,R,E,relation_error,converged,iterations,residual_norm"
    );
}
