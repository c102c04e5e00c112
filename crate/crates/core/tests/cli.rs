use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dtomo::io::{parse_image, parse_instance, serialize_instance};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn dtomo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dtomo"))
        .args(args)
        .output()
        .expect("failed to launch dtomo")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    for (dims, seed, stem) in [("4x3", "7", "gen_4x3_s7"), ("3x2x2", "2", "gen_3x2x2_s2")] {
        let img = dir.path().join("img");
        let inst = dir.path().join("inst");
        let out = dtomo(&[
            "generate", "--dims", dims, "--density", "0.5", "--seed", seed,
            "--out-image", p(&img), "--out-instance", p(&inst),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(fs::read_to_string(&img).unwrap(), fs::read_to_string(fixture(&format!("{stem}.dimg"))).unwrap());
        assert_eq!(fs::read_to_string(&inst).unwrap(), fs::read_to_string(fixture(&format!("{stem}.dtomo"))).unwrap());
    }
}

#[test]
fn fixtures_are_canonical() {
    for name in ["glider.dtomo", "gen_4x3_s7.dtomo", "gen_3x2x2_s2.dtomo"] {
        let text = fs::read_to_string(fixture(name)).unwrap();
        assert_eq!(serialize_instance(&parse_instance(&text).unwrap()), text, "{name}");
    }
    let messy = fs::read_to_string(fixture("glider_messy.dtomo")).unwrap();
    let canonical = fs::read_to_string(fixture("glider.dtomo")).unwrap();
    assert_eq!(serialize_instance(&parse_instance(&messy).unwrap()), canonical);
}

#[test]
fn verify_accepts_the_original_image() {
    let out = dtomo(&["verify", "--instance", p(&fixture("glider.dtomo")), "--image", p(&fixture("glider.dimg"))]);
    assert_eq!(code(&out), 0);
    let out = dtomo(&[
        "verify", "--instance", p(&fixture("gen_3x2x2_s2.dtomo")), "--image", p(&fixture("gen_3x2x2_s2.dimg")),
    ]);
    assert_eq!(code(&out), 0);
}

#[test]
fn verify_reports_residuals_on_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let wrong = dir.path().join("wrong.dimg");
    fs::write(&wrong, "DIMG 3 3\n010\n001\n110\n").unwrap();
    let out = dtomo(&["verify", "--instance", p(&fixture("glider.dtomo")), "--image", p(&wrong)]);
    assert_eq!(code(&out), 2);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout, "ray 2: expected 3, got 2 (residual -1)\nray 5: expected 2, got 1 (residual -1)\n");
}

#[test]
fn glider_solves_in_almost_every_seed() {
    let dir = tempfile::tempdir().unwrap();
    let recon = dir.path().join("recon.dimg");
    let mut solved = 0;
    for seed in 0..100 {
        let seed = seed.to_string();
        let out = dtomo(&[
            "solve", "--instance", p(&fixture("glider.dtomo")), "--T", "5.0", "--steps", "600",
            "--agitations", "10", "--seed", &seed, "--out-image", p(&recon),
        ]);
        let check = dtomo(&["verify", "--instance", p(&fixture("glider.dtomo")), "--image", p(&recon)]);
        assert_eq!(code(&out) == 0, code(&check) == 0, "seed {seed}");
        solved += usize::from(code(&check) == 0);
    }
    assert!(solved >= 95, "solved {solved}/100");
}

#[test]
fn empty_data_reconstructs_empty_image() {
    let dir = tempfile::tempdir().unwrap();
    let (img, inst, recon) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let out = dtomo(&[
        "generate", "--dims", "5x4", "--density", "0", "--seed", "3",
        "--out-image", p(&img), "--out-instance", p(&inst),
    ]);
    assert_eq!(code(&out), 0);
    let out = dtomo(&["solve", "--instance", p(&inst), "--out-image", p(&recon)]);
    assert_eq!(code(&out), 0);
    let image = parse_image(&fs::read_to_string(&recon).unwrap()).unwrap();
    assert_eq!(image.dims(), &[5, 4]);
    assert_eq!(image.count_ones(), 0);
}

#[test]
fn solve_is_deterministic_and_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let recon = dir.path().join(format!("r{run}"));
        let trace = dir.path().join(format!("t{run}"));
        let out = dtomo(&[
            "solve", "--instance", p(&fixture("gen_4x3_s7.dtomo")), "--seed", "5",
            "--out-image", p(&recon), "--trace", p(&trace), "--trace-stride", "60",
        ]);
        assert!(matches!(code(&out), 0 | 2));
        outputs.push((out.stdout.clone(), fs::read(&recon).unwrap(), fs::read_to_string(&trace).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let trace = &outputs[0].2;
    assert!(trace.starts_with("t,relaxed_cut\n0,"));
    assert!(trace.lines().count() >= 12);
}

#[test]
fn solve_recovers_3d_shape() {
    let dir = tempfile::tempdir().unwrap();
    let recon = dir.path().join("r");
    let out = dtomo(&["solve", "--instance", p(&fixture("gen_3x2x2_s2.dtomo")), "--out-image", p(&recon)]);
    assert_eq!(code(&out), 0);
    assert!(fs::read_to_string(&recon).unwrap().starts_with("DIMG 3 2 2\n"));
}

#[test]
fn errors_have_categories_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_header = dir.path().join("h");
    fs::write(&bad_header, "DTOMO 9\n").unwrap();
    let infeasible = dir.path().join("i");
    fs::write(&infeasible, "DTOMO 1\nnodes 3\nrays 1\nray 0 : 0 1 2 = 5\n").unwrap();
    let shared = dir.path().join("s");
    fs::write(&shared, "DTOMO 1\nnodes 2\nrays 2\nray 0 : 0 1 = 1\nray 1 : 1 0 = 1\n").unwrap();
    let out_img = dir.path().join("o");
    let (glider, wrong_size) = (fixture("glider.dtomo"), fixture("gen_4x3_s7.dimg"));

    let cases: [(Vec<&str>, i32, &str); 5] = [
        (vec!["solve", "--instance", p(&bad_header), "--out-image", p(&out_img)], 4, "error[parse]"),
        (vec!["solve", "--instance", p(&infeasible), "--out-image", p(&out_img)], 3, "error[infeasible]"),
        (vec!["local-search", "--instance", p(&shared)], 4, "error[parse]"),
        (vec!["solve", "--no-such-flag"], 4, "error[usage]"),
        (vec!["verify", "--instance", p(&glider), "--image", p(&wrong_size)], 3, "error[infeasible]"),
    ];
    for (args, expected, prefix) in cases {
        let out = dtomo(&args);
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert_eq!(code(&out), expected, "{args:?}: {stderr}");
        assert!(stderr.starts_with(prefix), "{args:?}: {stderr}");
    }
    let out = dtomo(&["solve", "--instance", p(&bad_header), "--out-image", p(&out_img)]);
    assert!(String::from_utf8(out.stderr).unwrap().contains("line 1"));
}

#[test]
fn local_search_prints_success_rate() {
    let out = dtomo(&["local-search", "--instance", p(&fixture("glider.dtomo")), "--restarts", "200", "--seed", "1"]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("p_succ "), "{stdout}");
    assert!(stdout.trim_end().ends_with("/200)"));
}

#[test]
fn bench_csv_is_thread_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    let mut tables = Vec::new();
    for threads in ["1", "3"] {
        let csv = dir.path().join(format!("t{threads}.csv"));
        let out = dtomo(&[
            "bench", "size-sweep", "--sizes", "3,4", "--images", "2", "--restarts", "5",
            "--ls-restarts", "40", "--threads", threads, "--csv", p(&csv),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        tables.push(fs::read_to_string(&csv).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
    let header = tables[0].lines().next().unwrap();
    assert_eq!(header, "experiment,W,T,method,restarts,successes,p_succ,ci_lo,ci_hi,mean_agitations,wall_ms");
    assert_eq!(tables[0].lines().count(), 5);
    assert!(tables[0].lines().skip(1).all(|l| l.ends_with(',')));
}
