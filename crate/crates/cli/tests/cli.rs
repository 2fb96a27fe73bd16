//! Command-level behavior: exit codes, help coverage, caching,
//! idempotence and the end-to-end recall oracle.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lodmsq::data::{save_fvecs, Dataset};
use lodmsq::synth;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lodmsq"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn workdir(name: &str) -> PathBuf {
    let mut p = std::env::temp_dir();
    p.push(format!("lodmsq-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&p).unwrap();
    p
}

fn write_queries(dir: &Path, dim: usize, count: usize, seed: u64) -> PathBuf {
    let q = synth::gaussian_queries(count, dim, seed);
    let p = dir.join("queries.fvecs");
    save_fvecs(&q, &p).unwrap();
    p
}

#[test]
fn help_documents_every_parameter() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for flag in ["--m ", "--n-b", "--n-w", "--l-uq", "--l-sq", "--m-adc"] {
        assert!(text.contains(flag), "help must document {flag}");
    }
}

#[test]
fn missing_dataset_path_exits_2() {
    let out = run(&[
        "build",
        "--data",
        "/nonexistent/base.fvecs",
        "--kind",
        "lod_msq",
        "--m",
        "4",
        "--n-b",
        "4",
        "--seed",
        "1",
        "--out",
        "/tmp/never.idx",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_command_exits_2() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["analyze", "nonsense"]).status.code(), Some(2));
}

#[test]
fn missing_seed_exits_2() {
    let dir = workdir("seed");
    let set = synth::lossless_lod_msq(144, 1);
    let data_path = dir.join("base.fvecs");
    save_fvecs(&set.data, &data_path).unwrap();
    let out = run(&[
        "build",
        "--data",
        data_path.to_str().unwrap(),
        "--kind",
        "lod_msq",
        "--m",
        "4",
        "--n-b",
        "4",
        "--out",
        dir.join("idx.bin").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("--seed"), "stderr: {err}");
}

#[test]
fn gt_depth_out_of_range_exits_2() {
    let dir = workdir("gtdepth");
    let set = synth::lossless_lod_msq(144, 2);
    let data_path = dir.join("base.fvecs");
    save_fvecs(&set.data, &data_path).unwrap();
    let queries_path = write_queries(&dir, 32, 5, 3);
    let out = run(&[
        "gt",
        "--data",
        data_path.to_str().unwrap(),
        "--queries",
        queries_path.to_str().unwrap(),
        "--depth",
        "99999",
        "--out",
        dir.join("gt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn corrupt_index_exits_1() {
    let dir = workdir("corrupt");
    let idx = dir.join("bad.idx");
    std::fs::write(&idx, b"LMQI but then garbage").unwrap();
    let queries_path = write_queries(&dir, 8, 3, 5);
    let out = run(&[
        "search",
        "--index",
        idx.to_str().unwrap(),
        "--queries",
        queries_path.to_str().unwrap(),
        "--k",
        "1",
        "--out",
        dir.join("res").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gt_cache_hits_and_keeps_bytes() {
    let dir = workdir("gtcache");
    let set = synth::lossless_lod_msq(288, 5);
    let data_path = dir.join("base.fvecs");
    save_fvecs(&set.data, &data_path).unwrap();
    let queries_path = write_queries(&dir, 32, 20, 7);
    let gt_prefix = dir.join("gt");
    let args = [
        "gt",
        "--data",
        data_path.to_str().unwrap(),
        "--queries",
        queries_path.to_str().unwrap(),
        "--depth",
        "5",
        "--out",
        gt_prefix.to_str().unwrap(),
    ];
    let first = run(&args);
    assert!(first.status.success());
    assert!(String::from_utf8(first.stderr).unwrap().contains("computed"));
    let ids = std::fs::read(gt_prefix.with_extension("ids.ivecs")).unwrap();
    let scores = std::fs::read(gt_prefix.with_extension("scores.fvecs")).unwrap();

    let second = run(&args);
    assert!(second.status.success());
    assert!(String::from_utf8(second.stderr).unwrap().contains("cache hit"));
    assert_eq!(std::fs::read(gt_prefix.with_extension("ids.ivecs")).unwrap(), ids);
    assert_eq!(
        std::fs::read(gt_prefix.with_extension("scores.fvecs")).unwrap(),
        scores
    );
}

#[test]
fn end_to_end_lossless_recall_is_one_at_every_k() {
    let dir = workdir("endtoend");
    let set = synth::lossless_lod_msq(576, 11);
    let data_path = dir.join("base.fvecs");
    save_fvecs(&set.data, &data_path).unwrap();
    let queries_path = write_queries(&dir, 32, 50, 13);
    let gt_prefix = dir.join("gt");
    let idx = dir.join("idx.bin");
    let res_prefix = dir.join("res");

    assert!(run(&[
        "gt",
        "--data",
        data_path.to_str().unwrap(),
        "--queries",
        queries_path.to_str().unwrap(),
        "--depth",
        "10",
        "--out",
        gt_prefix.to_str().unwrap(),
    ])
    .status
    .success());

    // Lossless configuration: clipping off, rotation alternations off.
    assert!(run(&[
        "build",
        "--data",
        data_path.to_str().unwrap(),
        "--kind",
        "lod_msq",
        "--m",
        "4",
        "--n-b",
        "4",
        "--n-w",
        "16",
        "--l-uq",
        "8",
        "--l-sq",
        "4",
        "--opq-iters",
        "0",
        "--kmeans-iters",
        "15",
        "--clip",
        "0,1",
        "--seed",
        "1",
        "--out",
        idx.to_str().unwrap(),
    ])
    .status
    .success());

    assert!(run(&[
        "search",
        "--index",
        idx.to_str().unwrap(),
        "--queries",
        queries_path.to_str().unwrap(),
        "--k",
        "10",
        "--m-adc",
        "4",
        "--out",
        res_prefix.to_str().unwrap(),
    ])
    .status
    .success());

    let eval = run(&[
        "eval",
        "--results",
        res_prefix.to_str().unwrap(),
        "--gt",
        gt_prefix.to_str().unwrap(),
        "--n",
        "1",
        "--ks",
        "1,5,10",
    ]);
    assert!(eval.status.success());
    let csv = String::from_utf8(eval.stdout).unwrap();
    for line in csv.lines().skip(1) {
        let recall: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(recall, 1.0, "line {line}");
    }
}

#[test]
fn build_is_idempotent() {
    let dir = workdir("idempotent");
    let data = synth::clustered(400, 12, 10, 17);
    let data_path = dir.join("base.fvecs");
    save_fvecs(&data, &data_path).unwrap();
    let a = dir.join("a.idx");
    let b = dir.join("b.idx");
    for out in [&a, &b] {
        assert!(run(&[
            "build",
            "--data",
            data_path.to_str().unwrap(),
            "--kind",
            "opq",
            "--m",
            "4",
            "--n-b",
            "4",
            "--opq-iters",
            "2",
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ])
        .status
        .success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn config_file_with_cli_override() {
    let dir = workdir("config");
    let data = synth::clustered(400, 12, 10, 19);
    let data_path = dir.join("base.fvecs");
    save_fvecs(&data, &data_path).unwrap();
    let config_path = dir.join("run.conf");
    std::fs::write(
        &config_path,
        format!(
            "# experiment defaults\ndata={}\nkind=opq\nm=4\nn-b=4\nopq-iters=2\nseed=9\n",
            data_path.display()
        ),
    )
    .unwrap();
    let from_config = dir.join("from_config.idx");
    assert!(run(&[
        "build",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        from_config.to_str().unwrap(),
    ])
    .status
    .success());
    // The same run with a CLI override must differ (different seed).
    let overridden = dir.join("overridden.idx");
    assert!(run(&[
        "build",
        "--config",
        config_path.to_str().unwrap(),
        "--seed",
        "10",
        "--out",
        overridden.to_str().unwrap(),
    ])
    .status
    .success());
    assert_ne!(
        std::fs::read(&from_config).unwrap(),
        std::fs::read(&overridden).unwrap()
    );
}

#[test]
fn ablate_emits_all_four_curves() {
    let dir = workdir("ablate");
    let data = synth::clustered(600, 16, 12, 23);
    let data_path = dir.join("base.fvecs");
    save_fvecs(&data, &data_path).unwrap();
    let queries = synth::noisy_queries(&data, 20, 0.05, 24);
    let queries_path = dir.join("queries.fvecs");
    save_fvecs(&queries, &queries_path).unwrap();
    let out = run(&[
        "ablate",
        "--data",
        data_path.to_str().unwrap(),
        "--queries",
        queries_path.to_str().unwrap(),
        "--kinds",
        "opq,lod_msq,msq,lod_opq",
        "--budgets",
        "16",
        "--ks",
        "1,10",
        "--seeds",
        "1",
        "--m",
        "4",
        "--m-adc",
        "2",
        "--l-uq",
        "4",
        "--kmeans-iters",
        "5",
        "--opq-iters",
        "2",
        "--seed",
        "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.trim().lines().collect();
    assert_eq!(lines[0], "dataset,kind,bits,m,m_ADC,n_B,n_W,l_UQ,l_SQ,seed,n,k,recall");
    assert_eq!(lines.len(), 1 + 4 * 2);
    for kind in ["opq", "lod_msq", "msq", "lod_opq"] {
        assert!(
            lines.iter().any(|l| l.split(',').nth(1) == Some(kind)),
            "missing curve for {kind}"
        );
    }
}

#[test]
fn analyze_profile_emits_direction_csv() {
    let dir = workdir("profile");
    let data = synth::clustered(500, 12, 10, 41);
    let data_path = dir.join("base.fvecs");
    save_fvecs(&data, &data_path).unwrap();
    let queries = synth::noisy_queries(&data, 10, 0.05, 43);
    let queries_path = dir.join("queries.fvecs");
    save_fvecs(&queries, &queries_path).unwrap();
    let out = run(&[
        "analyze",
        "profile",
        "--data",
        data_path.to_str().unwrap(),
        "--queries",
        queries_path.to_str().unwrap(),
        "--m",
        "5",
        "--n-v",
        "8",
        "--kmeans-iters",
        "5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.trim().lines().collect();
    assert_eq!(lines[0], "angle,x,y,var");
    assert_eq!(lines.len(), 1 + 8);
    // x² + y² must reproduce var² on every row
    for line in &lines[1..] {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert!((f[1] * f[1] + f[2] * f[2] - f[3] * f[3]).abs() < 1e-6 * f[3].max(1.0));
    }
}

#[test]
fn analyze_bounds_keeps_bound_below_exact() {
    let out = run(&[
        "analyze", "bounds", "--ms", "100,1000", "--ds", "8,32", "--deltas", "0.5", "--trials",
        "500",
    ]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.trim().lines().collect();
    assert_eq!(lines[0], "m,d,delta,L1,L1_weak,exact,empirical");
    assert_eq!(lines.len(), 1 + 4);
    for line in &lines[1..] {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        let (l1, exact, empirical) = (f[3], f[5], f[6]);
        assert!(l1 <= exact + 1e-9, "{line}");
        assert!((exact - empirical).abs() < 0.05, "{line}");
    }
}

#[test]
fn mixed_budget_comparison_is_rejected() {
    let dir = workdir("mixed");
    let data = synth::clustered(400, 16, 8, 29);
    let data_path = dir.join("base.fvecs");
    save_fvecs(&data, &data_path).unwrap();
    let queries_path = write_queries(&dir, 16, 10, 31);
    // 18-bit budget: lod kinds cannot split 18−4 into 4-bit codes.
    let out = run(&[
        "ablate",
        "--data",
        data_path.to_str().unwrap(),
        "--queries",
        queries_path.to_str().unwrap(),
        "--kinds",
        "opq,lod_msq",
        "--budgets",
        "18",
        "--ks",
        "1",
        "--m",
        "4",
        "--l-uq",
        "4",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
