use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chanreduce::datasets::{
    emit_ts, parse_ts, read_split, synth_lowrank, write_split, DataFormat, LowRankSpec, Split,
};
use chanreduce::stats::fmt_sig6;
use chanreduce::{fit_pca, Adapter, SeriesTensor};

fn chanreduce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chanreduce")).args(args).env_remove("CHANREDUCE_OUTPUT_DIR").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn split(n: usize, t: usize, d: usize, classes: usize, seed: u64) -> Split {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
    let values = (0..n * t * d)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect();
    let names = (0..classes).map(|c| format!("{}", c + 1)).collect();
    Split::new(SeriesTensor::new(n, t, d, values).unwrap(), (0..n).map(|i| i % classes).collect(), names).unwrap()
}

fn write_ts(dir: &Path, name: &str, split: &Split) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, emit_ts(split, "fixture")).unwrap();
    path
}

#[test]
fn fit_pca_on_natops_shaped_data() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_ts(dir.path(), "NATOPS_TRAIN.ts", &split(180, 51, 24, 6, 1));
    let out = dir.path().join("pca.json");
    let o = chanreduce(&["fit", "--adapter", "pca", "--dim", "5", "--input", s(&input), "--format", "ts", "--output", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("explained variance"));
    let reducer = Adapter::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let Adapter::Reducer(r) = reducer else { panic!("expected a fitted reducer") };
    assert_eq!((r.w().rows(), r.w().cols()), (5, 24));
}

#[test]
fn var_select_on_three_channels_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let data = split(4, 6, 3, 2, 2);
    let input = dir.path().join("data.csv");
    write_split(&input, DataFormat::Csv, &data, "data").unwrap();
    let reducer = dir.path().join("var.json");
    let o = chanreduce(&["fit", "--adapter", "var_select", "--dim", "3", "--input", s(&input), "--output", s(&reducer)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let Adapter::Reducer(r) = Adapter::from_json(&std::fs::read_to_string(&reducer).unwrap()).unwrap() else {
        panic!()
    };
    let mut sel = r.selected_channels().unwrap();
    sel.sort();
    assert_eq!(sel, vec![0, 1, 2]);

    let output = dir.path().join("out.csv");
    let o = chanreduce(&["transform", "--reducer", s(&reducer), "--input", s(&input), "--output", s(&output)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let back = read_split(&output, DataFormat::Csv).unwrap();
    let (n, t, d) = data.series.shape();
    let order = r.selected_channels().unwrap();
    for i in 0..n {
        for step in 0..t {
            for (j, &c) in order.iter().enumerate() {
                assert_eq!(back.series.get(i, step, j), data.series.get(i, step, c));
            }
        }
    }
    assert_eq!(back.labels, data.labels);
    assert_eq!(d, 3);
}

#[test]
fn saved_reducer_transform_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let data = split(6, 20, 7, 3, 3);
    let input = write_ts(dir.path(), "x.ts", &data);
    let reducer = dir.path().join("pca.json");
    let o = chanreduce(&[
        "fit", "--adapter", "pca", "--dim", "3", "--scaled", "--input", s(&input), "--output", s(&reducer),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let output = dir.path().join("y.ts");
    let o = chanreduce(&["transform", "--reducer", s(&reducer), "--input", s(&input), "--output", s(&output)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let parsed = parse_ts(&std::fs::read_to_string(&input).unwrap()).unwrap();
    let in_memory = fit_pca(&parsed.series, 3, true, 1).unwrap().transform(&parsed.series).unwrap();
    let from_cli = parse_ts(&std::fs::read_to_string(&output).unwrap()).unwrap();
    assert_eq!(from_cli.series, in_memory);
}

#[test]
fn oversized_dimension_exits_4_naming_d() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_ts(dir.path(), "x.ts", &split(3, 8, 10, 2, 4));
    let o = chanreduce(&["fit", "--adapter", "pca", "--dim", "99", "--input", s(&input), "--output", s(&dir.path().join("r.json"))]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("D=10"), "{}", stderr(&o));
}

#[test]
fn argument_and_file_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_ts(dir.path(), "x.ts", &split(3, 8, 4, 2, 5));
    let missing = dir.path().join("nope.json");
    let o = chanreduce(&["transform", "--reducer", s(&missing), "--input", s(&input), "--output", s(&dir.path().join("y.ts"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.json"));

    let o = chanreduce(&["fit", "--adapter", "pca", "--input", s(&input), "--output", "r.json"]);
    assert_eq!(o.status.code(), Some(2), "missing --dim");
    let o = chanreduce(&["fit", "--adapter", "svd", "--dim", "2", "--pws", "4", "--input", s(&input), "--output", "r.json"]);
    assert_eq!(o.status.code(), Some(2), "pws with svd");
}

#[test]
fn malformed_input_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.ts");
    std::fs::write(&input, "@problemName x\n@dimensions 1\n@classLabel true a\n@data\n1,2,oops:a\n").unwrap();
    let o = chanreduce(&["fit", "--adapter", "pca", "--dim", "1", "--input", s(&input), "--output", s(&dir.path().join("r.json"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 5"), "{}", stderr(&o));
}

#[test]
fn channel_mismatch_on_transform_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_ts(dir.path(), "a.ts", &split(3, 8, 4, 2, 6));
    let other = write_ts(dir.path(), "b.ts", &split(3, 8, 5, 2, 7));
    let reducer = dir.path().join("r.json");
    assert!(chanreduce(&["fit", "--adapter", "svd", "--dim", "2", "--input", s(&train), "--output", s(&reducer)])
        .status
        .success());
    let o = chanreduce(&["transform", "--reducer", s(&reducer), "--input", s(&other), "--output", s(&dir.path().join("c.ts"))]);
    assert_eq!(o.status.code(), Some(4));
}

fn bench_config(dir: &Path) -> PathBuf {
    let ds = synth_lowrank(&LowRankSpec { n: 30, t: 32, d: 6, rank: 2, classes: 2, noise: 0.05, seed: 3 }).unwrap();
    std::fs::write(dir.join("lr_TRAIN.ts"), emit_ts(&ds.train, "lr")).unwrap();
    std::fs::write(dir.join("lr_TEST.ts"), emit_ts(&ds.test, "lr")).unwrap();
    let config = r#"{
        "datasets": [{"id": "lr", "train_path": "lr_TRAIN.ts", "test_path": "lr_TEST.ts", "format": "ts"}],
        "adapters": [
            {"id": "pca", "kind": "pca", "d_prime": 2},
            {"id": "rp", "kind": "rand_proj", "d_prime": 2, "seed": 10}
        ],
        "seeds": [0, 1],
        "encoder": {"embed_dim": 16},
        "train": {"epochs": 20}
    }"#;
    let path = dir.join("bench.json");
    std::fs::write(&path, config).unwrap();
    path
}

#[test]
fn benchmark_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = bench_config(dir.path());
    let results = dir.path().join("results.csv");
    let o = chanreduce(&["benchmark", "--config", s(&config), "--out", s(&results), "--jobs", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&results).unwrap();
    assert!(text.starts_with("# config_sha256="));
    assert_eq!(text.lines().count(), 2 + 4);

    let report_dir = dir.path().join("report");
    let o = chanreduce(&["report", "--results", s(&results), "--out-dir", s(&report_dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["summary.csv", "timing.csv", "ranks.csv", "pvalues.csv", "exclusions.csv"] {
        assert!(report_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn output_dir_env_applies_but_out_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let config = bench_config(dir.path());
    let env_dir = dir.path().join("from_env");
    std::fs::create_dir(&env_dir).unwrap();
    let run = |extra: &[&str]| {
        let mut args = vec!["benchmark", "--config", s(&config)];
        args.extend_from_slice(extra);
        Command::new(env!("CARGO_BIN_EXE_chanreduce"))
            .args(&args)
            .env("CHANREDUCE_OUTPUT_DIR", &env_dir)
            .output()
            .unwrap()
    };
    assert!(run(&[]).status.success());
    assert!(env_dir.join("results.csv").exists());
    let flagged = dir.path().join("flag.csv");
    assert!(run(&["--out", s(&flagged)]).status.success());
    assert!(flagged.exists());
}

#[test]
fn config_schema_errors_exit_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"datasets": [{"id": "a", "train_path": "x", "test_path": "y"}],
            "adapters": [{"id": "p", "kind": "pca", "d_prime": -1}]}"#,
    )
    .unwrap();
    let o = chanreduce(&["benchmark", "--config", s(&path), "--out", s(&dir.path().join("r.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("adapters[0].d_prime"), "{}", stderr(&o));
}

const HEADER: &str = "dataset_id,adapter_id,seed,status,accuracy,wall_seconds,encoder_forward_passes,n_train,n_test,epochs_completed,truncated_steps";

#[test]
fn report_pvalues_match_reference_constants() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = format!("{HEADER}\n");
    for (method, accs) in [("pca", &[0.81, 0.83, 0.82][..]), ("svd", &[0.78, 0.80, 0.79, 0.77]), ("rp", &[0.70, 0.74, 0.69])] {
        for (seed, acc) in accs.iter().enumerate() {
            text.push_str(&format!("d,{method},{seed},ok,{acc},0.1,20,10,10,200,0\n"));
        }
    }
    let results = dir.path().join("results.csv");
    std::fs::write(&results, text).unwrap();
    let out = dir.path().join("rep");
    let o = chanreduce(&["report", "--results", s(&results), "--out-dir", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let pv = std::fs::read_to_string(out.join("pvalues.csv")).unwrap();
    let rows: Vec<Vec<String>> = pv.lines().map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows[0], vec!["method", "pca", "svd", "rp"]);
    let p = |i: usize, j: usize| rows[i + 1][j + 1].as_str();
    // scipy.stats.ttest_ind(equal_var=False)
    for (i, j, reference) in [(0, 1, 0.010076943347988865), (0, 2, 0.01082187128505759), (2, 1, 0.024856735662667294)] {
        assert_eq!(p(i, j), fmt_sig6(reference));
        assert_eq!(p(i, j), p(j, i));
    }
    let ranks = std::fs::read_to_string(out.join("ranks.csv")).unwrap();
    assert_eq!(ranks.lines().collect::<Vec<_>>(), vec!["method,avg_rank", "pca,1.00000", "svd,2.00000", "rp,3.00000"]);
}

#[test]
fn single_method_report_ranks_one() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results.csv");
    std::fs::write(&results, format!("{HEADER}\nd,only,0,ok,0.5,0.1,20,10,10,200,0\nd,only,1,ok,0.6,0.1,20,10,10,200,0\n")).unwrap();
    let out = dir.path().join("rep");
    assert!(chanreduce(&["report", "--results", s(&results), "--out-dir", s(&out)]).status.success());
    let ranks = std::fs::read_to_string(out.join("ranks.csv")).unwrap();
    assert_eq!(ranks.lines().nth(1), Some("only,1.00000"));
}

#[test]
fn empty_or_malformed_results_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results.csv");
    std::fs::write(&results, format!("{HEADER}\n")).unwrap();
    let out = dir.path().join("rep");
    assert_eq!(chanreduce(&["report", "--results", s(&results), "--out-dir", s(&out)]).status.code(), Some(3));
    std::fs::write(&results, format!("{HEADER}\nd,m,zero,ok,0.5,0.1,1,1,1,1,0\n")).unwrap();
    assert_eq!(chanreduce(&["report", "--results", s(&results), "--out-dir", s(&out)]).status.code(), Some(3));
}
