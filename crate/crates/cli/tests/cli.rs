use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mmexplain"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .args(args)
        .env("MMEXPLAIN_OUT_DIR", dir)
        .output()
        .expect("spawn mmexplain")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn tiny_gen_args<'a>(items: &'a str, seed: &'a str) -> Vec<&'a str> {
    vec![
        "gen-data",
        "--items",
        items,
        "--seed",
        seed,
        "--objects",
        "2-3",
        "--v-max",
        "4",
        "--feature-dim",
        "8",
    ]
}

#[test]
fn pipeline_smoke_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = root.join("data.jsonl");

    let out = run_in(root, &tiny_gen_args("40", "7"));
    assert_ok(&out, "gen-data");
    assert!(data.exists());

    let out = run_in(
        root,
        &[
            "train-vqa",
            "--data",
            data.to_str().unwrap(),
            "--epochs",
            "6",
            "--batch-size",
            "8",
            "--lr",
            "0.01",
            "--embed-dim",
            "8",
            "--gru-hidden",
            "10",
            "--attn-hidden",
            "8",
            "--joint-dim",
            "10",
        ],
    );
    assert_ok(&out, "train-vqa");
    let vqa_ckpt = root.join("vqa.ckpt");
    assert!(vqa_ckpt.exists());

    let out = run_in(
        root,
        &[
            "train-explainer",
            "--data",
            data.to_str().unwrap(),
            "--vqa",
            vqa_ckpt.to_str().unwrap(),
            "--mode",
            "filtered_lf",
            "--epochs",
            "1",
            "--batch-size",
            "8",
            "--hidden",
            "10",
            "--word-dim",
            "6",
            "--attn-hidden",
            "6",
            "--max-len",
            "12",
            "--table-dim",
            "8",
        ],
    );
    assert_ok(&out, "train-explainer");
    let ckpt = root.join("model-filtered_lf.ckpt");
    assert!(ckpt.exists());
    let train_report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("train-filtered_lf.json")).unwrap())
            .unwrap();
    assert_eq!(train_report["config"]["mode"], "filtered_lf");
    assert!(train_report["dataset_hash"].is_string());

    // First item id present in the dataset header line's items.
    let first_line = fs::read_to_string(&data)
        .unwrap()
        .lines()
        .nth(1)
        .unwrap()
        .to_string();
    let first_item: serde_json::Value = serde_json::from_str(&first_line).unwrap();
    let item_id = first_item["item_id"].as_u64().unwrap().to_string();

    let out = run_in(
        root,
        &[
            "explain",
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--item",
            &item_id,
            "--render",
            "svg",
        ],
    );
    assert_ok(&out, "explain svg");
    let svg = fs::read_to_string(root.join(format!("explanation-{item_id}.svg"))).unwrap();
    assert!(svg.starts_with("<svg"));

    let out = run_in(
        root,
        &[
            "explain",
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--item",
            &item_id,
            "--render",
            "json",
        ],
    );
    assert_ok(&out, "explain json");
    let expl: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join(format!("explanation-{item_id}.json"))).unwrap())
            .unwrap();
    assert_eq!(expl["item_id"].as_u64().unwrap().to_string(), item_id);

    let eval_path = root.join("eval.json");
    let eval_args = [
        "evaluate",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--metrics",
        "bleu4,rougeL,cider,emd,sf",
        "--out",
        eval_path.to_str().unwrap(),
        "--label",
        "filtered_lf",
    ];
    let out = run_in(root, &eval_args);
    assert_ok(&out, "evaluate");
    let eval_bytes = fs::read(&eval_path).unwrap();
    let eval_json: serde_json::Value = serde_json::from_slice(&eval_bytes).unwrap();
    assert!(eval_json["metrics"]["accuracy"].is_number());
    assert!(eval_json["metrics"]["bleu4"].is_number());
    assert_eq!(eval_json["label"], "filtered_lf");

    // Byte-identical on rerun with the same inputs.
    let out = run_in(root, &eval_args);
    assert_ok(&out, "evaluate rerun");
    assert_eq!(eval_bytes, fs::read(&eval_path).unwrap());

    let audit_path = root.join("audit.json");
    let out = run_in(
        root,
        &[
            "audit-lime",
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--K",
            "1,2",
            "--samples",
            "16",
            "--max-items",
            "2",
            "--full",
            "--out",
            audit_path.to_str().unwrap(),
            "--label",
            "filtered_lf",
        ],
    );
    assert_ok(&out, "audit-lime");
    let audit_json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&audit_path).unwrap()).unwrap();
    assert!(audit_json["metrics"]["audited_items"].is_number());

    let table_path = root.join("table.json");
    let csv_path = root.join("table.csv");
    let out = run_in(
        root,
        &[
            "report",
            "--in",
            eval_path.to_str().unwrap(),
            audit_path.to_str().unwrap(),
            "--out",
            table_path.to_str().unwrap(),
            "--csv",
            csv_path.to_str().unwrap(),
        ],
    );
    assert_ok(&out, "report");
    let csv = fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("metric,filtered_lf,filtered_lf#1\n"));
    let table: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&table_path).unwrap()).unwrap();
    assert!(table["rows"].as_array().unwrap().len() > 2);
}

#[test]
fn missing_required_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["evaluate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_in(dir.path(), &["gen-data"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["gen-data", "--items", "4", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.to_lowercase().contains("usage"), "stderr: {err}");
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["transmogrify"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_failure_reports_machine_readable_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["evaluate", "--ckpt", "nope.ckpt", "--data", "nope.jsonl"],
    );
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert!(err["error"].is_string());
}

#[test]
fn report_refuses_mixed_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let mk = |name: &str, hash: &str| {
        let path = dir.path().join(name);
        let body = serde_json::json!({
            "format_version": 1,
            "kind": "evaluate",
            "label": name,
            "config": {},
            "config_hash": "c",
            "dataset_hash": hash,
            "metrics": {"mean_sf": 0.5},
            "sf_histogram": null,
            "warnings": [],
        });
        fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
        path
    };
    let a = mk("a.json", "hash-one");
    let b = mk("b.json", "hash-two");
    let out = run_in(
        dir.path(),
        &["report", "--in", a.to_str().unwrap(), b.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dataset"), "stderr: {err}");
}

#[test]
fn env_var_sets_default_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &tiny_gen_args("4", "3"));
    assert_ok(&out, "gen-data with env dir");
    assert!(dir.path().join("data.jsonl").exists());
}
