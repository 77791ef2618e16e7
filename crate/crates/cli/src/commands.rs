//! Command implementations. Every command validates its configuration before
//! creating any file and writes only inside the configured output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparse_time::data::{
    ingest_csv, prepare_dataset, synth_series, CsvOptions, NormStats, SplitDataset,
};
use sparse_time::decompose::{
    decompose_experiment, memory_project, saliency_project, saliency_weights, split_frequencies,
};
use sparse_time::eval::{
    ablate_dataset, build_report, evaluate_split, predictions, timing_sweep, AblationConfig,
};
use sparse_time::linalg::Matrix;
use sparse_time::model::{init_params, ModelParams};
use sparse_time::train::{train, TrainConfig};

use crate::config::{DataConfig, RunConfig};
use crate::error::CliError;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// On-disk model container: everything needed to reload and re-run the
/// preprocessing that produced the parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub window_len: usize,
    pub params: ModelParams,
    pub train_config: TrainConfig,
    pub norm_stats: NormStats,
}

/// Resolve the configured series: (values, target feature index).
fn load_series(cfg: &RunConfig, fallback_seed: Option<u64>) -> Result<(Matrix, usize), CliError> {
    match &cfg.data {
        DataConfig::Synthetic {
            kind,
            length,
            features,
            data_seed,
        } => {
            let seed = data_seed.or(fallback_seed).unwrap_or(0);
            Ok((synth_series(*kind, *length, *features, seed), 0))
        }
        DataConfig::Csv {
            path,
            feature_columns,
            target_column,
            delimiter,
            missing_sentinel,
        } => {
            let opts = CsvOptions {
                delimiter: delimiter.as_bytes()[0],
                missing_sentinel: *missing_sentinel,
            };
            let table = ingest_csv(path, feature_columns, target_column, &opts)?;
            Ok((table.values, table.target_index))
        }
    }
}

fn ensure_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out.display())))
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_file(path, &text)
}

fn csv_line(fields: &[String]) -> String {
    fields.join(",")
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn fmt_r2(r2: Option<f64>) -> String {
    r2.map(fmt).unwrap_or_else(|| "undefined".to_string())
}

fn config_echo(cfg: &RunConfig, command: &str, seed: Option<u64>) -> serde_json::Value {
    serde_json::json!({
        "command": command,
        "seed": seed,
        "run_config": cfg,
    })
}

/// Write component traces: element-wise components with the exact low/high
/// split, the saliency weight vector, and the projection-mode saliency and
/// memory matrices.
pub fn cmd_decompose(cfg: &RunConfig, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    cfg.validate()?;
    let (series, _) = load_series(cfg, seed)?;
    let d = series.cols();
    let rank = cfg.resolve_rank(d, series.rows());

    let exp = decompose_experiment(&series, cfg.window.smooth_window)?;
    let (low, high) = split_frequencies(&series, cfg.window.smooth_window)?;
    let weights = saliency_weights(&series)?;
    let proj_s = saliency_project(&series, &weights)?;
    let proj_m = memory_project(&series, rank)?;

    ensure_out_dir(out)?;

    let mut body = String::new();
    let mut header = vec!["t".to_string()];
    for name in ["x", "saliency", "memory", "trend", "high"] {
        for j in 0..d {
            header.push(format!("{name}_{j}"));
        }
    }
    body.push_str(&csv_line(&header));
    body.push('\n');
    for t in 0..series.rows() {
        let mut fields = vec![t.to_string()];
        for part in [&series, &exp.s, &exp.m, &low, &high] {
            for j in 0..d {
                fields.push(fmt(part.get(t, j)));
            }
        }
        body.push_str(&csv_line(&fields));
        body.push('\n');
    }
    write_file(&out.join("experiment_components.csv"), &body)?;

    let mut w_body = String::from("t,w\n");
    for (t, w) in weights.as_slice().iter().enumerate() {
        let _ = writeln!(w_body, "{t},{}", fmt(*w));
    }
    write_file(&out.join("saliency_weights.csv"), &w_body)?;

    write_file(
        &out.join("projection_saliency.csv"),
        &matrix_csv(&proj_s, "t"),
    )?;
    write_file(
        &out.join("projection_memory.csv"),
        &matrix_csv(&proj_m, "component"),
    )?;
    Ok(())
}

fn matrix_csv(m: &Matrix, index_name: &str) -> String {
    let mut body = String::new();
    let mut header = vec![index_name.to_string()];
    for j in 0..m.cols() {
        header.push(format!("f{j}"));
    }
    body.push_str(&csv_line(&header));
    body.push('\n');
    for r in 0..m.rows() {
        let mut fields = vec![r.to_string()];
        for j in 0..m.cols() {
            fields.push(fmt(m.get(r, j)));
        }
        body.push_str(&csv_line(&fields));
        body.push('\n');
    }
    body
}

fn build_dataset(
    cfg: &RunConfig,
    seed: Option<u64>,
    window_len: usize,
    smooth_window: usize,
) -> Result<(SplitDataset, NormStats), CliError> {
    let (series, target) = load_series(cfg, seed)?;
    Ok(prepare_dataset(&series, window_len, target, smooth_window)?)
}

/// Train, then write `checkpoint.json`, `train_log.jsonl`, and
/// `eval_report.json`.
pub fn cmd_train(cfg: &RunConfig, seed_flag: Option<u64>, out: &Path) -> Result<(), CliError> {
    cfg.validate()?;
    let seed = cfg.require_seed(seed_flag)?;
    let (dataset, stats) = build_dataset(cfg, Some(seed), cfg.window.length, cfg.window.smooth_window)?;
    let train_cfg = cfg.train_config(seed);
    let params = init_params(dataset.feature_dim(), train_cfg.hidden_dim, seed);
    let (best, log) = train(params, &dataset, &train_cfg)?;

    let report = build_report(
        &best,
        &dataset,
        config_echo(cfg, "train", Some(seed)),
        cfg.train.measure_forward_time,
    )?;

    ensure_out_dir(out)?;
    let checkpoint = Checkpoint {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        window_len: dataset.window_len,
        params: best,
        train_config: train_cfg,
        norm_stats: stats,
    };
    write_json(&out.join("checkpoint.json"), &checkpoint)?;
    write_file(&out.join("train_log.jsonl"), &log.to_jsonl())?;
    write_json(&out.join("eval_report.json"), &report)?;
    Ok(())
}

/// Load a checkpoint, rebuild the configured dataset with the checkpoint's
/// preprocessing, and write test-split predictions.
pub fn cmd_predict(
    cfg: &RunConfig,
    seed_flag: Option<u64>,
    out: &Path,
    checkpoint_path: Option<PathBuf>,
) -> Result<(), CliError> {
    cfg.validate()?;
    let path = checkpoint_path.unwrap_or_else(|| out.join("checkpoint.json"));
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let checkpoint: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("invalid checkpoint {}: {e}", path.display())))?;
    if checkpoint.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(CliError::Data(format!(
            "unsupported checkpoint schema_version {}",
            checkpoint.schema_version
        )));
    }
    checkpoint.params.validate()?;

    let seed = cfg.resolve_seed(seed_flag);
    let (dataset, _) = build_dataset(
        cfg,
        seed,
        checkpoint.window_len,
        checkpoint.train_config.smooth_window,
    )?;
    if dataset.feature_dim() != checkpoint.params.input_dim {
        return Err(CliError::Data(format!(
            "checkpoint expects {} features, data has {}",
            checkpoint.params.input_dim,
            dataset.feature_dim()
        )));
    }
    let (y, y_hat) = predictions(&checkpoint.params, &dataset.test)?;

    ensure_out_dir(out)?;
    let mut body = String::from("index,y_true,y_hat\n");
    for (i, (truth, pred)) in y.iter().zip(&y_hat).enumerate() {
        let _ = writeln!(body, "{i},{},{}", fmt(*truth), fmt(*pred));
    }
    write_file(&out.join("predictions.csv"), &body)?;
    Ok(())
}

/// Train all seven component masks on the same data and seed; write the grid.
pub fn cmd_ablate(cfg: &RunConfig, seed_flag: Option<u64>, out: &Path) -> Result<(), CliError> {
    cfg.validate()?;
    let seed = cfg.require_seed(seed_flag)?;
    let (dataset, _) = build_dataset(cfg, Some(seed), cfg.window.length, cfg.window.smooth_window)?;
    let split_hash = format!("{:016x}", dataset.content_hash());
    let train_cfg = cfg.train_config(seed);

    let mut body = String::from(
        "config,use_saliency,use_memory,use_trend,val_mae,val_rmse,val_r2,test_mae,test_rmse,test_r2,split_hash\n",
    );
    for mask in AblationConfig::all_seven() {
        let masked = ablate_dataset(&dataset, &mask)?;
        let params = init_params(dataset.feature_dim(), train_cfg.hidden_dim, seed);
        let (best, _) = train(params, &masked, &train_cfg)?;
        let val = evaluate_split(&best, &masked.validation)?;
        let test = evaluate_split(&best, &masked.test)?;
        let fields = vec![
            mask.label().to_string(),
            mask.use_saliency.to_string(),
            mask.use_memory.to_string(),
            mask.use_trend.to_string(),
            fmt(val.mae),
            fmt(val.rmse),
            fmt_r2(val.r2),
            fmt(test.mae),
            fmt(test.rmse),
            fmt_r2(test.r2),
            split_hash.clone(),
        ];
        body.push_str(&csv_line(&fields));
        body.push('\n');
    }

    ensure_out_dir(out)?;
    write_file(&out.join("ablation.csv"), &body)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct BenchReport {
    param_count: usize,
    features: usize,
    hidden_dim: usize,
    rank: usize,
    lengths: Vec<usize>,
    linear_pass: bool,
}

/// Run the timing sweep over the configured lengths; write the per-length
/// table and a summary with the model's parameter count.
pub fn cmd_bench(cfg: &RunConfig, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    cfg.validate()?;
    let (series, _) = load_series(cfg, seed)?;
    let d = series.cols();
    let min_len = *cfg.bench.lengths.first().expect("validated nonempty");
    let rank = cfg.resolve_rank(d, min_len);
    if rank > d.min(min_len) {
        return Err(CliError::Config(format!(
            "rank {rank} out of range for {min_len}x{d} bench series"
        )));
    }

    let sweep = timing_sweep(&cfg.bench.lengths, rank, d);
    let params = init_params(d, cfg.model.hidden_dim, 0);

    let mut body = String::from("length,median_seconds,doubling_ratio,linear_pass\n");
    let mut prev: Option<f64> = None;
    let mut all_pass = true;
    for (t, secs) in &sweep {
        let (ratio, pass) = match prev {
            Some(p) if p > 0.0 => {
                let r = secs / p;
                let ok = r < 2.5;
                all_pass &= ok;
                (fmt(r), ok.to_string())
            }
            _ => (String::new(), String::new()),
        };
        let _ = writeln!(body, "{t},{},{ratio},{pass}", fmt(*secs));
        prev = Some(*secs);
    }

    ensure_out_dir(out)?;
    write_file(&out.join("bench.csv"), &body)?;
    write_json(
        &out.join("bench_report.json"),
        &BenchReport {
            param_count: params.param_count(),
            features: d,
            hidden_dim: cfg.model.hidden_dim,
            rank,
            lengths: cfg.bench.lengths.clone(),
            linear_pass: all_pass,
        },
    )?;
    Ok(())
}
