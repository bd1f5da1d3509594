use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use log::{info, warn};
use serde::Serialize;

use hydroda::data::{
    load_basin_csv, load_domain, load_static_csv, synth_generate, write_domain, CsvSchema, DomainData, NormStats,
    SynthConfig, WindowSample,
};
use hydroda::model::WindowBatch;
use hydroda::training::{
    evaluate as score, prepare_domain, prepare_domain_with_stats, Checkpoint, Evaluation, Forecaster, PreparedData,
    TrainLogEntry, TrainedModel, Trainer,
};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::lock::OutputLock;
use crate::{DomainName, SplitName};

const LOG_FILE: &str = "train_log.jsonl";
const LAST_CHECKPOINT: &str = "last.ckpt";
const BEST_CHECKPOINT: &str = "best.ckpt";

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize to JSON") + "\n"
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    synth: &'a SynthConfig,
    dynamic_columns: Vec<String>,
    static_columns: Vec<String>,
    source_basins: Vec<String>,
    target_basins: Vec<String>,
}

pub fn synth(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let synth = cfg.synth_config();
    let _lock = OutputLock::acquire(out)?;
    let (source, target) = synth_generate(&synth)?;
    write_domain(&out.join("source"), &source)?;
    write_domain(&out.join("target"), &target)?;
    let ids = |d: &DomainData| d.series.iter().map(|s| s.basin_id.clone()).collect();
    let manifest = Manifest {
        seed: synth.seed,
        synth: &synth,
        dynamic_columns: source.series[0].dynamic_names.clone(),
        static_columns: source.statics.names.clone(),
        source_basins: ids(&source),
        target_basins: ids(&target),
    };
    write_file(&out.join("manifest.json"), to_json(&manifest).as_bytes())?;
    info!(
        "wrote {} source and {} target basins to {}",
        source.series.len(),
        target.series.len(),
        out.display()
    );
    Ok(())
}

fn load_prepared(cfg: &ExperimentConfig) -> Result<PreparedData, CliError> {
    let schema = cfg.schema();
    let spec = cfg.train_config().window_spec();
    let source = load_domain(&cfg.data.source_dir, &schema)?;
    let target = load_domain(&cfg.data.target_dir, &schema)?;
    Ok(PreparedData {
        source: prepare_domain(&source, &cfg.splits, spec)?,
        target: prepare_domain(&target, &cfg.splits, spec)?,
    })
}

fn append_log(path: &Path, entries: &[TrainLogEntry], truncate: bool) -> Result<(), CliError> {
    let file = OpenOptions::new()
        .create(true)
        .append(!truncate)
        .write(true)
        .truncate(truncate)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in entries {
        let line = serde_json::to_string(e).expect("log entries serialize");
        writeln!(w, "{line}").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn train(cfg: &ExperimentConfig, resume: bool) -> Result<(), CliError> {
    let out = &cfg.out_dir;
    let _lock = OutputLock::acquire(out)?;
    cfg.echo(out)?;
    let data = load_prepared(cfg)?;
    let tc = cfg.train_config();
    let log_path = out.join(LOG_FILE);
    let last_path = out.join(LAST_CHECKPOINT);

    let mut trainer = if resume && last_path.exists() {
        let ck = Checkpoint::load(&last_path)?;
        ck.verify_config(&tc)?;
        let mut t = ck.trainer;
        t.config = tc;
        info!("resuming after epoch {} of {}", t.completed_epochs(), t.config.total_epochs());
        t
    } else {
        let mc = tc.model_config(data.source.n_dynamic(), data.source.n_static());
        Trainer::new(tc, mc)?
    };
    append_log(&log_path, &trainer.log, true)?;

    let best_path = out.join(BEST_CHECKPOINT);
    let outcome = trainer.run(&data, |t, entry| {
        let io = |e: CliError| hydroda::training::TrainError::Config(e.to_string());
        append_log(&log_path, std::slice::from_ref(entry), false).map_err(io)?;
        let ck = Checkpoint::new(t, &data);
        ck.save(&last_path)?;
        if t.best.as_ref().is_some_and(|b| b.epoch == entry.epoch) {
            ck.save(&best_path)?;
        }
        info!(
            "epoch {:>3} {:?} lr {} source {} target {} domain {} val NSE {}",
            entry.epoch,
            entry.phase,
            entry.lr,
            fmt_opt(entry.loss_source),
            fmt_opt(entry.loss_target),
            fmt_opt(entry.loss_discriminator),
            fmt_opt(entry.validation_nse)
        );
        Ok(())
    });
    if let Err(e) = outcome {
        if last_path.exists() {
            warn!("training stopped; {} holds the last completed epoch", last_path.display());
        }
        return Err(e.into());
    }
    match &trainer.best {
        Some(b) => info!("best validation NSE {:.4} at epoch {}", b.validation_nse, b.epoch),
        None => {
            warn!("no validation NSE was recorded; best.ckpt holds the final model");
            Checkpoint::new(&trainer, &data).save(&best_path)?;
        }
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn forecaster(model: &TrainedModel, domain: DomainName) -> &dyn Forecaster {
    match domain {
        DomainName::Source => model.source_forecaster(),
        DomainName::Target => model.target_forecaster(),
    }
}

fn domain_stats(ck: &Checkpoint, domain: DomainName) -> &NormStats {
    match domain {
        DomainName::Source => &ck.source_stats,
        DomainName::Target => &ck.target_stats,
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    mode: String,
    checkpoint: PathBuf,
    epochs_trained: usize,
    split: String,
    domain: String,
    basins: usize,
    median: &'a hydroda::metrics::MedianScores,
    nse_negative_count: usize,
    undefined_nse_count: usize,
}

fn write_series(path: &Path, eval: &Evaluation) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| CliError::io(path, e);
    writeln!(w, "basin_id,date,predicted,observed").map_err(io)?;
    for s in &eval.series {
        for i in 0..s.dates.len() {
            let obs = s.observed[i].map_or(String::new(), |v| v.to_string());
            writeln!(w, "{},{},{},{}", s.basin_id, s.dates[i], s.predicted[i], obs).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn evaluate(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    out: &Path,
    split: SplitName,
    domain: DomainName,
) -> Result<(), CliError> {
    let ck = Checkpoint::load(checkpoint)?;
    let tc = cfg.train_config();
    ck.verify_config(&tc)?;
    let schema = cfg.schema();
    if schema.dynamic_columns != ck.dynamic_names {
        return Err(CliError::Usage(format!(
            "config forcing columns {:?} differ from the checkpoint's {:?}",
            schema.dynamic_columns, ck.dynamic_names
        )));
    }
    let dir = match domain {
        DomainName::Source => &cfg.data.source_dir,
        DomainName::Target => &cfg.data.target_dir,
    };
    let data = load_domain(dir, &schema)?;
    let stats = domain_stats(&ck, domain).clone();
    let prepared = prepare_domain_with_stats(&data, &cfg.splits, tc.window_spec(), stats.clone())?;
    let basins = match split {
        SplitName::Train => group_by_basin(&prepared.train),
        SplitName::Validation => prepared.validation,
        SplitName::Test => prepared.test,
    };
    let model = ck.trainer.current_model();
    let eval = score(
        forecaster(&model, domain),
        &basins,
        &stats,
        ck.trainer.model_config.dynamic_inputs,
        tc.eval_batch_size,
        Some(tc.seed),
    )?;

    let _lock = OutputLock::acquire(out)?;
    cfg.echo(out)?;
    let per_basin = out.join("per_basin.csv");
    let mut buf = Vec::new();
    eval.report.write_csv(&mut buf)?;
    write_file(&per_basin, &buf)?;
    let summary = Summary {
        mode: tc.mode.to_string(),
        checkpoint: checkpoint.into(),
        epochs_trained: ck.trainer.completed_epochs(),
        split: format!("{split:?}").to_lowercase(),
        domain: format!("{domain:?}").to_lowercase(),
        basins: eval.report.basins.len(),
        median: &eval.report.median,
        nse_negative_count: eval.report.nse_negative_count,
        undefined_nse_count: eval.report.undefined_nse_count,
    };
    write_file(&out.join("summary.json"), to_json(&summary).as_bytes())?;
    write_series(&out.join("timeseries.csv"), &eval)?;
    info!(
        "median NSE {} over {} basins; reports in {}",
        fmt_opt(eval.report.median.nse),
        eval.report.basins.len(),
        out.display()
    );
    Ok(())
}

fn group_by_basin(windows: &[WindowSample]) -> Vec<hydroda::training::BasinWindows> {
    let mut out: Vec<hydroda::training::BasinWindows> = Vec::new();
    for w in windows {
        match out.last_mut() {
            Some(b) if b.basin_id == w.basin_id => b.windows.push(w.clone()),
            _ => out.push(hydroda::training::BasinWindows {
                basin_id: w.basin_id.clone(),
                windows: vec![w.clone()],
            }),
        }
    }
    out
}

pub fn predict(
    checkpoint: &Path,
    basin: &Path,
    date: NaiveDate,
    out: Option<&Path>,
    domain: DomainName,
) -> Result<(), CliError> {
    let ck = Checkpoint::load(checkpoint)?;
    let series = load_basin_csv(basin, &CsvSchema::new(ck.dynamic_names.clone()))?;
    let static_path = basin.parent().unwrap_or(Path::new(".")).join("static.csv");
    let statics = load_static_csv(&static_path)?;
    if statics.names != ck.static_names {
        return Err(CliError::Usage(format!(
            "{} has attributes {:?}, the checkpoint expects {:?}",
            static_path.display(),
            statics.names,
            ck.static_names
        )));
    }
    let attrs = statics.get(&series.basin_id)?;
    let stats = domain_stats(&ck, domain);
    let cfg = &ck.trainer.config;
    let (n, tau) = (cfg.lookback, cfg.horizon);

    let history_start = date.checked_sub_days(Days::new(n as u64));
    let start = history_start.and_then(|d| series.dates.iter().position(|&x| x == d));
    let insufficient = || CliError::History {
        basin: series.basin_id.clone(),
        date,
        required: n,
    };
    let start = start.ok_or_else(insufficient)?;
    let rows = start..start + n;
    if rows.end > series.len()
        || series.dates[rows.end - 1] + Days::new(1) != date
        || !series.dynamic_valid[rows.clone()].iter().all(|&v| v)
    {
        return Err(insufficient());
    }
    let last_observed_y = rows
        .clone()
        .rev()
        .find(|&i| series.mask[i])
        .map_or(0.0, |i| stats.normalize_flow(series.streamflow[i]));
    let window = WindowSample {
        basin_id: series.basin_id.clone(),
        target_start: date,
        history: rows.clone().flat_map(|i| stats.dynamic.normalize(&series.dynamic[i])).collect(),
        static_attrs: stats.statics.normalize(attrs),
        last_observed_y,
        targets: vec![0.0; tau],
        target_mask: vec![false; tau],
        obs_variance: 1.0,
    };
    let batch = WindowBatch::from_samples(&[&window], series.n_dynamic()).map_err(hydroda::training::TrainError::from)?;
    let model = ck.trainer.current_model();
    let forecast = forecaster(&model, domain).forecast(&batch)?;

    let mut csv = String::from("basin_id,issue_date,lead_days,date,streamflow_mm_per_day\n");
    for lead in 0..tau {
        let value = stats.denormalize_flow(forecast.get2(0, lead));
        let day = date + Days::new(lead as u64);
        csv.push_str(&format!("{},{},{},{},{}\n", series.basin_id, date, lead + 1, day, value));
    }
    print!("{csv}");
    if let Some(path) = out {
        write_file(path, csv.as_bytes())?;
    }
    Ok(())
}
