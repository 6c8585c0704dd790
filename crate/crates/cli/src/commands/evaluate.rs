use std::io::Write;

use amuze::metrics::{evaluate, score_from_document, MetricsReport, UpcMode};
use amuze::midi::parse_midi;
use amuze::Scale;

use super::{midi_files, read_file, relative_id, write_file};
use crate::config::{ConfigFile, Resolver};
use crate::error::{io_err, CliError};
use crate::EvaluateArgs;

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn run(args: EvaluateArgs, file: &ConfigFile) -> Result<(), CliError> {
    let mut cfg = Resolver::new(file);
    cfg.note("path", args.path.display());
    let scale_arg = cfg.value("scale", args.scale, "auto".to_string())?;
    let scale = match scale_arg.as_str() {
        "auto" => None,
        s => Some(s.parse::<Scale>().map_err(|e| CliError::BadConfig(e.to_string()))?),
    };
    let upc_mode = match cfg.value("upc", args.upc, "pitch-classes".to_string())?.as_str() {
        "pitch-classes" => UpcMode::PitchClasses,
        "pitches" => UpcMode::Pitches,
        other => return Err(CliError::BadConfig(format!("upc must be pitch-classes or pitches, got `{other}`"))),
    };

    let files = midi_files(&args.path)?;
    let mut rows: Vec<(String, MetricsReport)> = Vec::with_capacity(files.len());
    for path in &files {
        let metrics_err = |source| CliError::Metrics {
            path: path.clone(),
            source,
        };
        let doc = parse_midi(&read_file(path)?).map_err(|e| metrics_err(e.into()))?;
        let score = score_from_document(&doc, scale).map_err(metrics_err)?;
        rows.push((relative_id(&args.path, path), evaluate(&score, upc_mode).map_err(metrics_err)?));
    }

    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["file", "qn", "upc", "td", "oos"])?;
    for (name, r) in &rows {
        out.write_record([name.clone(), fmt(r.qn), fmt(r.upc), r.td.map(fmt).unwrap_or_default(), fmt(r.oos)])?;
    }
    let col = |f: fn(&MetricsReport) -> Option<f64>| mean(rows.iter().filter_map(|(_, r)| f(r))).map(fmt).unwrap_or_default();
    out.write_record([
        "mean".to_string(),
        col(|r| Some(r.qn)),
        col(|r| Some(r.upc)),
        col(|r| r.td),
        col(|r| Some(r.oos)),
    ])?;
    let bytes = out.into_inner().map_err(|e| CliError::Io {
        path: args.path.clone(),
        source: e.into_error(),
    })?;

    match &args.out {
        Some(path) => {
            write_file(path, &bytes)?;
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            cfg.write(&path.with_file_name(format!("{stem}.config.txt")))?;
        }
        None => std::io::stdout().write_all(&bytes).map_err(io_err("<stdout>"))?,
    }
    Ok(())
}
