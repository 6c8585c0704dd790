use amuze::midi::parse_midi;
use amuze::tokenizer::{tokenize_document, write_corpus, CorpusLine};

use super::{create_dir, midi_files, read_file, relative_id, write_file};
use crate::config::{ConfigFile, Resolver};
use crate::error::{io_err, CliError};
use crate::IngestArgs;

pub fn run(args: IngestArgs, file: &ConfigFile) -> Result<(), CliError> {
    let mut cfg = Resolver::new(file);
    cfg.note("dir", args.dir.display());
    let files = midi_files(&args.dir)?;
    create_dir(&args.out)?;

    let mut lines = Vec::new();
    let mut report = csv::WriterBuilder::new().delimiter(b'\t').from_writer(Vec::new());
    report.write_record(["file", "status", "detail"])?;
    let (mut kept, mut skipped) = (0usize, 0usize);
    for path in &files {
        let id = relative_id(&args.dir, path);
        if id.contains(['\t', '\n', '\r']) {
            report.write_record([&id, "skipped", "file name contains a tab or newline"])?;
            skipped += 1;
            continue;
        }
        let piece = match parse_midi(&read_file(path)?).map_err(|e| e.to_string()).and_then(|doc| {
            let warnings = doc.warnings.len();
            tokenize_document(&doc).map(|p| (p, warnings)).map_err(|e| e.to_string())
        }) {
            Ok(p) => p,
            Err(reason) => {
                report.write_record([&id, "skipped", &reason])?;
                skipped += 1;
                continue;
            }
        };
        let (piece, warnings) = piece;
        if piece.right.is_empty() {
            report.write_record([&id, "skipped", "no notes"])?;
            skipped += 1;
            continue;
        }
        let mut notes = Vec::new();
        if piece.scale_detected {
            notes.push(format!("scale detected: {}", piece.scale));
        }
        match piece.track_count {
            1 => notes.push("single track: left hand empty".to_string()),
            2 => {}
            n => notes.push(format!("{n} note tracks: outer two used")),
        }
        if warnings > 0 {
            notes.push(format!("{warnings} parse warnings"));
        }
        report.write_record([id.as_str(), "ok", &notes.join("; ")])?;
        kept += 1;
        for sequence in [piece.right, piece.left] {
            lines.push(CorpusLine {
                file_id: id.clone(),
                sequence,
            });
        }
    }

    let corpus = args.out.join("corpus.txt");
    write_file(&corpus, write_corpus(&lines))?;
    let report_path = args.out.join("ingest_report.tsv");
    let report_bytes = report.into_inner().map_err(|e| io_err(&report_path)(e.into_error()))?;
    write_file(&report_path, report_bytes)?;
    cfg.note("files", files.len());
    cfg.write(&args.out.join("config.txt"))?;
    eprintln!("ingested {kept} files, skipped {skipped}: {}", corpus.display());
    Ok(())
}
