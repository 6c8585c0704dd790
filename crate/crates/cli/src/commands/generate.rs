use std::path::{Path, PathBuf};

use amuze::chords::{ChordTable, CHORD_TABLE_SIZE};
use amuze::generate::{generate_score, EnrichConfig, GenerateConfig, Prompt};
use amuze::midi::{parse_midi, OUTPUT_TICKS_PER_QUARTER};
use amuze::model::{load_checkpoint, ModelMode, SequenceModel};
use amuze::tokenizer::{tokenize_document, VOCAB_SIZE};
use amuze::write_midi;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::train::parse_ablation;
use super::{read_file, write_file};
use crate::config::{ConfigFile, Resolver};
use crate::error::CliError;
use crate::GenerateArgs;

fn load(path: &Path) -> Result<SequenceModel<f32>, CliError> {
    load_checkpoint(path).map_err(|source| CliError::Checkpoint {
        path: path.to_path_buf(),
        source,
    })
}

fn check_pair(melody: &SequenceModel<f32>, harmony: &SequenceModel<f32>, ablation: Option<u8>) -> Result<(), CliError> {
    let bad = |msg: String| Err(CliError::IncompatibleCheckpoints(msg));
    if melody.mode != ModelMode::Melody {
        return bad(format!("melody checkpoint is a {} model", melody.mode.as_str()));
    }
    for (name, m) in [("melody", melody), ("harmony", harmony)] {
        if m.dims.vocab != VOCAB_SIZE {
            return bad(format!("{name} checkpoint has vocabulary {}, expected {VOCAB_SIZE}", m.dims.vocab));
        }
    }
    if harmony.mode == ModelMode::Harmony && harmony.dims.chord_vocab != CHORD_TABLE_SIZE {
        return bad(format!("harmony checkpoint has {} chords, expected {CHORD_TABLE_SIZE}", harmony.dims.chord_vocab));
    }
    let expected = match ablation {
        Some(1) => ModelMode::Melody,
        Some(2) => ModelMode::HarmonySum,
        _ => ModelMode::Harmony,
    };
    if harmony.mode != expected {
        return bad(format!(
            "harmony checkpoint is a {} model but this run needs {}",
            harmony.mode.as_str(),
            expected.as_str()
        ));
    }
    Ok(())
}

fn bad_prompt(path: &Path, reason: impl ToString) -> CliError {
    CliError::BadPrompt {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// `out.mid` -> `out.config.txt`
fn config_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "generated".into());
    out.with_file_name(format!("{stem}.config.txt"))
}

pub fn run(args: GenerateArgs, file: &ConfigFile) -> Result<(), CliError> {
    let mut cfg = Resolver::new(file);
    cfg.note("melody", args.melody.display());
    cfg.note("harmony", args.harmony.display());
    cfg.note("prompt", args.prompt.display());
    let seed = cfg.value("seed", args.seed, 0u64)?;
    let num_notes = cfg.value("num-notes", args.num_notes, 64usize)?;
    let prompt_notes = cfg.optional("prompt-notes", args.prompt_notes)?;
    let prompt_bars = if prompt_notes.is_none() { cfg.value("prompt-bars", args.prompt_bars, 2usize)? } else { 0 };
    let top_k = cfg.value("top-k", args.top_k, GenerateConfig::default().top_k)?;
    let ablation = parse_ablation(cfg.optional("ablation", args.ablation)?)?;
    let defaults = EnrichConfig::default();
    let p_melody = cfg.value("enrich-p-melody", args.enrich_p_melody, defaults.p_melody)?;
    let p_harmony = cfg.value("enrich-p-harmony", args.enrich_p_harmony, defaults.p_harmony)?;
    let no_enrich = cfg.switch("no-enrich", args.no_enrich)? || ablation == Some(3);
    if top_k == 0 {
        return Err(CliError::BadConfig("top-k must be positive".into()));
    }
    if ![p_melody, p_harmony].iter().all(|p| (0.0..=1.0).contains(p)) {
        return Err(CliError::BadConfig("enrichment probabilities must lie in [0, 1]".into()));
    }

    let melody = load(&args.melody)?;
    let harmony = load(&args.harmony)?;
    check_pair(&melody, &harmony, ablation)?;

    let bytes = read_file(&args.prompt)?;
    let doc = parse_midi(&bytes).map_err(|e| bad_prompt(&args.prompt, e))?;
    let piece = tokenize_document(&doc).map_err(|e| bad_prompt(&args.prompt, e))?;
    let prompt = match prompt_notes {
        Some(n) => Prompt::from_notes(&piece.right, &piece.left, n, num_notes),
        None => Prompt::from_bars(&piece.right, &piece.left, prompt_bars, num_notes),
    };
    if prompt.melody.is_empty() {
        return Err(bad_prompt(&args.prompt, "no right-hand notes in the prompt window"));
    }
    if prompt.harmony.is_empty() {
        return Err(bad_prompt(&args.prompt, "no left-hand notes in the prompt window"));
    }

    let gen_cfg = GenerateConfig {
        top_k,
        enrich: (!no_enrich).then_some(EnrichConfig { p_melody, p_harmony }),
        ..GenerateConfig::default()
    };
    let table = ChordTable::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let generation = generate_score(&melody, &harmony, &prompt, table, &gen_cfg, &mut rng)?;
    let midi = write_midi(&generation.score, OUTPUT_TICKS_PER_QUARTER).map_err(|e| CliError::Io {
        path: args.out.clone(),
        source: std::io::Error::other(e.to_string()),
    })?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        super::create_dir(dir)?;
    }
    write_file(&args.out, midi)?;
    cfg.write(&config_path(&args.out))?;

    for (bar, chord) in generation.score.bar_chords.iter().enumerate() {
        println!("{}\t{}", bar + 1, table.name(*chord));
    }
    Ok(())
}
