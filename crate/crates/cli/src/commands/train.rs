use std::collections::HashMap;
use std::str::FromStr;

use amuze::chords::{ChordTable, CHORD_TABLE_SIZE};
use amuze::generate::harmony_training_example;
use amuze::model::{save_checkpoint, train, ModelDims, ModelMode, SequenceModel, TrainConfig, TrainingExample};
use amuze::tokenizer::{read_corpus, CorpusLine, VOCAB_SIZE};
use amuze::Hand;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{create_dir, read_file, write_file};
use crate::config::{ConfigFile, Resolver};
use crate::error::CliError;
use crate::TrainArgs;

/// Model mode from its command-line spelling.
#[derive(Debug, Clone, Copy)]
struct ModeArg(ModelMode);

impl FromStr for ModeArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "melody" => Ok(ModeArg(ModelMode::Melody)),
            "harmony" => Ok(ModeArg(ModelMode::Harmony)),
            "harmony-sum" | "harmony-sum-ablation" => Ok(ModeArg(ModelMode::HarmonySum)),
            _ => Err(format!("unknown mode `{s}` (melody, harmony, harmony-sum)")),
        }
    }
}

impl std::fmt::Display for ModeArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.0.as_str())
    }
}

pub(crate) fn parse_ablation(v: Option<u8>) -> Result<Option<u8>, CliError> {
    match v {
        None | Some(0) => Ok(None),
        Some(a @ 1..=3) => Ok(Some(a)),
        Some(a) => Err(CliError::BadConfig(format!("ablation must be 1, 2 or 3, got {a}"))),
    }
}

fn examples(lines: &[CorpusLine], hand: Hand, mode: ModelMode) -> Result<Vec<TrainingExample>, CliError> {
    let wanted: Vec<&CorpusLine> = lines.iter().filter(|l| l.sequence.hand == hand).collect();
    if wanted.is_empty() {
        return Err(CliError::CorpusHandMissing(format!("corpus has no {} lines", hand.as_str())));
    }
    let rights: HashMap<&str, &CorpusLine> = lines
        .iter()
        .filter(|l| l.sequence.hand == Hand::Right)
        .map(|l| (l.file_id.as_str(), l))
        .collect();
    let table = ChordTable::standard();
    let mut out = Vec::new();
    for line in wanted {
        if line.sequence.len() < 2 {
            continue;
        }
        let example = match mode {
            ModelMode::Melody => TrainingExample::unconditioned(line.sequence.ids()),
            ModelMode::Harmony | ModelMode::HarmonySum => {
                let right = rights.get(line.file_id.as_str()).ok_or_else(|| {
                    CliError::CorpusHandMissing(format!("{}: no right line to take chords from", line.file_id))
                })?;
                harmony_training_example(&right.sequence, &line.sequence, mode, table)
            }
        };
        out.push(example);
    }
    Ok(out)
}

pub fn run(args: TrainArgs, file: &ConfigFile) -> Result<(), CliError> {
    let mut cfg = Resolver::new(file);
    cfg.note("corpus", args.corpus.display());
    let hand: String = cfg.value("hand", args.hand, "right".to_string())?;
    let hand = Hand::parse(&hand).ok_or_else(|| CliError::BadConfig(format!("hand must be right or left, got `{hand}`")))?;
    let ablation = parse_ablation(cfg.optional("ablation", args.ablation)?)?;
    let default_mode = match (hand, ablation) {
        (Hand::Right, _) | (Hand::Left, Some(1)) => ModelMode::Melody,
        (Hand::Left, Some(2)) => ModelMode::HarmonySum,
        (Hand::Left, _) => ModelMode::Harmony,
    };
    let mode = cfg.value("mode", args.mode.map(|m| m.parse::<ModeArg>()).transpose().map_err(CliError::BadConfig)?, ModeArg(default_mode))?.0;
    if hand == Hand::Right && mode != ModelMode::Melody {
        return Err(CliError::BadConfig("the right hand trains a melody model".into()));
    }

    let defaults = TrainConfig::default();
    let dims_default = ModelDims::default();
    let train_cfg = TrainConfig {
        seed: cfg.value("seed", args.seed, defaults.seed)?,
        epochs: cfg.value("epochs", args.epochs, defaults.epochs)?,
        learning_rate: cfg.value("lr", args.lr, defaults.learning_rate)?,
        bptt_window: cfg.value("bptt", args.bptt, defaults.bptt_window)?,
        grad_clip: cfg.value("grad-clip", args.grad_clip, defaults.grad_clip)?,
        ..defaults
    };
    let dims = ModelDims {
        vocab: VOCAB_SIZE,
        embed: cfg.value("embed", args.embed, dims_default.embed)?,
        hidden: cfg.value("hidden", args.hidden, dims_default.hidden)?,
        layers: cfg.value("layers", args.layers, dims_default.layers)?,
        chord_vocab: CHORD_TABLE_SIZE,
    };
    if dims.embed == 0 || dims.hidden == 0 || dims.layers == 0 {
        return Err(CliError::BadConfig("embed, hidden and layers must be positive".into()));
    }
    train_cfg.validate()?;

    let text = String::from_utf8_lossy(&read_file(&args.corpus)?).into_owned();
    let lines = read_corpus(&text).map_err(|source| CliError::Corpus {
        path: args.corpus.clone(),
        source,
    })?;
    let corpus = examples(&lines, hand, mode)?;

    create_dir(&args.out)?;
    let mut model = SequenceModel::<f32>::new(mode, dims, &mut ChaCha8Rng::seed_from_u64(train_cfg.seed));
    let log = train(&mut model, &corpus, &train_cfg)?;

    let ckpt = args.out.join("checkpoint.amuz");
    save_checkpoint(&model, &ckpt).map_err(|source| CliError::Checkpoint {
        path: ckpt.clone(),
        source,
    })?;
    let mut csv_out = csv::Writer::from_writer(Vec::new());
    csv_out.write_record(["epoch", "split", "perplexity"])?;
    for e in &log {
        csv_out.write_record([e.epoch.to_string(), "train".to_string(), format!("{:.6}", e.perplexity)])?;
    }
    let log_path = args.out.join("train_log.csv");
    let bytes = csv_out.into_inner().map_err(|e| crate::error::io_err(&log_path)(e.into_error()))?;
    write_file(&log_path, bytes)?;
    cfg.note("files", corpus.len());
    cfg.write(&args.out.join("config.txt"))?;
    if let Some(last) = log.last() {
        eprintln!("{} model, {} files, final perplexity {:.4}: {}", mode.as_str(), corpus.len(), last.perplexity, ckpt.display());
    }
    Ok(())
}
