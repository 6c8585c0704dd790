use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use amuze::metrics::{evaluate, score_from_document, UpcMode};
use amuze::midi::parse_midi;
use amuze::tokenizer::{denormalize_scale, detokenize, tokenize_document};
use amuze::{write_midi, Mode, PerformanceScore, Scale, TimeSignature, TimedNote};
use tempfile::TempDir;

const PPQ: u32 = 480;
const SMALL: &[&str] = &["--hidden", "24", "--embed", "12", "--layers", "1"];

fn amuze(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amuze")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = amuze(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn fails_with(args: &[&str], code: &str) {
    let out = amuze(args);
    assert_eq!(out.status.code(), Some(1), "{args:?} should fail");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with(&format!("error[{code}]: ")), "{args:?}: {err}");
    assert!(out.stdout.is_empty());
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Sixteen bars of a scale-wise tune over a root-and-fifth bass.
fn piece(tonic: u8, mode: Mode, variant: u64) -> PerformanceScore {
    let scale = Scale::new(tonic, mode);
    let degrees = scale.degrees();
    let pitch = |deg: usize, octave: u8| 12 * octave + degrees[deg % 7] + 12 * (deg / 7) as u8;
    let mut right = Vec::new();
    let mut left = Vec::new();
    let bar = 4 * PPQ as u64;
    for b in 0..16u64 {
        let root = [0usize, 3, 4, 0, 5, 3, 4, 0][(b as usize + variant as usize) % 8];
        let start = b * bar;
        let rhythm: &[u64] = if (b + variant).is_multiple_of(2) { &[480, 240, 240, 480, 480] } else { &[240; 8] };
        let mut t = start;
        for (i, &len) in rhythm.iter().enumerate() {
            let deg = root + [0, 2, 4, 2, 1, 3, 5, 4][i % 8];
            right.push(TimedNote::new(pitch(deg, 5), t, len));
            t += len;
        }
        left.push(TimedNote::new(pitch(root, 3), start, 960));
        left.push(TimedNote::new(pitch(root + 4, 3), start + 960, 960));
    }
    PerformanceScore::new(PPQ, right, left, scale, TimeSignature::COMMON)
}

fn midi_bytes(score: &PerformanceScore) -> Vec<u8> {
    write_midi(score, PPQ as u16).unwrap()
}

/// Same file with the key signature event blanked into a text event.
fn without_key_signature(mut bytes: Vec<u8>) -> Vec<u8> {
    let at = bytes.windows(3).position(|w| w == [0xff, 0x59, 0x02]).expect("key signature present");
    bytes[at + 1] = 0x01;
    bytes[at + 3] = b'k';
    bytes[at + 4] = b's';
    bytes
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    /// `midi/` holds two two-track files, the second without a key signature.
    fn new() -> Workspace {
        let dir = TempDir::new().unwrap();
        let midi = dir.path().join("midi");
        std::fs::create_dir_all(midi.join("sub")).unwrap();
        std::fs::write(midi.join("a.mid"), midi_bytes(&piece(2, Mode::Major, 0))).unwrap();
        std::fs::write(
            midi.join("sub/b.midi"),
            without_key_signature(midi_bytes(&piece(9, Mode::Minor, 3))),
        )
        .unwrap();
        std::fs::write(midi.join("notes.txt"), "not midi").unwrap();
        Workspace { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn ingest(&self) -> PathBuf {
        ok(&["ingest", s(&self.path("midi")), "--out", s(&self.path("corpus"))]);
        self.path("corpus/corpus.txt")
    }

    fn train(&self, corpus: &Path, out: &str, extra: &[&str]) -> PathBuf {
        let mut args = vec!["train", s(corpus), "--out"];
        let out = self.path(out);
        args.push(s(&out));
        args.extend_from_slice(SMALL);
        args.extend_from_slice(extra);
        ok(&args);
        out.join("checkpoint.amuz")
    }
}

fn log_perplexities(dir: &Path) -> Vec<f64> {
    let text = std::fs::read_to_string(dir.join("train_log.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("epoch,split,perplexity"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f[1], "train");
            f[2].parse().unwrap()
        })
        .collect()
}

#[test]
fn ingest_two_files_writes_four_lines_and_reports_detected_scale() {
    let ws = Workspace::new();
    let corpus = ws.ingest();
    let text = std::fs::read_to_string(&corpus).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("a.mid\tright\tD:major\t4/4\t"));
    assert!(lines[1].starts_with("a.mid\tleft\t"));
    assert!(lines[2].starts_with("sub/b.midi\tright\t"));

    let report = std::fs::read_to_string(ws.path("corpus/ingest_report.tsv")).unwrap();
    let b = report.lines().find(|l| l.starts_with("sub/b.midi")).unwrap();
    assert!(b.contains("ok") && b.contains("scale detected"), "{b}");
    let a = report.lines().find(|l| l.starts_with("a.mid")).unwrap();
    assert!(!a.contains("scale detected"));
    assert!(ws.path("corpus/config.txt").exists());
}

#[test]
fn ingest_is_byte_identical_on_rerun() {
    let ws = Workspace::new();
    let first = std::fs::read(ws.ingest()).unwrap();
    let report = std::fs::read(ws.path("corpus/ingest_report.tsv")).unwrap();
    let second = std::fs::read(ws.ingest()).unwrap();
    assert_eq!(first, second);
    assert_eq!(report, std::fs::read(ws.path("corpus/ingest_report.tsv")).unwrap());
}

#[test]
fn ingest_reports_unparseable_and_single_track_files() {
    let ws = Workspace::new();
    let midi = ws.path("midi");
    std::fs::write(midi.join("broken.mid"), b"MThd nonsense").unwrap();
    let mut solo = piece(0, Mode::Major, 1);
    solo.left.clear();
    let bytes = midi_bytes(&solo);
    std::fs::write(midi.join("solo.mid"), bytes).unwrap();
    let text = std::fs::read_to_string(ws.ingest()).unwrap();
    assert_eq!(text.lines().count(), 6);
    let solo_left = text.lines().find(|l| l.starts_with("solo.mid\tleft")).unwrap();
    assert!(solo_left.ends_with('\t'));
    let report = std::fs::read_to_string(ws.path("corpus/ingest_report.tsv")).unwrap();
    assert!(report.lines().any(|l| l.starts_with("broken.mid\tskipped\t")));
    assert!(report.lines().any(|l| l.starts_with("solo.mid\tok\t") && l.contains("single track")));
}

#[test]
fn empty_directories_have_no_files() {
    let dir = TempDir::new().unwrap();
    fails_with(&["ingest", s(dir.path()), "--out", s(&dir.path().join("o"))], "NoFilesFound");
    fails_with(&["evaluate", s(dir.path())], "NoFilesFound");
}

#[test]
fn right_hand_perplexity_strictly_decreases_on_one_file() {
    let ws = Workspace::new();
    let corpus = ws.ingest();
    let text = std::fs::read_to_string(&corpus).unwrap();
    let one = ws.path("one.txt");
    std::fs::write(&one, text.lines().take(2).map(|l| format!("{l}\n")).collect::<String>()).unwrap();
    ok(&["train", s(&one), "--out", s(&ws.path("rh")), "--hand", "right", "--epochs", "5"]);
    let ppl = log_perplexities(&ws.path("rh"));
    assert_eq!(ppl.len(), 5);
    assert!(ppl.windows(2).all(|w| w[1] < w[0]), "{ppl:?}");
}

#[test]
fn ablation_checkpoints_have_expected_headers() {
    let ws = Workspace::new();
    let corpus = ws.ingest();
    let header = |p: &Path| {
        let b = std::fs::read(p).unwrap();
        let u = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        (u(8), u(28))
    };
    let full = ws.train(&corpus, "lh", &["--hand", "left", "--epochs", "1"]);
    assert_eq!(header(&full), (1, 253));
    let a1 = ws.train(&corpus, "lh1", &["--hand", "left", "--ablation", "1", "--epochs", "1"]);
    assert_eq!(header(&a1), (0, 0));
    let a2 = ws.train(&corpus, "lh2", &["--hand", "left", "--ablation", "2", "--epochs", "1"]);
    assert_eq!(header(&a2), (2, 0));
    let cfg = std::fs::read_to_string(ws.path("lh2/config.txt")).unwrap();
    assert!(cfg.contains("mode=harmony-sum-ablation\n") && cfg.contains("ablation=2\n"), "{cfg}");
}

#[test]
fn left_hand_harmony_needs_the_right_lines() {
    let ws = Workspace::new();
    let text = std::fs::read_to_string(ws.ingest()).unwrap();
    let lefts = ws.path("left_only.txt");
    std::fs::write(&lefts, text.lines().filter(|l| l.contains("\tleft\t")).map(|l| format!("{l}\n")).collect::<String>()).unwrap();
    let out = ws.path("x");
    fails_with(&["train", s(&lefts), "--out", s(&out), "--hand", "left", "--epochs", "1"], "CorpusHandMissing");
    fails_with(&["train", s(&lefts), "--out", s(&out), "--hand", "right", "--epochs", "1"], "CorpusHandMissing");
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let ws = Workspace::new();
    let corpus = ws.ingest();
    let cfg = ws.path("run.cfg");
    std::fs::write(&cfg, "# small run\nepochs = 2\nseed=9\nhidden=16\n").unwrap();
    ok(&["--config", s(&cfg), "train", s(&corpus), "--out", s(&ws.path("rh")), "--seed", "4"]);
    assert_eq!(log_perplexities(&ws.path("rh")).len(), 2);
    let echoed = std::fs::read_to_string(ws.path("rh/config.txt")).unwrap();
    assert!(echoed.contains("seed=4\n") && echoed.contains("epochs=2\n") && echoed.contains("hidden=16\n"));
    assert!(echoed.contains("lr=0.001\n"), "{echoed}");

    std::fs::write(&cfg, "epochz=2\n").unwrap();
    fails_with(&["--config", s(&cfg), "train", s(&corpus), "--out", s(&ws.path("x"))], "BadConfig");
}

struct Trained {
    ws: Workspace,
    melody: PathBuf,
    harmony: PathBuf,
    harmony_sum: PathBuf,
}

fn trained() -> Trained {
    let ws = Workspace::new();
    let corpus = ws.ingest();
    let melody = ws.train(&corpus, "rh", &["--hand", "right", "--epochs", "3"]);
    let harmony = ws.train(&corpus, "lh", &["--hand", "left", "--epochs", "3"]);
    let harmony_sum = ws.train(&corpus, "lh2", &["--hand", "left", "--ablation", "2", "--epochs", "1"]);
    Trained {
        ws,
        melody,
        harmony,
        harmony_sum,
    }
}

impl Trained {
    fn generate(&self, out: &str, extra: &[&str]) -> (PathBuf, Output) {
        let out = self.ws.path(out);
        let prompt = self.ws.path("midi/a.mid");
        let mut args = vec!["generate", "--melody", s(&self.melody), "--harmony", s(&self.harmony)];
        args.extend(["--prompt", s(&prompt), "--out", s(&out)]);
        args.extend_from_slice(extra);
        let o = ok(&args);
        (out, o)
    }
}

#[test]
fn generation_is_deterministic_and_prints_bar_chords() {
    let t = trained();
    let (a, out) = t.generate("a.mid", &["--seed", "5"]);
    let (b, _) = t.generate("b.mid", &["--seed", "5"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(t.ws.path("a.config.txt").exists());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = stdout.lines().collect();
    assert!(!rows.is_empty());
    for (i, row) in rows.iter().enumerate() {
        let (bar, chord) = row.split_once('\t').unwrap();
        assert_eq!(bar, (i + 1).to_string());
        assert!(!chord.is_empty());
    }
}

#[test]
fn no_enrich_keeps_grid_lengths_and_single_voices() {
    let t = trained();
    let (path, _) = t.generate("plain.mid", &["--no-enrich", "--num-notes", "64", "--prompt-notes", "8", "--seed", "2"]);
    let doc = parse_midi(&std::fs::read(&path).unwrap()).unwrap();
    let score = score_from_document(&doc, None).unwrap();
    assert_eq!(score.right.len(), 72);
    assert_eq!(evaluate(&score, UpcMode::PitchClasses).unwrap().qn, 100.0);
    for hand in [&score.right, &score.left] {
        assert!(hand.windows(2).all(|w| w[1].onset >= w[0].end()), "overlapping notes in one hand");
    }

    let (path, _) = t.generate("a3.mid", &["--ablation", "3", "--num-notes", "64", "--prompt-notes", "8", "--seed", "2"]);
    let cfg = std::fs::read_to_string(t.ws.path("a3.config.txt")).unwrap();
    assert!(cfg.contains("no-enrich=false\n"));
    let doc = parse_midi(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(score_from_document(&doc, None).unwrap().right.len(), 72);
}

#[test]
fn mismatched_checkpoints_and_prompts_are_rejected() {
    let t = trained();
    let out = t.ws.path("x.mid");
    let prompt = t.ws.path("midi/a.mid");
    let run = |melody: &Path, harmony: &Path, prompt: &Path, extra: &[&str], code: &str| {
        let mut args = vec!["generate", "--melody", s(melody), "--harmony", s(harmony), "--prompt", s(prompt), "--out", s(&out)];
        args.extend_from_slice(extra);
        fails_with(&args, code);
    };
    run(&t.harmony, &t.harmony, &prompt, &[], "IncompatibleCheckpoints");
    run(&t.melody, &t.harmony_sum, &prompt, &[], "IncompatibleCheckpoints");
    run(&t.melody, &t.harmony, &prompt, &["--ablation", "1"], "IncompatibleCheckpoints");

    let garbage = t.ws.path("midi/notes.txt");
    run(&t.melody, &t.harmony, &garbage, &[], "BadPrompt");
    run(&t.melody, &t.harmony, &t.ws.path("missing.mid"), &[], "Io");
    run(&t.melody, &t.harmony, &prompt, &["--prompt-bars", "0"], "BadPrompt");
    run(&garbage, &t.harmony, &prompt, &[], "BadMagic");

    let mut solo = piece(0, Mode::Major, 0);
    solo.left.clear();
    let solo_path = t.ws.path("solo.mid");
    std::fs::write(&solo_path, midi_bytes(&solo)).unwrap();
    run(&t.melody, &t.harmony, &solo_path, &[], "BadPrompt");

    assert!(!out.exists());
    let mut args = vec!["generate", "--melody", s(&t.melody), "--harmony", s(&t.harmony_sum)];
    args.extend(["--prompt", s(&prompt), "--out", s(&out), "--ablation", "2"]);
    ok(&args);
}

#[test]
fn evaluating_a_roundtripped_corpus_gives_full_qn() {
    let dir = TempDir::new().unwrap();
    for (i, (tonic, mode)) in [(2, Mode::Major), (9, Mode::Minor), (5, Mode::Major)].into_iter().enumerate() {
        let mut score = piece(tonic, mode, i as u64);
        // off-grid lengths that tokenisation snaps back onto the grid
        for n in score.right.iter_mut().step_by(3) {
            n.duration -= 25;
        }
        let doc = parse_midi(&midi_bytes(&score)).unwrap();
        let piece = tokenize_document(&doc).unwrap();
        let hand = |seq: &amuze::TokenSequence| denormalize_scale(&detokenize(&seq.tokens, PPQ).unwrap(), piece.scale);
        let round = PerformanceScore::new(PPQ, hand(&piece.right), hand(&piece.left), piece.scale, TimeSignature::COMMON);
        std::fs::write(dir.path().join(format!("{i}.mid")), midi_bytes(&round)).unwrap();
    }
    let out = ok(&["evaluate", s(dir.path())]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rows = text.lines();
    assert_eq!(rows.next(), Some("file,qn,upc,td,oos"));
    let rows: Vec<Vec<&str>> = rows.map(|r| r.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[3][0], "mean");
    for r in &rows {
        assert_eq!(r[1], "100.0000");
        assert!(r[3].parse::<f64>().is_ok());
    }

    let csv_path = dir.path().join("report/metrics.csv");
    std::fs::create_dir_all(csv_path.parent().unwrap()).unwrap();
    ok(&["evaluate", s(dir.path()), "--out", s(&csv_path), "--upc", "pitches", "--scale", "C:major"]);
    assert!(dir.path().join("report/metrics.config.txt").exists());
    fails_with(&["evaluate", s(dir.path()), "--scale", "H:dorian"], "BadConfig");
}
