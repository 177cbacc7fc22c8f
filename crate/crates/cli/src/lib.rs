//! The `hbpe` command line.
//!
//! [`run`] parses arguments, executes one subcommand and maps failures to
//! exit codes: 0 success, 2 usage error, 3 data error, 4 I/O error. Every run
//! prints a `repro:` line on stderr naming the tool version, the bound `S`
//! when one applies, and a digest of every file it read.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use hbpe::corpus_io::{emit_batches, stream_corpus, CorpusStats};
use hbpe::fsutil::write_atomic;
use hbpe::hier_bpe::{load_stage2, save_stage2};
use hbpe::metrics::{bpb, hierarchical_flops, StatsReport};
use hbpe::patching::{bpe_patch_stats, entropy_patch, fixed_patch, space_patch, stats};
use hbpe::{
    decode_patch, encode_patches, load_external, train_bpe, train_hier_bpe_with, EntropyScorer,
    FirstStageVocab, FlopsConfig, HierBpeConfig, HierError, MergeTable, NllRecord, NllUnit,
    PatchStats, PatchTable, Pretokenize, SymbolId,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "hbpe", version, about = "Hierarchical BPE tokenizer toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a first-stage byte-level BPE vocabulary.
    TrainBpe(TrainBpeArgs),
    /// Train the second stage for a bound S on top of a first-stage vocabulary.
    TrainHbpe(TrainHbpeArgs),
    /// Train the n-gram scorer used by the entropy strategy.
    TrainEntropy(TrainEntropyArgs),
    /// Encode text into patches, one line of symbol ids per patch.
    Encode(EncodeArgs),
    /// Decode patch lines back into bytes.
    Decode(DecodeArgs),
    /// Patch statistics of a corpus under one segmentation strategy.
    Stats(StatsArgs),
    /// FLOP estimate of a hierarchical model from a JSON configuration.
    Flops(FlopsArgs),
    /// Write padded patch rows in the binary batch format.
    EmitBatches(EmitArgs),
    /// Train the second stage for each S in a range and tabulate patch lengths.
    SweepS(SweepArgs),
}

#[derive(Args, Debug)]
struct FirstStageFiles {
    /// First-stage vocabulary (vocab.json).
    #[arg(long)]
    vocab: PathBuf,
    /// First-stage merges (merges.txt).
    #[arg(long)]
    merges: PathBuf,
}

#[derive(Args, Debug)]
struct TrainBpeArgs {
    /// Training corpus files, read as raw bytes in order.
    #[arg(long, required = true, num_args = 1..)]
    corpus: Vec<PathBuf>,
    /// Target vocabulary size (one id is left free for an end-of-text token).
    #[arg(long)]
    vocab_size: usize,
    #[arg(long, value_enum, default_value_t = PretokenizeArg::Whitespace)]
    pretokenize: PretokenizeArg,
    #[arg(long)]
    out_vocab: PathBuf,
    #[arg(long)]
    out_merges: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PretokenizeArg {
    None,
    Whitespace,
}

impl From<PretokenizeArg> for Pretokenize {
    fn from(p: PretokenizeArg) -> Self {
        match p {
            PretokenizeArg::None => Pretokenize::None,
            PretokenizeArg::Whitespace => Pretokenize::Whitespace,
        }
    }
}

#[derive(Args, Debug)]
struct TrainHbpeArgs {
    #[command(flatten)]
    first: FirstStageFiles,
    /// Maximum patch length S, end-of-patch marker included.
    #[arg(long = "max-patch-len", short = 'S')]
    max_patch_len: usize,
    /// Weight each token's pairs by its frequency in these files.
    #[arg(long, num_args = 1..)]
    weights_corpus: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainEntropyArgs {
    #[arg(long, required = true, num_args = 1..)]
    corpus: Vec<PathBuf>,
    /// Context length in bytes (0 to 4).
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Additive smoothing over the 256 byte values.
    #[arg(long, default_value_t = 1.0)]
    smoothing: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[command(flatten)]
    first: FirstStageFiles,
    /// Second-stage artifact written by train-hbpe.
    #[arg(long)]
    stage2: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[arg(long)]
    stage2: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Strategy {
    Bpe,
    Space,
    Entropy,
    Fixed,
}

impl Strategy {
    fn name(self) -> &'static str {
        match self {
            Strategy::Bpe => "bpe",
            Strategy::Space => "space",
            Strategy::Entropy => "entropy",
            Strategy::Fixed => "fixed",
        }
    }
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long, value_enum)]
    strategy: Strategy,
    #[arg(long, required = true, num_args = 1..)]
    corpus: Vec<PathBuf>,
    /// Patch length cap for space and entropy.
    #[arg(long)]
    max_size: Option<usize>,
    /// Patch length for fixed.
    #[arg(long)]
    size: Option<usize>,
    /// Scorer file for entropy.
    #[arg(long)]
    scorer: Option<PathBuf>,
    /// Entropy threshold in bits for entropy.
    #[arg(long)]
    threshold: Option<f64>,
    /// First-stage vocabulary for bpe.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// First-stage merges for bpe.
    #[arg(long)]
    merges: Option<PathBuf>,
    /// Second-stage artifact for bpe.
    #[arg(long)]
    stage2: Option<PathBuf>,
    /// Total negative log-likelihood of the corpus, to report bits per byte.
    #[arg(long)]
    nll: Option<f64>,
    #[arg(long, value_enum, default_value_t = UnitArg::Nats)]
    nll_unit: UnitArg,
    /// FLOP configuration; its average patch length is replaced by the measured one.
    #[arg(long)]
    flops_config: Option<PathBuf>,
    /// Print JSON instead of key=value lines.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum UnitArg {
    Bits,
    Nats,
}

impl From<UnitArg> for NllUnit {
    fn from(u: UnitArg) -> Self {
        match u {
            UnitArg::Bits => NllUnit::Bits,
            UnitArg::Nats => NllUnit::Nats,
        }
    }
}

#[derive(Args, Debug)]
struct FlopsArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct EmitArgs {
    #[command(flatten)]
    first: FirstStageFiles,
    #[arg(long)]
    stage2: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    first: FirstStageFiles,
    #[arg(long, required = true, num_args = 1..)]
    corpus: Vec<PathBuf>,
    #[arg(long)]
    from: usize,
    #[arg(long)]
    to: usize,
    /// Also save each second-stage artifact as stage2.S<n>.txt in this directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Write the table here instead of standard output.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(hbpe::Error),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    Input {
        path: PathBuf,
        reason: String,
    },
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(e) if e.is_io() => EXIT_IO,
            CliError::Io { .. } => EXIT_IO,
            CliError::Lib(_) | CliError::Input { .. } => EXIT_DATA,
        }
    }

    fn render(&self) -> String {
        match self {
            CliError::Usage(m) => format!("error[cli/CLI-001]: {m}"),
            CliError::Lib(e) => format!("error[{}/{}]: {e}", e.module(), e.code()),
            CliError::Io { path, source } => {
                format!("error[cli/CLI-002]: {}: {source}", path.display())
            }
            CliError::Input { path, reason } => {
                format!("error[cli/CLI-003]: {}: {reason}", path.display())
            }
        }
    }
}

impl<E: Into<hbpe::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Lib(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Runs one command line (program name first) against the process's
/// standard streams and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr())
}

/// Like [`run`], writing reports to `out` and diagnostics to `err`.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = err.write_all(rendered.as_bytes());
                EXIT_USAGE
            } else {
                let _ = out.write_all(rendered.as_bytes());
                EXIT_OK
            };
        }
    };
    let mut repro = Repro::default();
    let result = execute(cli.command, &mut repro, out);
    let _ = writeln!(err, "{}", repro.line());
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "{}", e.render());
            e.exit_code()
        }
    }
}

/// Collects what the reproducibility line reports.
#[derive(Default)]
struct Repro {
    command: &'static str,
    max_patch_len: Option<String>,
    inputs: Vec<(PathBuf, String)>,
}

impl Repro {
    fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.record(path, &bytes);
        Ok(bytes)
    }

    fn record(&mut self, path: &Path, bytes: &[u8]) {
        let digest = Sha256::digest(bytes);
        let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        self.inputs.push((path.to_path_buf(), hex));
    }

    /// Digests files already read by a library loader.
    fn note(&mut self, path: &Path) {
        if let Ok(bytes) = std::fs::read(path) {
            self.record(path, &bytes);
        }
    }

    fn line(&self) -> String {
        let mut out = format!(
            "repro: hbpe {} command={} S={} seed=none",
            env!("CARGO_PKG_VERSION"),
            if self.command.is_empty() {
                "none"
            } else {
                self.command
            },
            self.max_patch_len.as_deref().unwrap_or("na"),
        );
        for (path, hex) in &self.inputs {
            out.push_str(&format!(" {}=sha256:{hex}", path.display()));
        }
        out
    }
}

fn execute(command: Command, repro: &mut Repro, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::TrainBpe(a) => {
            repro.command = "train-bpe";
            train_bpe_cmd(a, repro, out)
        }
        Command::TrainHbpe(a) => {
            repro.command = "train-hbpe";
            repro.max_patch_len = Some(a.max_patch_len.to_string());
            train_hbpe_cmd(a, repro, out)
        }
        Command::TrainEntropy(a) => {
            repro.command = "train-entropy";
            train_entropy_cmd(a, repro)
        }
        Command::Encode(a) => {
            repro.command = "encode";
            encode_cmd(a, repro, out)
        }
        Command::Decode(a) => {
            repro.command = "decode";
            decode_cmd(a, repro, out)
        }
        Command::Stats(a) => {
            repro.command = "stats";
            stats_cmd(a, repro, out)
        }
        Command::Flops(a) => {
            repro.command = "flops";
            flops_cmd(a, repro, out)
        }
        Command::EmitBatches(a) => {
            repro.command = "emit-batches";
            emit_cmd(a, repro, out)
        }
        Command::SweepS(a) => {
            repro.command = "sweep-s";
            repro.max_patch_len = Some(format!("{}..{}", a.from, a.to));
            sweep_cmd(a, repro, out)
        }
    }
}

fn read_corpus(paths: &[PathBuf], repro: &mut Repro) -> Result<(Vec<u8>, CorpusStats)> {
    let (bytes, stats) = stream_corpus(paths)?;
    for p in paths {
        repro.note(p);
    }
    Ok((bytes, stats))
}

fn load_first(files: &FirstStageFiles, repro: &mut Repro) -> Result<FirstStageVocab> {
    let vocab = load_external(&files.vocab, &files.merges)?;
    repro.note(&files.vocab);
    repro.note(&files.merges);
    Ok(vocab)
}

fn load_second(path: &Path, repro: &mut Repro) -> Result<(MergeTable, PatchTable)> {
    let loaded = load_stage2(path)?;
    repro.note(path);
    repro.max_patch_len = Some(loaded.1.max_patch_len().to_string());
    Ok(loaded)
}

fn stdout_error(source: std::io::Error) -> CliError {
    CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    }
}

/// Writes `bytes` atomically to `path`, or to `out` when no path is given.
fn write_output(path: Option<&Path>, bytes: &[u8], out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, bytes).map_err(|source| CliError::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => out
            .write_all(bytes)
            .and_then(|_| out.flush())
            .map_err(stdout_error),
    }
}

fn train_bpe_cmd(a: TrainBpeArgs, repro: &mut Repro, out: &mut dyn Write) -> Result<()> {
    let (corpus, _) = read_corpus(&a.corpus, repro)?;
    let vocab = train_bpe(&corpus, a.vocab_size, a.pretokenize.into())?;
    vocab.save(&a.out_vocab, &a.out_merges)?;
    let report = format!("tokens={}\nmerges={}\n", vocab.len(), vocab.merges().len());
    write_output(None, report.as_bytes(), out)
}

fn train_hbpe_cmd(a: TrainHbpeArgs, repro: &mut Repro, out: &mut dyn Write) -> Result<()> {
    let vocab = load_first(&a.first, repro)?;
    let token_weights = if a.weights_corpus.is_empty() {
        None
    } else {
        let (text, _) = read_corpus(&a.weights_corpus, repro)?;
        let mut freq = vec![0u64; vocab.len()];
        for id in vocab.encode(&text) {
            freq[id.index()] += 1;
        }
        Some(freq)
    };
    let config = HierBpeConfig {
        max_patch_len: a.max_patch_len,
        token_weights,
    };
    let (merges, table) = train_hier_bpe_with(&vocab, &config)?;
    save_stage2(&a.out, &merges, &table)?;
    let report = format!(
        "S={}\nmerges={}\nv_prime={}\npad_id={}\n",
        table.max_patch_len(),
        merges.len(),
        table.v_prime(),
        table.pad_id()
    );
    write_output(None, report.as_bytes(), out)
}

fn train_entropy_cmd(a: TrainEntropyArgs, repro: &mut Repro) -> Result<()> {
    let (corpus, _) = read_corpus(&a.corpus, repro)?;
    let scorer = EntropyScorer::train(&corpus, a.order, a.smoothing)?;
    scorer.save(&a.out)?;
    Ok(())
}

fn encode_cmd(a: EncodeArgs, repro: &mut Repro, out: &mut dyn Write) -> Result<()> {
    let vocab = load_first(&a.first, repro)?;
    let (_, table) = load_second(&a.stage2, repro)?;
    let text = repro.read(&a.input)?;
    let mut lines = String::new();
    for patch in encode_patches(&text, &vocab, &table)? {
        let ids: Vec<String> = patch.symbols().iter().map(|s| s.0.to_string()).collect();
        lines.push_str(&ids.join(" "));
        lines.push('\n');
    }
    write_output(a.output.as_deref(), lines.as_bytes(), out)
}

fn decode_cmd(a: DecodeArgs, repro: &mut Repro, out: &mut dyn Write) -> Result<()> {
    let (merges, _) = load_second(&a.stage2, repro)?;
    let raw = repro.read(&a.input)?;
    let text = String::from_utf8(raw).map_err(|_| CliError::Input {
        path: a.input.clone(),
        reason: "patch file is not UTF-8 text".into(),
    })?;
    let mut bytes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| HierError::Malformed {
            path: a.input.clone(),
            line: i + 1,
            reason,
        };
        let symbols = line
            .split_whitespace()
            .map(|t| t.parse::<u32>().map(SymbolId))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| malformed(e.to_string()))?;
        bytes.extend(decode_patch(&symbols, &merges).map_err(|e| malformed(e.to_string()))?);
    }
    write_output(a.output.as_deref(), &bytes, out)
}

#[derive(Serialize)]
struct FullReport {
    #[serde(flatten)]
    summary: StatsReport,
    patch_count: u64,
    byte_count: u64,
    word_count: u64,
    max_len: Option<usize>,
    /// Second-stage symbols per patch, marker included (bpe only).
    avg_symbols_per_patch: Option<f64>,
}

impl FullReport {
    fn to_key_value(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "na".to_string());
        let mut out = self.summary.to_key_value();
        out.push_str(&format!("patch_count={}\n", self.patch_count));
        out.push_str(&format!("byte_count={}\n", self.byte_count));
        out.push_str(&format!("word_count={}\n", self.word_count));
        out.push_str(&format!(
            "max_len={}\n",
            opt(self.max_len.map(|m| m.to_string()))
        ));
        out.push_str(&format!(
            "avg_symbols_per_patch={}\n",
            opt(self.avg_symbols_per_patch.map(|m| m.to_string()))
        ));
        out
    }
}

fn check_strategy_flags(a: &StatsArgs) -> Result<()> {
    let needed: &[(&str, bool)] = match a.strategy {
        Strategy::Space => &[("--max-size", a.max_size.is_some())],
        Strategy::Fixed => &[("--size", a.size.is_some())],
        Strategy::Entropy => &[
            ("--scorer", a.scorer.is_some()),
            ("--threshold", a.threshold.is_some()),
        ],
        Strategy::Bpe => &[
            ("--vocab", a.vocab.is_some()),
            ("--merges", a.merges.is_some()),
            ("--stage2", a.stage2.is_some()),
        ],
    };
    match needed.iter().find(|(_, present)| !present) {
        Some((flag, _)) => Err(CliError::Usage(format!(
            "--strategy {} requires {flag}",
            a.strategy.name()
        ))),
        None => Ok(()),
    }
}

fn stats_cmd(a: StatsArgs, repro: &mut Repro, out: &mut dyn Write) -> Result<()> {
    check_strategy_flags(&a)?;
    let (text, corpus_stats) = read_corpus(&a.corpus, repro)?;
    let words = corpus_stats.word_count;
    let (patch_stats, s, symbols): (PatchStats, Option<usize>, Option<PatchStats>) =
        match a.strategy {
            Strategy::Space => {
                let max = a.max_size.expect("checked by check_strategy_flags");
                (stats(&space_patch(&text, max)?, words), Some(max), None)
            }
            Strategy::Fixed => {
                let k = a.size.expect("checked by check_strategy_flags");
                (stats(&fixed_patch(&text, k)?, words), Some(k), None)
            }
            Strategy::Entropy => {
                let path = a.scorer.as_ref().expect("checked by check_strategy_flags");
                let threshold = a.threshold.expect("checked by check_strategy_flags");
                let scorer = EntropyScorer::load(path)?;
                repro.note(path);
                let b = entropy_patch(&text, &scorer, threshold, a.max_size)?;
                (stats(&b, words), a.max_size, None)
            }
            Strategy::Bpe => {
                let files = FirstStageFiles {
                    vocab: a.vocab.clone().expect("checked by check_strategy_flags"),
                    merges: a.merges.clone().expect("checked by check_strategy_flags"),
                };
                let stage2 = a.stage2.as_ref().expect("checked by check_strategy_flags");
                let vocab = load_first(&files, repro)?;
                let (_, table) = load_second(stage2, repro)?;
                let s = bpe_patch_stats(&text, &vocab, &table)?;
                (s.content, Some(table.max_patch_len()), Some(s.symbols))
            }
        };
    if let Some(s) = s {
        repro.max_patch_len.get_or_insert(s.to_string());
    }

    let avg = patch_stats.avg_patch_len::<f64>();
    let bpb_value = match a.nll {
        Some(nll) => {
            let r = NllRecord::new(
                nll,
                a.nll_unit.into(),
                patch_stats.byte_count,
                patch_stats.patch_count,
                words,
            )?;
            Some(bpb(&r)?)
        }
        None => None,
    };
    let flops = match &a.flops_config {
        Some(path) => {
            let mut config = read_flops_config(path, repro)?;
            if let Some(p) = avg {
                config.avg_patch_len = p;
            }
            Some(hierarchical_flops(&config)?.total())
        }
        None => None,
    };
    let report = FullReport {
        summary: StatsReport {
            strategy: a.strategy.name().to_string(),
            max_patch_len: s,
            avg_patch_len: avg,
            fertility: patch_stats.fertility::<f64>(),
            bpb: bpb_value,
            flops,
        },
        patch_count: patch_stats.patch_count,
        byte_count: patch_stats.byte_count,
        word_count: words,
        max_len: patch_stats.max_len(),
        avg_symbols_per_patch: symbols.and_then(|s| s.avg_patch_len::<f64>()),
    };
    let text = if a.json {
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
    } else {
        report.to_key_value()
    };
    write_output(None, text.as_bytes(), out)
}

fn read_flops_config(path: &Path, repro: &mut Repro) -> Result<FlopsConfig> {
    let raw = repro.read(path)?;
    serde_json::from_slice(&raw).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn flops_cmd(a: FlopsArgs, repro: &mut Repro, out: &mut dyn Write) -> Result<()> {
    let config = read_flops_config(&a.config, repro)?;
    let f = hierarchical_flops(&config)?;
    let text = if a.json {
        #[derive(Serialize)]
        struct Out {
            latent_len: f64,
            encoder: f64,
            decoder: f64,
            latent: f64,
            total: f64,
        }
        let o = Out {
            latent_len: f.latent_len,
            encoder: f.encoder,
            decoder: f.decoder,
            latent: f.latent,
            total: f.total(),
        };
        serde_json::to_string_pretty(&o).expect("report serializes") + "\n"
    } else {
        format!(
            "latent_len={}\nencoder={}\ndecoder={}\nlatent={}\ntotal={}\n",
            f.latent_len,
            f.encoder,
            f.decoder,
            f.latent,
            f.total()
        )
    };
    write_output(None, text.as_bytes(), out)
}

fn emit_cmd(a: EmitArgs, repro: &mut Repro, out: &mut dyn Write) -> Result<()> {
    let vocab = load_first(&a.first, repro)?;
    let (_, table) = load_second(&a.stage2, repro)?;
    let (text, _) = read_corpus(&a.input, repro)?;
    let summary = emit_batches(&text, &vocab, &table, &a.output)?;
    let report = format!(
        "rows={}\ncontent_bytes={}\navg_content_len={}\n",
        summary.rows,
        summary.content_bytes,
        summary
            .avg_content_len
            .map_or("na".to_string(), |v| v.to_string())
    );
    write_output(None, report.as_bytes(), out)
}

fn sweep_cmd(a: SweepArgs, repro: &mut Repro, out: &mut dyn Write) -> Result<()> {
    if a.from > a.to {
        return Err(CliError::Usage(format!(
            "--from {} is greater than --to {}",
            a.from, a.to
        )));
    }
    let vocab = load_first(&a.first, repro)?;
    let (text, _) = read_corpus(&a.corpus, repro)?;
    let mut table_out = String::from(
        "S\tv_prime\tmerges\tpatches\tavg_symbols_per_patch\tmax_symbols\tavg_content_len\n",
    );
    for s in a.from..=a.to {
        let (merges, table) = train_hier_bpe_with(&vocab, &HierBpeConfig::new(s))?;
        if let Some(dir) = &a.out_dir {
            save_stage2(&dir.join(format!("stage2.S{s}.txt")), &merges, &table)?;
        }
        let st = bpe_patch_stats(&text, &vocab, &table)?;
        let fmt = |v: Option<f64>| v.map_or("na".to_string(), |x| format!("{x:.6}"));
        table_out.push_str(&format!(
            "{s}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            table.v_prime(),
            merges.len(),
            st.symbols.patch_count,
            fmt(st.symbols.avg_patch_len()),
            st.symbols
                .max_len()
                .map_or("na".to_string(), |m| m.to_string()),
            fmt(st.content.avg_patch_len()),
        ));
    }
    write_output(a.output.as_deref(), table_out.as_bytes(), out)
}
