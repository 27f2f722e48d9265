//! `vptenum`: evaluate visibly pushdown transducers and spanner grammars
//! over nested documents, streaming every output.
//!
//! Exit codes: 0 success, 1 usage or model error, 2 malformed document,
//! 3 resource cap, 4 unambiguity precondition, 5 `oracle --diff` found a
//! difference.

mod bench;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use vpt_enum::engine::{evaluate, Mode, PreprocessResult, Preprocessor};
use vpt_enum::enumtree::Enumerator;
use vpt_enum::format::{parse_machine, write_machine};
use vpt_enum::nested::{StructuredAlphabet, Tokenizer};
use vpt_enum::spanner::{compile, evaluate_spanner, parse_vpeg, SpannerMode};
use vpt_enum::vpt::{io_determinize, oracle_runs, Vpt, ORACLE_CAP};
use vpt_enum::OutputWord;

/// Exit status when `oracle --diff` finds a difference.
const EXIT_DIFF: u8 = 5;

#[derive(Parser)]
#[command(name = "vptenum", version, about = "Streaming enumeration for visibly pushdown transducers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a transducer over a document and stream its outputs.
    Run(RunArgs),
    /// Print the brute-force output set, or compare it with the engine.
    Oracle(OracleArgs),
    /// Evaluate a spanner grammar and stream span mappings.
    Spanner(SpannerArgs),
    /// Write the I/O-determinized transducer.
    Determinize(DeterminizeArgs),
    /// Measure preprocessing and enumeration on synthetic documents.
    Bench(bench::BenchArgs),
}

#[derive(Args, Clone, Copy, Default)]
#[group(multiple = false)]
struct ModeFlags {
    /// Trust that each output has a single accepting run.
    #[arg(long)]
    trust_unambiguous: bool,
    /// Refuse transducers that are not I/O-deterministic (default).
    #[arg(long)]
    check_deterministic: bool,
    /// Determinize the transducer before running it.
    #[arg(long)]
    determinize_first: bool,
}

impl ModeFlags {
    fn mode(self) -> Mode {
        if self.trust_unambiguous {
            Mode::TrustUnambiguous
        } else if self.determinize_first {
            Mode::DeterminizeFirst
        } else {
            Mode::CheckDeterministic
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Transducer file.
    transducer: PathBuf,
    /// Document file, or `-` for standard input.
    document: PathBuf,
    #[command(flatten)]
    mode: ModeFlags,
    /// Stop after this many outputs.
    #[arg(long)]
    limit: Option<u64>,
    /// Print a statistics summary to standard error.
    #[arg(long)]
    stats: bool,
    /// Write per-symbol counts and the delay histogram as CSV.
    #[arg(long, value_name = "PATH")]
    stats_out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    transducer: PathBuf,
    document: PathBuf,
    /// Compare with the engine; exit 5 when the sets differ.
    #[arg(long)]
    diff: bool,
    /// Maximum number of run prefixes to explore.
    #[arg(long, default_value_t = ORACLE_CAP)]
    cap: u64,
    #[command(flatten)]
    mode: ModeFlags,
}

#[derive(Args)]
struct SpannerArgs {
    /// Grammar file.
    grammar: PathBuf,
    /// Document file, or `-` for standard input.
    document: PathBuf,
    /// Skip determinization even when the compiled transducer is not
    /// I/O-deterministic.
    #[arg(long)]
    trust_unambiguous: bool,
    #[arg(long)]
    limit: Option<u64>,
}

#[derive(Args)]
struct DeterminizeArgs {
    transducer: PathBuf,
    /// Output file; standard output when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Spanner(a) => cmd_spanner(a),
        Command::Determinize(a) => cmd_determinize(a),
        Command::Bench(a) => bench::cmd_bench(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            if is_broken_pipe(&e) {
                return ExitCode::SUCCESS;
            }
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<io::Error>()
            .is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
    })
}

fn exit_code(e: &anyhow::Error) -> u8 {
    use vpt_enum::Error;
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(err) if err.is_document_error() => 2,
        Some(Error::ResourceCap(_)) => 3,
        Some(Error::Precondition(_)) => 4,
        _ => 1,
    }
}

fn read_machine(path: &Path) -> Result<Vpt> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    parse_machine(&text).with_context(|| format!("in {}", path.display()))
}

fn open_document(path: &Path) -> Result<Box<dyn BufRead>> {
    if path == Path::new("-") {
        Ok(Box::new(BufReader::new(io::stdin())))
    } else {
        let f = File::open(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Box::new(BufReader::new(f)))
    }
}

/// Tokenizes the whole document for the oracle, which needs the full word.
fn read_document(path: &Path, alphabet: &StructuredAlphabet) -> Result<Vec<vpt_enum::nested::Token>> {
    Ok(Tokenizer::new(alphabet, open_document(path)?).collect::<vpt_enum::Result<_>>()?)
}

/// Delay of each emission in unit steps per emitted symbol, bucketed by
/// the next power of two.
#[derive(Default)]
struct DelayHistogram {
    buckets: Vec<u64>,
}

impl DelayHistogram {
    fn record(&mut self, steps: u64, len: usize) {
        let per = steps.div_ceil(len.max(1) as u64).max(1);
        let b = (64 - (per - 1).leading_zeros()) as usize;
        if self.buckets.len() <= b {
            self.buckets.resize(b + 1, 0);
        }
        self.buckets[b] += 1;
    }
}

/// Writes outputs between two `#` lines, recording delays.
fn stream_outputs(
    out: &mut impl Write,
    e: &mut Enumerator<'_>,
    limit: Option<u64>,
    render: impl Fn(&OutputWord) -> Result<String>,
    hist: &mut DelayHistogram,
) -> Result<u64> {
    writeln!(out, "#")?;
    let mut n = 0;
    let mut last = e.steps();
    while limit.is_none_or(|l| n < l) {
        let Some(w) = e.next() else { break };
        hist.record(e.steps() - last, w.len());
        last = e.steps();
        writeln!(out, "{}", render(&w)?)?;
        n += 1;
    }
    writeln!(out, "#")?;
    out.flush()?;
    Ok(n)
}

fn write_stats_csv(path: &Path, r: &PreprocessResult, hist: &DelayHistogram) -> Result<()> {
    let mut f = BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    writeln!(f, "kind,key,visits,ecs_ops,nodes,outputs")?;
    if let Some(per) = &r.stats.per_symbol {
        for (i, s) in per.iter().enumerate() {
            writeln!(f, "symbol,{},{},{},{},", i + 1, s.visits, s.ecs_ops, s.nodes)?;
        }
    }
    for (b, &count) in hist.buckets.iter().enumerate() {
        if count > 0 {
            writeln!(f, "delay,{},,,,{count}", 1u64 << b)?;
        }
    }
    f.flush()?;
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<ExitCode> {
    let t = read_machine(&a.transducer)?;
    let machine = a.mode.mode().prepare(&t)?;
    let mut pre = Preprocessor::new(&machine);
    if a.stats_out.is_some() {
        pre = pre.with_symbol_trace();
    }
    for tok in Tokenizer::new(t.alphabet(), open_document(&a.document)?) {
        pre.feed(tok?)?;
    }
    let r = pre.finish()?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let mut hist = DelayHistogram::default();
    let mut e = r.outputs();
    let n = stream_outputs(&mut out, &mut e, a.limit, |w| Ok(t.render_output(w)), &mut hist)?;
    if a.stats {
        let s = &r.stats;
        eprintln!(
            "symbols {} | visits {} (max {}/symbol) | ecs ops {} (max {}/symbol) | nodes {} | outputs {n} | enumeration steps {}",
            s.symbols,
            s.total.visits,
            s.max.visits,
            s.total.ecs_ops,
            s.max.ecs_ops,
            r.ecs.len(),
            e.steps()
        );
    }
    if let Some(path) = &a.stats_out {
        write_stats_csv(path, &r, &hist)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(a: OracleArgs) -> Result<ExitCode> {
    let t = read_machine(&a.transducer)?;
    let tokens = read_document(&a.document, t.alphabet())?;
    let expected: BTreeSet<OutputWord> = oracle_runs(&t, &tokens, a.cap)?.into_keys().collect();
    if !a.diff {
        let stdout = io::stdout();
        let mut out = BufWriter::new(stdout.lock());
        for w in &expected {
            writeln!(out, "{}", t.render_output(w))?;
        }
        out.flush()?;
        return Ok(ExitCode::SUCCESS);
    }
    let r = evaluate(&t, tokens.iter().copied().map(Ok), a.mode.mode())?;
    let got: Vec<OutputWord> = r.outputs().collect();
    let got_set: BTreeSet<OutputWord> = got.iter().cloned().collect();
    let mut differ = false;
    if got_set.len() != got.len() {
        eprintln!("engine produced {} duplicate outputs", got.len() - got_set.len());
        differ = true;
    }
    for w in expected.difference(&got_set) {
        eprintln!("missing: {}", t.render_output(w));
        differ = true;
    }
    for w in got_set.difference(&expected) {
        eprintln!("extra: {}", t.render_output(w));
        differ = true;
    }
    if differ {
        Ok(ExitCode::from(EXIT_DIFF))
    } else {
        eprintln!("engine and oracle agree on {} outputs", expected.len());
        Ok(ExitCode::SUCCESS)
    }
}

fn cmd_spanner(a: SpannerArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&a.grammar)
        .with_context(|| format!("reading {}", a.grammar.display()))?;
    let g = parse_vpeg(&text).with_context(|| format!("in {}", a.grammar.display()))?;
    let mode = if a.trust_unambiguous {
        SpannerMode::TrustUnambiguous
    } else {
        SpannerMode::Auto
    };
    let c = compile(&g, mode)?;
    let doc = open_document(&a.document)?;
    let run = evaluate_spanner(&c, Tokenizer::new(&c.doc_alphabet, doc))?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let mut e = run.result.outputs();
    let render = |w: &OutputWord| {
        let m = vpt_enum::spanner::decode_mapping(w, &c.capture_sets, &c.vars, run.doc_len)?;
        Ok(m.to_string())
    };
    stream_outputs(&mut out, &mut e, a.limit, render, &mut DelayHistogram::default())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_determinize(a: DeterminizeArgs) -> Result<ExitCode> {
    let t = read_machine(&a.transducer)?;
    let text = write_machine(&io_determinize(&t));
    match &a.output {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(ExitCode::SUCCESS)
}
