//! Synthetic workload for the `bench` subcommand.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use clap::Args;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vpt_enum::engine::preprocess;
use vpt_enum::enumtree::Enumerator;
use vpt_enum::format::parse_machine;
use vpt_enum::nested::{Kind, Token};
use vpt_enum::vpt::Vpt;

/// Built-in workload: three states, every `b` may emit `m` or stay
/// silent, so outputs grow exponentially with the number of `b`s.
pub const DEFAULT_MACHINE: &str = "\
states: q0 q1 q2
initial: q0
final: q0 q1 q2
stack: X
outputs: m
open a q0 -> q0 push X
open a q1 -> q0 push X
open a q2 -> q0 push X
close a q0 pop X -> q2
close a q1 pop X -> q2
close a q2 pop X -> q2
neutral b q0 -> q1 out m
neutral b q1 -> q1 out m
neutral b q2 -> q1 out m
neutral b q0 -> q0
neutral b q1 -> q0
neutral b q2 -> q0
neutral c q0 -> q0
neutral c q1 -> q1
neutral c q2 -> q2
";

#[derive(Args)]
pub struct BenchArgs {
    /// Document lengths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1_000usize, 10_000, 100_000])]
    lengths: Vec<usize>,
    /// Outputs enumerated per document.
    #[arg(long, default_value_t = 10_000)]
    limit: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Transducer to run instead of the built-in workload.
    #[arg(long)]
    transducer: Option<PathBuf>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A random well-nested document of exactly `n` letters (when the
/// alphabet has neutral letters), with about 2% of letters drawn from the
/// first neutral letter.
fn document<R: Rng>(rng: &mut R, t: &Vpt, n: usize) -> Result<Vec<Token>> {
    let al = t.alphabet();
    let opens: Vec<_> = al.symbols(Kind::Open).collect();
    let closes: Vec<_> = al.symbols(Kind::Close).collect();
    let neutrals: Vec<_> = al.symbols(Kind::Neutral).collect();
    ensure!(
        !neutrals.is_empty() || !opens.is_empty(),
        "the transducer has no letters"
    );
    let mut w = Vec::with_capacity(n);
    let mut depth = 0usize;
    while w.len() < n {
        let left = n - w.len();
        let r: f64 = rng.gen();
        let can_open = !opens.is_empty() && depth + 2 <= left;
        let neutral = |rng: &mut R, rare: bool| {
            if rare || neutrals.len() == 1 {
                neutrals[0]
            } else {
                neutrals[rng.gen_range(1..neutrals.len())]
            }
        };
        if depth > 0 && depth >= left {
            w.push(Token::close(closes[rng.gen_range(0..closes.len())]));
            depth -= 1;
        } else if r < 0.1 && !neutrals.is_empty() {
            let s = neutral(rng, r < 0.02);
            w.push(Token::neutral(s));
        } else if r < 0.55 && can_open {
            w.push(Token::open(opens[rng.gen_range(0..opens.len())]));
            depth += 1;
        } else if depth > 0 {
            w.push(Token::close(closes[rng.gen_range(0..closes.len())]));
            depth -= 1;
        } else if !neutrals.is_empty() {
            let s = neutral(rng, false);
            w.push(Token::neutral(s));
        } else if can_open {
            w.push(Token::open(opens[rng.gen_range(0..opens.len())]));
            depth += 1;
        } else {
            break;
        }
    }
    Ok(w)
}

pub fn cmd_bench(a: BenchArgs) -> Result<ExitCode> {
    let t = match &a.transducer {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))?;
            parse_machine(&text).with_context(|| format!("in {}", p.display()))?
        }
        None => parse_machine(DEFAULT_MACHINE)?,
    };
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    writeln!(
        out,
        "length,symbols,visits_per_symbol,ecs_ops_per_symbol,max_visits,max_ecs_ops,nodes,\
         preprocess_ms,outputs,max_delay_per_symbol,enumerate_ms"
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    for &n in &a.lengths {
        let w = document(&mut rng, &t, n)?;
        let start = Instant::now();
        let r = preprocess(&t, w.iter().copied().map(Ok))?;
        let pre_ms = start.elapsed().as_secs_f64() * 1e3;
        let s = &r.stats;
        let start = Instant::now();
        let mut e = Enumerator::new(&r.ecs, r.v_out);
        let mut outputs = 0u64;
        let mut last = e.steps();
        let mut max_delay = 0f64;
        while outputs < a.limit {
            let Some(word) = e.next() else { break };
            let d = (e.steps() - last) as f64 / word.len().max(1) as f64;
            max_delay = max_delay.max(d);
            last = e.steps();
            outputs += 1;
        }
        let enum_ms = start.elapsed().as_secs_f64() * 1e3;
        let per = |x: u64| x as f64 / s.symbols.max(1) as f64;
        writeln!(
            out,
            "{},{},{:.3},{:.3},{},{},{},{:.3},{},{:.3},{:.3}",
            w.len(),
            s.symbols,
            per(s.total.visits),
            per(s.total.ecs_ops),
            s.max.visits,
            s.max.ecs_ops,
            r.ecs.len(),
            pre_ms,
            outputs,
            max_delay,
            enum_ms
        )?;
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}
