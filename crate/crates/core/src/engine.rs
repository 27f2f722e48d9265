//! One-pass preprocessing of a document into an ECS.
//!
//! The [`Preprocessor`] keeps one table `S` for the current nesting level,
//! mapping state pairs `(p, q)` to a node whose language is the set of
//! outputs of runs over the current level from `p` to `q`, and a stack of
//! tables for the levels below, keyed by `(p, x, q)` where `x` is the
//! symbol pushed by the open that started the level above. Each token is
//! processed once by [`Preprocessor::feed`]; at the end of the document the
//! union of the accepting entries of `S` is the full output set.

use std::borrow::Cow;

use indexmap::IndexMap;

use crate::ecs::{Ecs, NodeId};
use crate::enumtree::Enumerator;
use crate::nested::{Kind, Token};
use crate::vpt::{io_determinize, is_io_deterministic, Vpt};
use crate::{Error, OutSym, Pos, Result, StackSym, State};

/// Table for the current level, keyed by state pairs.
pub type LevelTable = IndexMap<(State, State), NodeId>;
/// Table for a suspended level, keyed by `(state, stack symbol, state)`.
pub type StackTable = IndexMap<(State, StackSym, State), NodeId>;

/// `L(v)·{(ω, k)}` when `out` is `Some(ω)`, and `v` itself otherwise.
pub fn if_prod(ecs: &mut Ecs, v: NodeId, out: Option<OutSym>, k: Pos) -> NodeId {
    match out {
        None => v,
        Some(o) => {
            let leaf = ecs.add(o, k);
            ecs.prod(v, leaf)
        }
    }
}

/// Work done while processing one token.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SymbolStats {
    /// Matching (table entry, transition) combinations visited.
    pub visits: u64,
    /// Calls to the public ECS operations.
    pub ecs_ops: u64,
    /// Nodes added to the arena.
    pub nodes: u64,
}

/// Aggregated preprocessing statistics.
#[derive(Clone, Debug, Default)]
pub struct Stats {
    pub symbols: u64,
    pub total: SymbolStats,
    pub max: SymbolStats,
    /// Per-token record, kept only when requested.
    pub per_symbol: Option<Vec<SymbolStats>>,
}

impl Stats {
    fn record(&mut self, s: SymbolStats) {
        self.symbols += 1;
        self.total.visits += s.visits;
        self.total.ecs_ops += s.ecs_ops;
        self.total.nodes += s.nodes;
        self.max.visits = self.max.visits.max(s.visits);
        self.max.ecs_ops = self.max.ecs_ops.max(s.ecs_ops);
        self.max.nodes = self.max.nodes.max(s.nodes);
        if let Some(v) = self.per_symbol.as_mut() {
            v.push(s);
        }
    }
}

/// Incremental preprocessing state.
pub struct Preprocessor<'t> {
    vpt: &'t Vpt,
    ecs: Ecs,
    v_eps: NodeId,
    level: LevelTable,
    stack: Vec<StackTable>,
    open_positions: Vec<usize>,
    k: usize,
    stats: Stats,
}

/// Outcome of [`preprocess`].
#[derive(Clone, Debug)]
pub struct PreprocessResult {
    pub ecs: Ecs,
    /// Root of the output set, or [`NodeId::EMPTY`] when there are none.
    pub v_out: NodeId,
    pub stats: Stats,
    /// Number of letters read.
    pub length: usize,
}

impl PreprocessResult {
    /// Streams every output.
    pub fn outputs(&self) -> Enumerator<'_> {
        Enumerator::new(&self.ecs, self.v_out)
    }
}

impl<'t> Preprocessor<'t> {
    pub fn new(vpt: &'t Vpt) -> Self {
        let mut ecs = Ecs::new();
        let v_eps = ecs.epsilon();
        let level = vpt.initial().iter().map(|&q| ((q, q), v_eps)).collect();
        Preprocessor {
            vpt,
            ecs,
            v_eps,
            level,
            stack: Vec::new(),
            open_positions: Vec::new(),
            k: 0,
            stats: Stats::default(),
        }
    }

    /// Keeps a per-token statistics record.
    pub fn with_symbol_trace(mut self) -> Self {
        self.stats.per_symbol = Some(Vec::new());
        self
    }

    pub fn ecs(&self) -> &Ecs {
        &self.ecs
    }

    /// Letters read so far.
    pub fn position(&self) -> usize {
        self.k
    }

    /// Current nesting depth.
    pub fn depth(&self) -> usize {
        self.stack.len()
    }

    /// `S` after the letters read so far.
    pub fn level_table(&self) -> &LevelTable {
        &self.level
    }

    /// Topmost suspended table, if any.
    pub fn top_table(&self) -> Option<&StackTable> {
        self.stack.last()
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    /// Processes the next letter.
    pub fn feed(&mut self, tok: Token) -> Result<()> {
        self.k += 1;
        let ops0 = self.ecs.ops().total();
        let nodes0 = self.ecs.len();
        let visits = match tok.kind {
            Kind::Open => self.open_step(tok),
            Kind::Close => self.close_step(tok)?,
            Kind::Neutral => self.neutral_step(tok),
        };
        self.stats.record(SymbolStats {
            visits,
            ecs_ops: self.ecs.ops().total() - ops0,
            nodes: (self.ecs.len() - nodes0) as u64,
        });
        Ok(())
    }

    fn open_step(&mut self, tok: Token) -> u64 {
        let k = self.k as Pos;
        let mut next = LevelTable::new();
        let mut top = StackTable::new();
        let mut visits = 0;
        for (&(p, p2), &v) in &self.level {
            for tr in self.vpt.pushes_from(p2, tok.sym) {
                visits += 1;
                next.insert((tr.to, tr.to), self.v_eps);
                let branch = if_prod(&mut self.ecs, v, tr.out, k);
                let slot = top.entry((p, tr.push, tr.to)).or_insert(NodeId::EMPTY);
                *slot = self.ecs.union(*slot, branch);
            }
        }
        self.stack.push(top);
        self.open_positions.push(self.k);
        self.level = next;
        visits
    }

    fn close_step(&mut self, tok: Token) -> Result<u64> {
        let k = self.k as Pos;
        let top = self.stack.pop().ok_or(Error::UnbalancedClose(self.k))?;
        self.open_positions.pop();
        let mut by_first: Vec<(State, State, NodeId)> =
            self.level.iter().map(|(&(p, q), &v)| (p, q, v)).collect();
        by_first.sort_unstable_by_key(|&(p, q, _)| (p, q));
        let mut next = LevelTable::new();
        let mut visits = 0;
        for (&(p, x, p2), &vt) in &top {
            let lo = by_first.partition_point(|&(a, _, _)| a < p2);
            for &(_, q2, vs) in by_first[lo..].iter().take_while(|&&(a, _, _)| a == p2) {
                for tr in self.vpt.pops_from(q2, tok.sym) {
                    if tr.pop != x {
                        continue;
                    }
                    visits += 1;
                    let v = self.ecs.prod(vt, vs);
                    let v = if_prod(&mut self.ecs, v, tr.out, k);
                    let slot = next.entry((p, tr.to)).or_insert(NodeId::EMPTY);
                    *slot = self.ecs.union(*slot, v);
                }
            }
        }
        next.retain(|_, v| !v.is_empty());
        self.level = next;
        Ok(visits)
    }

    fn neutral_step(&mut self, tok: Token) -> u64 {
        let k = self.k as Pos;
        let mut next = LevelTable::new();
        let mut visits = 0;
        for (&(p, q), &v) in &self.level {
            for tr in self.vpt.neutrals_from(q, tok.sym) {
                visits += 1;
                let v = if_prod(&mut self.ecs, v, tr.out, k);
                let slot = next.entry((p, tr.to)).or_insert(NodeId::EMPTY);
                *slot = self.ecs.union(*slot, v);
            }
        }
        self.level = next;
        visits
    }

    /// Outputs of accepting runs on the prefix read so far, or the sentinel
    /// while some open is unmatched. Adds union nodes to the arena.
    pub fn checkpoint(&mut self) -> NodeId {
        if !self.stack.is_empty() {
            return NodeId::EMPTY;
        }
        let mut v = NodeId::EMPTY;
        let accepting: Vec<NodeId> = self
            .level
            .iter()
            .filter(|(&(p, q), _)| self.vpt.is_initial(p) && self.vpt.is_final(q))
            .map(|(_, &n)| n)
            .collect();
        for n in accepting {
            v = self.ecs.union(v, n);
        }
        v
    }

    /// Ends the document.
    pub fn finish(mut self) -> Result<PreprocessResult> {
        if let Some(&p) = self.open_positions.last() {
            return Err(Error::UnclosedOpen(p));
        }
        let v_out = self.checkpoint();
        Ok(PreprocessResult {
            ecs: self.ecs,
            v_out,
            stats: self.stats,
            length: self.k,
        })
    }
}

/// Runs the preprocessing over `tokens`, pulling each item exactly once
/// and the end of the stream once.
pub fn preprocess<I>(vpt: &Vpt, tokens: I) -> Result<PreprocessResult>
where
    I: IntoIterator<Item = Result<Token>>,
{
    let mut pre = Preprocessor::new(vpt);
    for tok in tokens {
        pre.feed(tok?)?;
    }
    pre.finish()
}

/// How the engine establishes that each output has a single accepting run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    /// The caller guarantees I/O-unambiguity.
    TrustUnambiguous,
    /// Refuse machines that are not structurally I/O-deterministic.
    #[default]
    CheckDeterministic,
    /// Run on the I/O-determinized machine.
    DeterminizeFirst,
}

impl Mode {
    /// The machine the engine should run under this mode.
    pub fn prepare<'a>(self, vpt: &'a Vpt) -> Result<Cow<'a, Vpt>> {
        match self {
            Mode::TrustUnambiguous => Ok(Cow::Borrowed(vpt)),
            Mode::CheckDeterministic => {
                if is_io_deterministic(vpt) {
                    Ok(Cow::Borrowed(vpt))
                } else {
                    Err(Error::Precondition(
                        "transducer is not I/O-deterministic; pass --trust-unambiguous \
                         or --determinize-first"
                            .into(),
                    ))
                }
            }
            Mode::DeterminizeFirst => Ok(Cow::Owned(io_determinize(vpt))),
        }
    }
}

/// Preprocesses `tokens` under `mode`; enumerate with
/// [`PreprocessResult::outputs`]. Output symbols keep their indices in
/// `vpt`.
pub fn evaluate<I>(vpt: &Vpt, tokens: I, mode: Mode) -> Result<PreprocessResult>
where
    I: IntoIterator<Item = Result<Token>>,
{
    let machine = mode.prepare(vpt)?;
    preprocess(&machine, tokens)
}
