//! Visibly pushdown transducers with positional outputs.
//!
//! Every transition optionally emits an output symbol. A run over
//! `a_1 … a_n` emits the pairs `(ω_i, i)` for the steps whose output is not
//! ε; the transducer denotes, for each input, the set of outputs of its
//! accepting runs.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use indexmap::IndexSet;

use crate::nested::{check_nestedness, Kind, StructuredAlphabet, Sym, Token};
use crate::vpa::{close_subset, neutral_subset, open_subset, Pairs, Triples};
use crate::{Error, OutSym, OutputWord, Pos, Result, StackSym, State};

/// `(from, <a, ω|ε) → (to, push)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PushTr {
    pub from: State,
    pub sym: Sym,
    pub out: Option<OutSym>,
    pub to: State,
    pub push: StackSym,
}

/// `(from, a>, ω|ε, pop) → to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PopTr {
    pub from: State,
    pub sym: Sym,
    pub out: Option<OutSym>,
    pub pop: StackSym,
    pub to: State,
}

/// `(from, a, ω|ε) → to` for a neutral letter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StepTr {
    pub from: State,
    pub sym: Sym,
    pub out: Option<OutSym>,
    pub to: State,
}

/// Transitions grouped by `(from, sym)` for constant-time lookup.
#[derive(Clone, Debug, Default)]
struct Index {
    nsym: usize,
    offs: Vec<u32>,
}

impl Index {
    fn build<T>(items: &[T], nstates: usize, nsym: usize, key: impl Fn(&T) -> (State, Sym)) -> Self {
        let mut offs = vec![0u32; nstates * nsym + 1];
        for t in items {
            let (q, a) = key(t);
            offs[q as usize * nsym + a as usize + 1] += 1;
        }
        for i in 1..offs.len() {
            offs[i] += offs[i - 1];
        }
        Index { nsym, offs }
    }

    fn range(&self, q: State, a: Sym) -> std::ops::Range<usize> {
        if self.nsym == 0 || a as usize >= self.nsym {
            return 0..0;
        }
        let i = q as usize * self.nsym + a as usize;
        self.offs[i] as usize..self.offs[i + 1] as usize
    }
}

/// A visibly pushdown transducer. Built with [`VptBuilder`] or parsed from
/// text with [`crate::format::parse_machine`].
#[derive(Clone, Debug)]
pub struct Vpt {
    alphabet: StructuredAlphabet,
    states: Vec<String>,
    stack: Vec<String>,
    outputs: Vec<String>,
    initial: Vec<State>,
    is_final: Vec<bool>,
    pushes: Vec<PushTr>,
    pops: Vec<PopTr>,
    steps: Vec<StepTr>,
    push_ix: Index,
    pop_ix: Index,
    step_ix: Index,
}

impl Vpt {
    pub fn alphabet(&self) -> &StructuredAlphabet {
        &self.alphabet
    }
    pub fn num_states(&self) -> usize {
        self.states.len()
    }
    pub fn num_stack_symbols(&self) -> usize {
        self.stack.len()
    }
    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }
    pub fn state_name(&self, q: State) -> &str {
        &self.states[q as usize]
    }
    pub fn stack_name(&self, x: StackSym) -> &str {
        &self.stack[x as usize]
    }
    pub fn output_name(&self, o: OutSym) -> &str {
        &self.outputs[o as usize]
    }
    pub fn output_index(&self, name: &str) -> Option<OutSym> {
        self.outputs.iter().position(|o| o == name).map(|i| i as OutSym)
    }
    pub fn initial(&self) -> &[State] {
        &self.initial
    }
    pub fn finals(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.states.len() as State).filter(|&q| self.is_final(q))
    }
    pub fn is_final(&self, q: State) -> bool {
        self.is_final[q as usize]
    }
    pub fn is_initial(&self, q: State) -> bool {
        self.initial.contains(&q)
    }
    pub fn pushes(&self) -> &[PushTr] {
        &self.pushes
    }
    pub fn pops(&self) -> &[PopTr] {
        &self.pops
    }
    pub fn neutrals(&self) -> &[StepTr] {
        &self.steps
    }
    /// `|Δ|`.
    pub fn num_transitions(&self) -> usize {
        self.pushes.len() + self.pops.len() + self.steps.len()
    }
    pub fn pushes_from(&self, q: State, a: Sym) -> &[PushTr] {
        &self.pushes[self.push_ix.range(q, a)]
    }
    pub fn pops_from(&self, q: State, a: Sym) -> &[PopTr] {
        &self.pops[self.pop_ix.range(q, a)]
    }
    pub fn neutrals_from(&self, q: State, a: Sym) -> &[StepTr] {
        &self.steps[self.step_ix.range(q, a)]
    }

    /// Renders an output word as `sym@pos` items, or `ε` when empty.
    pub fn render_output(&self, w: &[(OutSym, Pos)]) -> String {
        if w.is_empty() {
            return "ε".to_string();
        }
        w.iter()
            .map(|&(o, p)| format!("{}@{}", self.output_name(o), p))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// The same machine with every output replaced by ε.
    pub fn erase_outputs(&self) -> Vpt {
        let mut b = VptBuilder::from_names(self);
        for t in &self.pushes {
            b.push(t.from, t.sym, None, t.to, t.push);
        }
        for t in &self.pops {
            b.pop(t.from, t.sym, None, t.pop, t.to);
        }
        for t in &self.steps {
            b.neutral(t.from, t.sym, None, t.to);
        }
        b.build().expect("erasing outputs keeps a valid machine")
    }
}

/// Incremental constructor for [`Vpt`].
#[derive(Clone, Debug, Default)]
pub struct VptBuilder {
    pub alphabet: StructuredAlphabet,
    states: IndexSet<String>,
    stack: IndexSet<String>,
    outputs: IndexSet<String>,
    initial: BTreeSet<State>,
    finals: BTreeSet<State>,
    pushes: BTreeSet<PushTr>,
    pops: BTreeSet<PopTr>,
    steps: BTreeSet<StepTr>,
}

impl VptBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts from the names, initial and final states of an existing
    /// machine, without its transitions.
    pub fn from_names(t: &Vpt) -> Self {
        let mut b = VptBuilder {
            alphabet: t.alphabet.clone(),
            ..Default::default()
        };
        b.states.extend(t.states.iter().cloned());
        b.stack.extend(t.stack.iter().cloned());
        b.outputs.extend(t.outputs.iter().cloned());
        b.initial.extend(t.initial.iter().copied());
        b.finals.extend(t.finals());
        b
    }

    pub fn state(&mut self, name: &str) -> State {
        self.states.insert_full(name.to_string()).0 as State
    }
    pub fn stack_symbol(&mut self, name: &str) -> StackSym {
        self.stack.insert_full(name.to_string()).0 as StackSym
    }
    pub fn output(&mut self, name: &str) -> OutSym {
        self.outputs.insert_full(name.to_string()).0 as OutSym
    }
    pub fn find_state(&self, name: &str) -> Option<State> {
        self.states.get_index_of(name).map(|i| i as State)
    }
    pub fn find_stack_symbol(&self, name: &str) -> Option<StackSym> {
        self.stack.get_index_of(name).map(|i| i as StackSym)
    }
    pub fn find_output(&self, name: &str) -> Option<OutSym> {
        self.outputs.get_index_of(name).map(|i| i as OutSym)
    }
    pub fn set_initial(&mut self, q: State) {
        self.initial.insert(q);
    }
    pub fn set_final(&mut self, q: State) {
        self.finals.insert(q);
    }
    pub fn push(&mut self, from: State, sym: Sym, out: Option<OutSym>, to: State, push: StackSym) {
        self.pushes.insert(PushTr {
            from,
            sym,
            out,
            to,
            push,
        });
    }
    pub fn pop(&mut self, from: State, sym: Sym, out: Option<OutSym>, pop: StackSym, to: State) {
        self.pops.insert(PopTr {
            from,
            sym,
            out,
            pop,
            to,
        });
    }
    pub fn neutral(&mut self, from: State, sym: Sym, out: Option<OutSym>, to: State) {
        self.steps.insert(StepTr { from, sym, out, to });
    }

    /// Validates references and indexes the transitions.
    pub fn build(self) -> Result<Vpt> {
        let nq = self.states.len();
        let ns = self.alphabet.len();
        let bad_q = |q: State| q as usize >= nq;
        let bad_x = |x: StackSym| x as usize >= self.stack.len();
        let bad_o = |o: Option<OutSym>| o.is_some_and(|o| o as usize >= self.outputs.len());
        let bad_a = |k: Kind, a: Sym| !self.alphabet.contains(k, a);
        if self.initial.iter().chain(&self.finals).any(|&q| bad_q(q)) {
            return Err(Error::Model("initial/final state out of range".into()));
        }
        for t in &self.pushes {
            if bad_q(t.from) || bad_q(t.to) || bad_x(t.push) || bad_o(t.out) || bad_a(Kind::Open, t.sym) {
                return Err(Error::Model(format!("invalid push transition {t:?}")));
            }
        }
        for t in &self.pops {
            if bad_q(t.from) || bad_q(t.to) || bad_x(t.pop) || bad_o(t.out) || bad_a(Kind::Close, t.sym) {
                return Err(Error::Model(format!("invalid pop transition {t:?}")));
            }
        }
        for t in &self.steps {
            if bad_q(t.from) || bad_q(t.to) || bad_o(t.out) || bad_a(Kind::Neutral, t.sym) {
                return Err(Error::Model(format!("invalid neutral transition {t:?}")));
            }
        }
        let pushes: Vec<_> = self.pushes.into_iter().collect();
        let pops: Vec<_> = self.pops.into_iter().collect();
        let steps: Vec<_> = self.steps.into_iter().collect();
        let mut is_final = vec![false; nq];
        for &q in &self.finals {
            is_final[q as usize] = true;
        }
        Ok(Vpt {
            push_ix: Index::build(&pushes, nq, ns, |t| (t.from, t.sym)),
            pop_ix: Index::build(&pops, nq, ns, |t| (t.from, t.sym)),
            step_ix: Index::build(&steps, nq, ns, |t| (t.from, t.sym)),
            alphabet: self.alphabet,
            states: self.states.into_iter().collect(),
            stack: self.stack.into_iter().collect(),
            outputs: self.outputs.into_iter().collect(),
            initial: self.initial.into_iter().collect(),
            is_final,
            pushes,
            pops,
            steps,
        })
    }
}

/// `out(ρ)` for a run given by the outputs of its steps.
pub fn out_of_run(outputs: &[Option<OutSym>]) -> OutputWord {
    out_of_subrun(outputs, 1, outputs.len() + 1)
}

/// `out(ρ⟨i,j⟩)`: the outputs of steps `i..j` with their positions.
pub fn out_of_subrun(outputs: &[Option<OutSym>], i: usize, j: usize) -> OutputWord {
    (i..j)
        .filter_map(|k| outputs[k - 1].map(|o| (o, k as Pos)))
        .collect()
}

/// Every accepting run's output, with the number of accepting runs that
/// produce it. Explores at most `cap` run prefixes.
pub fn oracle_runs(t: &Vpt, tokens: &[Token], cap: u64) -> Result<BTreeMap<OutputWord, u64>> {
    check_nestedness(tokens)?;
    struct Dfs<'a> {
        t: &'a Vpt,
        w: &'a [Token],
        cap: u64,
        visited: u64,
        stack: Vec<StackSym>,
        outs: Vec<Option<OutSym>>,
        result: BTreeMap<OutputWord, u64>,
    }
    impl Dfs<'_> {
        fn go(&mut self, q: State) -> Result<()> {
            self.visited += 1;
            if self.visited > self.cap {
                return Err(Error::ResourceCap(format!(
                    "oracle explored more than {} run prefixes",
                    self.cap
                )));
            }
            let k = self.outs.len();
            if k == self.w.len() {
                if self.t.is_final(q) && self.stack.is_empty() {
                    *self.result.entry(out_of_run(&self.outs)).or_default() += 1;
                }
                return Ok(());
            }
            let tok = self.w[k];
            match tok.kind {
                Kind::Open => {
                    for tr in self.t.pushes_from(q, tok.sym) {
                        self.stack.push(tr.push);
                        self.outs.push(tr.out);
                        self.go(tr.to)?;
                        self.outs.pop();
                        self.stack.pop();
                    }
                }
                Kind::Close => {
                    let Some(&x) = self.stack.last() else {
                        return Ok(());
                    };
                    for tr in self.t.pops_from(q, tok.sym) {
                        if tr.pop != x {
                            continue;
                        }
                        self.stack.pop();
                        self.outs.push(tr.out);
                        self.go(tr.to)?;
                        self.outs.pop();
                        self.stack.push(x);
                    }
                }
                Kind::Neutral => {
                    for tr in self.t.neutrals_from(q, tok.sym) {
                        self.outs.push(tr.out);
                        self.go(tr.to)?;
                        self.outs.pop();
                    }
                }
            }
            Ok(())
        }
    }
    let mut d = Dfs {
        t,
        w: tokens,
        cap,
        visited: 0,
        stack: Vec::new(),
        outs: Vec::new(),
        result: BTreeMap::new(),
    };
    for &q in t.initial() {
        d.go(q)?;
    }
    Ok(d.result)
}

/// Default exploration cap for [`oracle_enumerate`].
pub const ORACLE_CAP: u64 = 5_000_000;

/// `⟦T⟧(w)` by exhaustive search over runs.
pub fn oracle_enumerate(t: &Vpt, tokens: &[Token]) -> Result<BTreeSet<OutputWord>> {
    Ok(oracle_runs(t, tokens, ORACLE_CAP)?.into_keys().collect())
}

/// One initial state, and no two transitions share their
/// `(state, letter, output[, popped symbol])` key.
pub fn is_io_deterministic(t: &Vpt) -> bool {
    if t.initial().len() != 1 {
        return false;
    }
    let mut seen = HashSet::new();
    t.pushes().iter().all(|x| seen.insert((x.from, x.sym, x.out)))
        && {
            let mut seen = HashSet::new();
            t.pops().iter().all(|x| seen.insert((x.from, x.sym, x.out, x.pop)))
        }
        && {
            let mut seen = HashSet::new();
            t.neutrals().iter().all(|x| seen.insert((x.from, x.sym, x.out)))
        }
}

/// Output keys available from the second components of `s` on letter `tok`
/// (restricted to popped symbols in `top` for closes).
fn output_keys(t: &Vpt, s: &Pairs, top: Option<&Triples>, tok: Token) -> BTreeSet<Option<OutSym>> {
    let mut keys = BTreeSet::new();
    let seconds: BTreeSet<State> = s.iter().map(|&(_, q)| q).collect();
    for q in seconds {
        match tok.kind {
            Kind::Open => keys.extend(t.pushes_from(q, tok.sym).iter().map(|x| x.out)),
            Kind::Neutral => keys.extend(t.neutrals_from(q, tok.sym).iter().map(|x| x.out)),
            Kind::Close => {
                let top = top.expect("close needs a stack symbol");
                keys.extend(
                    t.pops_from(q, tok.sym)
                        .iter()
                        .filter(|x| top.iter().any(|&(_, y, _)| y == x.pop))
                        .map(|x| x.out),
                );
            }
        }
    }
    keys
}

/// An I/O-deterministic transducer with the same semantics as `t`.
///
/// States are sets of state pairs and stack symbols sets of triples, built
/// per output symbol. Only subsets reachable from the initial one are
/// materialized.
pub fn io_determinize(t: &Vpt) -> Vpt {
    let mut states: IndexSet<Pairs> = IndexSet::new();
    let mut stacks: IndexSet<Triples> = IndexSet::new();
    let s0: Pairs = t.initial().iter().map(|&q| (q, q)).collect();
    states.insert(s0);

    let letters = t.alphabet().letters();
    let mut pushes: BTreeSet<PushTr> = BTreeSet::new();
    let mut pops: BTreeSet<PopTr> = BTreeSet::new();
    let mut steps: BTreeSet<StepTr> = BTreeSet::new();

    // Level 0 is the top level; level x+1 is the level opened by pushing x.
    let mut members: Vec<IndexSet<u32>> = vec![IndexSet::from([0u32])];
    let mut expanded: HashSet<u32> = HashSet::new();
    let mut close_done: HashSet<(u32, u32)> = HashSet::new();
    let mut neutral_succ: HashMap<u32, Vec<u32>> = HashMap::new();
    let mut pushed_from: HashMap<u32, Vec<u32>> = HashMap::new();
    let mut close_results: HashMap<u32, IndexSet<u32>> = HashMap::new();

    loop {
        let mut changed = false;
        let level_states: Vec<u32> = members.iter().flatten().copied().collect();
        for s in level_states {
            if !expanded.insert(s) {
                continue;
            }
            changed = true;
            let set = states[s as usize].clone();
            for &tok in &letters {
                match tok.kind {
                    Kind::Neutral => {
                        for key in output_keys(t, &set, None, tok) {
                            let next = neutral_subset(t, &set, tok.sym, Some(key));
                            if next.is_empty() {
                                continue;
                            }
                            let n = states.insert_full(next).0 as u32;
                            steps.insert(StepTr { from: s, sym: tok.sym, out: key, to: n });
                            neutral_succ.entry(s).or_default().push(n);
                        }
                    }
                    Kind::Open => {
                        for key in output_keys(t, &set, None, tok) {
                            let (next, top) = open_subset(t, &set, tok.sym, Some(key));
                            if next.is_empty() {
                                continue;
                            }
                            let n = states.insert_full(next).0 as u32;
                            let x = stacks.insert_full(top).0 as u32;
                            pushes.insert(PushTr { from: s, sym: tok.sym, out: key, to: n, push: x });
                            pushed_from.entry(s).or_default().push(x);
                            while members.len() <= x as usize + 1 {
                                members.push(IndexSet::new());
                            }
                            members[x as usize + 1].insert(n);
                        }
                    }
                    Kind::Close => {}
                }
            }
        }
        for x in 0..stacks.len() as u32 {
            let Some(level) = members.get(x as usize + 1) else {
                continue;
            };
            for s in level.clone() {
                if !close_done.insert((s, x)) {
                    continue;
                }
                changed = true;
                let set = states[s as usize].clone();
                let top = stacks[x as usize].clone();
                for &tok in letters.iter().filter(|l| l.kind == Kind::Close) {
                    for key in output_keys(t, &set, Some(&top), tok) {
                        let next = close_subset(t, &set, &top, tok.sym, Some(key));
                        if next.is_empty() {
                            continue;
                        }
                        let n = states.insert_full(next).0 as u32;
                        pops.insert(PopTr { from: s, sym: tok.sym, out: key, pop: x, to: n });
                        close_results.entry(x).or_default().insert(n);
                    }
                }
            }
        }
        for level in members.iter_mut() {
            let mut i = 0;
            while i < level.len() {
                let s = level[i];
                let mut add: Vec<u32> = neutral_succ.get(&s).cloned().unwrap_or_default();
                for x in pushed_from.get(&s).into_iter().flatten() {
                    if let Some(r) = close_results.get(x) {
                        add.extend(r.iter().copied());
                    }
                }
                for n in add {
                    if level.insert(n) {
                        changed = true;
                    }
                }
                i += 1;
            }
        }
        if !changed {
            break;
        }
    }

    let mut b = VptBuilder {
        alphabet: t.alphabet().clone(),
        ..Default::default()
    };
    for i in 0..states.len() {
        b.state(&format!("S{i}"));
    }
    for i in 0..stacks.len() {
        b.stack_symbol(&format!("T{i}"));
    }
    for o in 0..t.num_outputs() as OutSym {
        b.output(t.output_name(o));
    }
    b.set_initial(0);
    for (i, set) in states.iter().enumerate() {
        if set.iter().any(|&(p, q)| t.is_initial(p) && t.is_final(q)) {
            b.set_final(i as State);
        }
    }
    b.pushes = pushes;
    b.pops = pops;
    b.steps = steps;
    b.build().expect("determinized machine is well-formed")
}

/// Position of each letter in the expansion of neutral letters `a` into
/// `<a a>`, plus the expanded word.
pub fn expand_neutrals(tokens: &[Token]) -> (Vec<Token>, Vec<Pos>) {
    let mut out = Vec::with_capacity(tokens.len() * 2);
    let mut origin = Vec::with_capacity(tokens.len() * 2);
    for (i, &t) in tokens.iter().enumerate() {
        let p = (i + 1) as Pos;
        match t.kind {
            Kind::Neutral => {
                out.push(Token::open(t.sym));
                out.push(Token::close(t.sym));
                origin.push(p);
                origin.push(p);
            }
            _ => {
                out.push(t);
                origin.push(p);
            }
        }
    }
    (out, origin)
}

/// A transducer without neutral letters: each neutral letter `a` becomes
/// the pair `<a a>`, and each neutral transition a push (carrying the
/// output) into a fresh state followed by a silent pop.
///
/// Over [`expand_neutrals`] inputs it has the same runs; positions are
/// mapped back through the returned origin table.
pub fn expand_neutral_transitions(t: &Vpt) -> Result<Vpt> {
    let mut alphabet = StructuredAlphabet::new();
    let mut remap: HashMap<(Kind, Sym), Sym> = HashMap::new();
    for tok in t.alphabet().letters() {
        let name = match tok.kind {
            Kind::Neutral => format!("{}~", t.alphabet().name(tok.sym)),
            _ => t.alphabet().name(tok.sym).to_string(),
        };
        match tok.kind {
            Kind::Neutral => {
                let s = alphabet.declare(Kind::Open, &name)?;
                alphabet.declare(Kind::Close, &name)?;
                remap.insert((Kind::Neutral, tok.sym), s);
            }
            k => {
                let s = alphabet.declare(k, &name)?;
                remap.insert((k, tok.sym), s);
            }
        }
    }
    let mut b = VptBuilder::from_names(t);
    b.alphabet = alphabet;
    let mid = b.stack_symbol("~mid");
    for tr in t.pushes() {
        b.push(tr.from, remap[&(Kind::Open, tr.sym)], tr.out, tr.to, tr.push);
    }
    for tr in t.pops() {
        b.pop(tr.from, remap[&(Kind::Close, tr.sym)], tr.out, tr.pop, tr.to);
    }
    for (i, tr) in t.neutrals().iter().enumerate() {
        let s = remap[&(Kind::Neutral, tr.sym)];
        let m = b.state(&format!("~n{i}"));
        b.push(tr.from, s, tr.out, m, mid);
        b.pop(m, s, None, mid, tr.to);
    }
    b.build()
}

/// Maps letters of `tokens` (over `t`'s alphabet) onto the alphabet of
/// [`expand_neutral_transitions`]`(t)`.
pub fn expand_document(t: &Vpt, expanded: &Vpt, tokens: &[Token]) -> Vec<Token> {
    let (w, _) = expand_neutrals(tokens);
    w.into_iter()
        .map(|tok| {
            let name = t.alphabet().name(tok.sym);
            let is_neutral = t.alphabet().contains(Kind::Neutral, tok.sym);
            let name = if is_neutral { format!("{name}~") } else { name.to_string() };
            let sym = expanded
                .alphabet()
                .lookup(tok.kind, &name)
                .expect("expanded alphabet covers every letter");
            Token { kind: tok.kind, sym }
        })
        .collect()
}
