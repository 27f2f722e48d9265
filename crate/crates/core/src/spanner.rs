//! Document spanners given by visibly pushdown extraction grammars.
//!
//! A grammar ([`Vpeg`]) is compiled into an extraction automaton
//! ([`Evpa`]) whose neutral transitions may also read captures, then into
//! a transducer whose outputs are sets of captures: every maximal chain of
//! capture transitions is collapsed onto the next letter-reading
//! transition. The document is evaluated with an end marker appended so
//! that captures after the last letter have a letter to ride on. Since
//! outputs carry input positions, each output word decodes directly into
//! a mapping from variables to spans.
//!
//! Grammar format:
//!
//! ```text
//! var x
//! start S
//! S -> <a S a> S | b S | (x T | eps
//! T -> b T | x) S
//! ```
//!
//! `(x` and `x)` open and close variable `x`. Bodies have one of the
//! shapes `eps`, `c B` (a neutral letter or a capture followed by a
//! nonterminal) or `<a B b> C`. Nonterminals are exactly the names on
//! left-hand sides. An optional `alphabet:` line declares letters that no
//! production mentions.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use crate::engine::{preprocess, PreprocessResult};
use crate::nested::{Kind, Span, StructuredAlphabet, Sym, Token};
use crate::vpt::{io_determinize, is_io_deterministic, Vpt, VptBuilder};
use crate::{Error, OutSym, OutputWord, Result, StackSym, State};

/// Name of the end-marker letter appended to documents.
pub const END_MARKER: &str = "$";

/// Index of a nonterminal.
pub type Nt = u32;

/// `⊢x` (`open`) or `⊣x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Capture {
    pub var: u32,
    pub open: bool,
}

impl Capture {
    /// Bit of this capture in a [`CaptureSet`].
    pub fn bit(self) -> u64 {
        1 << (2 * self.var + u32::from(!self.open))
    }
}

/// A set of captures as a bit mask: bit `2x` is `⊢x`, bit `2x+1` is `⊣x`.
pub type CaptureSet = u64;

/// Maximum number of variables (two capture bits each).
pub const MAX_VARS: usize = 32;

/// Right-hand side of a production.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Body {
    Eps,
    /// A neutral letter, then a nonterminal.
    Letter(Sym, Nt),
    /// A capture, then a nonterminal.
    Capture(Capture, Nt),
    /// `<open inner close> next`.
    Nest {
        open: Sym,
        inner: Nt,
        close: Sym,
        next: Nt,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Production {
    pub lhs: Nt,
    pub body: Body,
}

/// A visibly pushdown extraction grammar.
#[derive(Clone, Debug)]
pub struct Vpeg {
    pub vars: Vec<String>,
    pub nonterminals: Vec<String>,
    pub alphabet: StructuredAlphabet,
    pub start: Nt,
    pub productions: Vec<Production>,
}

fn syntax(line: usize, msg: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        msg: msg.into(),
    }
}

/// Parses a grammar file.
pub fn parse_vpeg(text: &str) -> Result<Vpeg> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();

    let mut vars: Vec<String> = Vec::new();
    let mut nonterminals: Vec<String> = Vec::new();
    let mut nt_index: HashMap<String, Nt> = HashMap::new();
    let mut start: Option<(usize, String)> = None;
    let mut alphabet = StructuredAlphabet::new();
    for &(line, l) in &lines {
        let words: Vec<&str> = l.split_whitespace().collect();
        match words[0] {
            "var" => {
                for v in &words[1..] {
                    if vars.iter().any(|x| x == v) {
                        return Err(syntax(line, format!("variable `{v}` declared twice")));
                    }
                    if v.contains(['(', ')']) {
                        return Err(syntax(line, format!("invalid variable name `{v}`")));
                    }
                    vars.push(v.to_string());
                }
            }
            "start" => {
                if words.len() != 2 {
                    return Err(syntax(line, "`start` takes one nonterminal"));
                }
                start = Some((line, words[1].to_string()));
            }
            "alphabet:" => {
                for w in &words[1..] {
                    alphabet
                        .declare_token(w)
                        .map_err(|e| syntax(line, e.to_string()))?;
                }
            }
            _ => {
                if words.get(1) != Some(&"->") {
                    return Err(syntax(line, format!("expected `A -> ...`, found `{l}`")));
                }
                let a = words[0];
                if !nt_index.contains_key(a) {
                    nt_index.insert(a.to_string(), nonterminals.len() as Nt);
                    nonterminals.push(a.to_string());
                }
            }
        }
    }
    if vars.len() > MAX_VARS {
        return Err(Error::Model(format!("at most {MAX_VARS} variables are supported")));
    }
    if nonterminals.is_empty() {
        return Err(syntax(0, "grammar has no productions"));
    }

    let nt = |line: usize, name: &str| {
        nt_index
            .get(name)
            .copied()
            .ok_or_else(|| syntax(line, format!("unknown nonterminal `{name}`")))
    };
    let var = |line: usize, name: &str| {
        vars.iter()
            .position(|v| v == name)
            .map(|i| i as u32)
            .ok_or_else(|| syntax(line, format!("undeclared variable `{name}`")))
    };
    let mut productions = Vec::new();
    let mut seen = HashSet::new();
    for &(line, l) in &lines {
        let words: Vec<&str> = l.split_whitespace().collect();
        if words.get(1) != Some(&"->") {
            continue;
        }
        let lhs = nt(line, words[0])?;
        for alt in words[2..].split(|w| *w == "|") {
            let body = match *alt {
                ["eps"] => Body::Eps,
                [c, b] => {
                    let next = nt(line, b)?;
                    if let Some(x) = c.strip_prefix('(') {
                        Body::Capture(Capture { var: var(line, x)?, open: true }, next)
                    } else if let Some(x) = c.strip_suffix(')') {
                        Body::Capture(Capture { var: var(line, x)?, open: false }, next)
                    } else if nt_index.contains_key(c) {
                        return Err(syntax(
                            line,
                            format!("`{c} {b}`: a nonterminal cannot start a body of two symbols"),
                        ));
                    } else {
                        let tok = alphabet
                            .declare_token(c)
                            .map_err(|e| syntax(line, e.to_string()))?;
                        if tok.kind != Kind::Neutral {
                            return Err(syntax(line, format!("`{c}` must be matched inside `<a B b> C`")));
                        }
                        Body::Letter(tok.sym, next)
                    }
                }
                [o, b, c, d] if o.starts_with('<') && c.ends_with('>') => {
                    let open = alphabet.declare_token(o).map_err(|e| syntax(line, e.to_string()))?;
                    let close = alphabet.declare_token(c).map_err(|e| syntax(line, e.to_string()))?;
                    Body::Nest {
                        open: open.sym,
                        inner: nt(line, b)?,
                        close: close.sym,
                        next: nt(line, d)?,
                    }
                }
                _ => {
                    return Err(syntax(
                        line,
                        format!("`{}` is not of the form eps, c B or <a B b> C", alt.join(" ")),
                    ))
                }
            };
            let p = Production { lhs, body };
            if seen.insert(p) {
                productions.push(p);
            }
        }
    }
    let start = match start {
        Some((line, s)) => nt(line, &s)?,
        None => 0,
    };
    Ok(Vpeg {
        vars,
        nonterminals,
        alphabet,
        start,
        productions,
    })
}

impl Vpeg {
    /// Writes the grammar in the format read by [`parse_vpeg`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if !self.vars.is_empty() {
            s.push_str(&format!("var {}\n", self.vars.join(" ")));
        }
        s.push_str(&format!("start {}\n", self.nonterminals[self.start as usize]));
        let letters: Vec<String> = self
            .alphabet
            .letters()
            .into_iter()
            .map(|l| self.alphabet.render(l))
            .collect();
        if !letters.is_empty() {
            s.push_str(&format!("alphabet: {}\n", letters.join(" ")));
        }
        for p in &self.productions {
            let n = |a: Nt| self.nonterminals[a as usize].as_str();
            let body = match p.body {
                Body::Eps => "eps".to_string(),
                Body::Letter(a, b) => format!("{} {}", self.alphabet.name(a), n(b)),
                Body::Capture(c, b) => format!("{} {}", self.capture_name(c), n(b)),
                Body::Nest {
                    open,
                    inner,
                    close,
                    next,
                } => format!(
                    "<{} {} {}> {}",
                    self.alphabet.name(open),
                    n(inner),
                    self.alphabet.name(close),
                    n(next)
                ),
            };
            s.push_str(&format!("{} -> {}\n", n(p.lhs), body));
        }
        s
    }

    /// `(x` or `x)`.
    pub fn capture_name(&self, c: Capture) -> String {
        let v = &self.vars[c.var as usize];
        if c.open {
            format!("({v}")
        } else {
            format!("{v})")
        }
    }
}

/// Nonterminals that derive the empty word.
///
/// Only `A -> eps` can contribute: every other body produces a letter or a
/// capture.
pub fn nullable_set(g: &Vpeg) -> BTreeSet<Nt> {
    let mut nullable = BTreeSet::new();
    let mut changed = true;
    while changed {
        changed = false;
        for p in &g.productions {
            if p.body == Body::Eps && nullable.insert(p.lhs) {
                changed = true;
            }
        }
    }
    nullable
}

/// An extraction automaton: a VPA whose neutral transitions may read
/// captures.
#[derive(Clone, Debug)]
pub struct Evpa {
    pub vars: Vec<String>,
    pub alphabet: StructuredAlphabet,
    pub state_names: Vec<String>,
    pub num_stack_symbols: usize,
    pub initial: Vec<State>,
    pub finals: Vec<bool>,
    pub pushes: Vec<(State, Sym, State, StackSym)>,
    pub pops: Vec<(State, Sym, StackSym, State)>,
    pub neutrals: Vec<(State, Sym, State)>,
    pub captures: Vec<(State, Capture, State)>,
    /// Unit operations spent building the automaton.
    pub build_ops: u64,
}

/// One letter of a ref-word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RefLetter {
    Letter(Token),
    Capture(Capture),
}

impl Evpa {
    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.pushes.len() + self.pops.len() + self.neutrals.len() + self.captures.len()
    }

    /// Membership of a ref-word, by simulating every configuration. Meant
    /// for short words.
    pub fn accepts(&self, word: &[RefLetter]) -> bool {
        let mut confs: BTreeSet<(State, Vec<StackSym>)> =
            self.initial.iter().map(|&q| (q, Vec::new())).collect();
        for l in word {
            let mut next = BTreeSet::new();
            for (q, st) in &confs {
                match *l {
                    RefLetter::Letter(t) => match t.kind {
                        Kind::Open => {
                            for &(p, a, r, x) in &self.pushes {
                                if p == *q && a == t.sym {
                                    let mut s = st.clone();
                                    s.push(x);
                                    next.insert((r, s));
                                }
                            }
                        }
                        Kind::Close => {
                            for &(p, a, x, r) in &self.pops {
                                if p == *q && a == t.sym && st.last() == Some(&x) {
                                    next.insert((r, st[..st.len() - 1].to_vec()));
                                }
                            }
                        }
                        Kind::Neutral => {
                            for &(p, a, r) in &self.neutrals {
                                if p == *q && a == t.sym {
                                    next.insert((r, st.clone()));
                                }
                            }
                        }
                    },
                    RefLetter::Capture(c) => {
                        for &(p, d, r) in &self.captures {
                            if p == *q && d == c {
                                next.insert((r, st.clone()));
                            }
                        }
                    }
                }
            }
            confs = next;
        }
        confs
            .iter()
            .any(|(q, st)| st.is_empty() && self.finals[*q as usize])
    }
}

/// The extraction automaton of `g`, one state per nonterminal plus a
/// completion state `⊤` and a copy of the start symbol that is final when
/// the start symbol is nullable. Runs correspond one-to-one to leftmost
/// derivations.
pub fn to_evpa(g: &Vpeg) -> Evpa {
    let nullable = nullable_set(g);
    let mut ops = g.productions.len() as u64;
    let n = g.nonterminals.len() as State;
    let top = n;
    let init = n + 1;
    let mut state_names = g.nonterminals.clone();
    state_names.push("$top".into());
    state_names.push("$init".into());
    let mut finals = vec![false; n as usize + 2];
    finals[top as usize] = true;
    finals[init as usize] = nullable.contains(&g.start);

    let mut e = Evpa {
        vars: g.vars.clone(),
        alphabet: g.alphabet.clone(),
        state_names,
        num_stack_symbols: 0,
        initial: vec![init],
        finals,
        pushes: Vec::new(),
        pops: Vec::new(),
        neutrals: Vec::new(),
        captures: Vec::new(),
        build_ops: 0,
    };
    for p in &g.productions {
        // A bracket production gets its own stack symbol, which fixes the
        // close letter and the continuation.
        let x = e.num_stack_symbols as StackSym;
        if let Body::Nest { close, next, .. } = p.body {
            e.num_stack_symbols += 1;
            e.pops.push((top, close, x, next));
            if nullable.contains(&next) {
                e.pops.push((top, close, x, top));
            }
        }
        let sources: &[State] = if p.lhs == g.start {
            &[p.lhs, init]
        } else {
            &[p.lhs]
        };
        for &a in sources {
            ops += 1;
            match p.body {
                Body::Eps => {}
                Body::Letter(sym, b) => {
                    e.neutrals.push((a, sym, b));
                    if nullable.contains(&b) {
                        e.neutrals.push((a, sym, top));
                    }
                }
                Body::Capture(c, b) => {
                    e.captures.push((a, c, b));
                    if nullable.contains(&b) {
                        e.captures.push((a, c, top));
                    }
                }
                Body::Nest { open, inner, .. } => {
                    e.pushes.push((a, open, inner, x));
                    if nullable.contains(&inner) {
                        e.pushes.push((a, open, top, x));
                    }
                }
            }
        }
    }
    ops += e.num_transitions() as u64;
    e.build_ops = ops;
    e
}

/// Fails when the capture transitions contain a cycle.
pub fn check_capture_dag(e: &Evpa) -> Result<()> {
    let n = e.num_states();
    let mut succ: Vec<Vec<State>> = vec![Vec::new(); n];
    for &(p, _, q) in &e.captures {
        succ[p as usize].push(q);
    }
    // 0 unvisited, 1 on the current path, 2 done.
    let mut color = vec![0u8; n];
    for root in 0..n {
        if color[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        color[root] = 1;
        while let Some(&mut (v, ref mut i)) = stack.last_mut() {
            if let Some(&w) = succ[v].get(*i) {
                *i += 1;
                match color[w as usize] {
                    0 => {
                        color[w as usize] = 1;
                        stack.push((w as usize, 0));
                    }
                    1 => {
                        return Err(Error::Model(format!(
                            "capture transitions form a cycle through `{}`",
                            e.state_names[w as usize]
                        )))
                    }
                    _ => {}
                }
            } else {
                color[v] = 2;
                stack.pop();
            }
        }
    }
    Ok(())
}

/// Bound on the product explored by [`check_functional`].
const FUNCTIONAL_CAP: usize = 1 << 22;

/// Checks that every accepted ref-word opens and then closes each variable
/// exactly once.
///
/// Explores the product of the automaton with a status per variable
/// (unopened, open, closed, or a violation) and reports a violation when a
/// final state is reachable over a well-nested ref-word with some variable
/// not closed.
pub fn check_functional(e: &Evpa) -> Result<()> {
    let nv = e.vars.len();
    let statuses = 3usize
        .checked_pow(nv as u32)
        .filter(|&s| s.saturating_mul(e.num_states()) <= FUNCTIONAL_CAP)
        .ok_or_else(|| Error::ResourceCap("too many variables for the functionality check".into()))?;
    let err = statuses as u32;
    let width = statuses as u32 + 1;
    let pstate = |q: State, s: u32| q * width + s;
    let digit = |s: u32, v: u32| (s / 3u32.pow(v)) % 3;
    let step_capture = |s: u32, c: Capture| -> u32 {
        if s == err {
            return err;
        }
        let d = digit(s, c.var);
        let unit = 3u32.pow(c.var);
        match (c.open, d) {
            (true, 0) | (false, 1) => s + unit,
            _ => err,
        }
    };
    let all_closed: u32 = (0..nv as u32).map(|v| 2 * 3u32.pow(v)).sum();

    let mut neutral_succ: Vec<Vec<State>> = vec![Vec::new(); e.num_states()];
    for &(p, _, q) in &e.neutrals {
        neutral_succ[p as usize].push(q);
    }
    let mut capture_succ: Vec<Vec<(Capture, State)>> = vec![Vec::new(); e.num_states()];
    for &(p, c, q) in &e.captures {
        capture_succ[p as usize].push((c, q));
    }
    let mut push_succ: Vec<Vec<(StackSym, State)>> = vec![Vec::new(); e.num_states()];
    for &(p, _, q, x) in &e.pushes {
        push_succ[p as usize].push((x, q));
    }
    let mut pop_succ: Vec<Vec<(StackSym, State)>> = vec![Vec::new(); e.num_states()];
    for &(p, _, x, q) in &e.pops {
        pop_succ[p as usize].push((x, q));
    }

    // Well-matched reachability: `(s, t)` means `t` is reachable from `s`
    // over a well-nested ref-word.
    let mut summaries: HashSet<(u32, u32)> = HashSet::new();
    let mut reach_from: HashMap<u32, Vec<u32>> = HashMap::new();
    let mut callers: HashMap<u32, Vec<(u32, StackSym)>> = HashMap::new();
    let mut work: Vec<(u32, u32)> = Vec::new();
    let add = |s: u32, t: u32, summaries: &mut HashSet<(u32, u32)>, reach_from: &mut HashMap<u32, Vec<u32>>, work: &mut Vec<(u32, u32)>| {
        if summaries.insert((s, t)) {
            reach_from.entry(s).or_default().push(t);
            work.push((s, t));
        }
    };
    for &q in &e.initial {
        let s = pstate(q, 0);
        add(s, s, &mut summaries, &mut reach_from, &mut work);
    }
    while let Some((s, t)) = work.pop() {
        let (q, st) = (t / width, t % width);
        for &q2 in &neutral_succ[q as usize] {
            add(s, pstate(q2, st), &mut summaries, &mut reach_from, &mut work);
        }
        for &(c, q2) in &capture_succ[q as usize] {
            add(s, pstate(q2, step_capture(st, c)), &mut summaries, &mut reach_from, &mut work);
        }
        for &(x, q2) in &push_succ[q as usize] {
            let r = pstate(q2, st);
            callers.entry(r).or_default().push((s, x));
            add(r, r, &mut summaries, &mut reach_from, &mut work);
            let ends: Vec<u32> = reach_from.get(&r).cloned().unwrap_or_default();
            for u in ends {
                let (uq, us) = (u / width, u % width);
                for &(y, v) in &pop_succ[uq as usize] {
                    if y == x {
                        add(s, pstate(v, us), &mut summaries, &mut reach_from, &mut work);
                    }
                }
            }
        }
        if let Some(cs) = callers.get(&s).cloned() {
            for (s0, x) in cs {
                for &(y, v) in &pop_succ[q as usize] {
                    if y == x {
                        add(s0, pstate(v, st), &mut summaries, &mut reach_from, &mut work);
                    }
                }
            }
        }
    }
    for &q in &e.initial {
        for &t in reach_from.get(&pstate(q, 0)).into_iter().flatten() {
            let (tq, ts) = (t / width, t % width);
            if e.finals[tq as usize] && ts != all_closed {
                return Err(Error::Model(format!(
                    "grammar is not functional: an accepted ref-word reaching `{}` {}",
                    e.state_names[tq as usize],
                    if ts == err {
                        "repeats or misorders a capture"
                    } else {
                        "leaves a variable unassigned"
                    }
                )));
            }
        }
    }
    Ok(())
}

/// A grammar compiled into a transducer over documents followed by
/// [`END_MARKER`].
#[derive(Clone, Debug)]
pub struct CompiledSpanner {
    pub vars: Vec<String>,
    /// Letters of documents.
    pub doc_alphabet: StructuredAlphabet,
    /// Transducer produced by collapsing capture chains.
    pub vpt: Vpt,
    /// Machine run by the engine: `vpt`, or its I/O-determinization.
    pub engine_vpt: Vpt,
    pub end_marker: Sym,
    /// Capture set of each output symbol.
    pub capture_sets: Vec<CaptureSet>,
    /// Operations spent in [`to_evpa`].
    pub evpa_ops: u64,
}

/// How [`compile`] makes the transducer I/O-unambiguous.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SpannerMode {
    /// Use the transducer as is when it is I/O-deterministic, otherwise
    /// determinize it.
    #[default]
    Auto,
    /// The caller guarantees that distinct runs give distinct outputs.
    TrustUnambiguous,
}

/// Non-empty capture chains from each state: `(captures, end state)`.
fn capture_paths(e: &Evpa) -> Vec<BTreeSet<(CaptureSet, State)>> {
    let n = e.num_states();
    let mut succ: Vec<Vec<(Capture, State)>> = vec![Vec::new(); n];
    for &(p, c, q) in &e.captures {
        succ[p as usize].push((c, q));
    }
    let mut memo: Vec<Option<BTreeSet<(CaptureSet, State)>>> = vec![None; n];
    fn go(
        p: usize,
        succ: &[Vec<(Capture, State)>],
        memo: &mut Vec<Option<BTreeSet<(CaptureSet, State)>>>,
    ) -> BTreeSet<(CaptureSet, State)> {
        if let Some(r) = &memo[p] {
            return r.clone();
        }
        let mut out = BTreeSet::new();
        for &(c, q) in &succ[p] {
            out.insert((c.bit(), q));
            for (s, end) in go(q as usize, succ, memo) {
                // A chain that repeats a capture cannot be part of a valid
                // ref-word.
                if s & c.bit() == 0 {
                    out.insert((s | c.bit(), end));
                }
            }
        }
        memo[p] = Some(out.clone());
        out
    }
    (0..n).map(|p| go(p, &succ, &mut memo)).collect()
}

/// Renders a capture set, e.g. `{(x,x),(y}`.
pub fn capture_set_name(vars: &[String], s: CaptureSet) -> String {
    let mut parts = Vec::new();
    for (i, v) in vars.iter().enumerate() {
        if s & (1 << (2 * i)) != 0 {
            parts.push(format!("({v}"));
        }
        if s & (1 << (2 * i + 1)) != 0 {
            parts.push(format!("{v})"));
        }
    }
    format!("{{{}}}", parts.join(","))
}

/// Collapses capture chains onto the following letter. The result reads
/// documents followed by [`END_MARKER`] and its outputs are capture sets,
/// listed in the returned table.
pub fn evpa_to_vpt(e: &Evpa) -> Result<(Vpt, Sym, Vec<CaptureSet>)> {
    check_capture_dag(e)?;
    let paths = capture_paths(e);
    // Predecessors: for each end state, the chains that lead into it.
    let mut into: Vec<Vec<(State, CaptureSet)>> = vec![Vec::new(); e.num_states()];
    for (p1, set) in paths.iter().enumerate() {
        for &(s, end) in set {
            into[end as usize].push((p1 as State, s));
        }
    }

    let mut b = VptBuilder::new();
    b.alphabet = e.alphabet.clone();
    let end_marker = b.alphabet.declare(Kind::Neutral, END_MARKER)?;
    for name in &e.state_names {
        b.state(name);
    }
    let qf = b.state("$final");
    for x in 0..e.num_stack_symbols {
        b.stack_symbol(&format!("g{x}"));
    }
    let mut sets: Vec<CaptureSet> = Vec::new();
    let mut out_of = |b: &mut VptBuilder, s: CaptureSet| -> OutSym {
        let o = b.output(&capture_set_name(&e.vars, s));
        if o as usize == sets.len() {
            sets.push(s);
        }
        o
    };
    for &q in &e.initial {
        b.set_initial(q);
    }
    b.set_final(qf);

    for &(p, a, q, x) in &e.pushes {
        b.push(p, a, None, q, x);
        for &(p1, s) in &into[p as usize] {
            let o = out_of(&mut b, s);
            b.push(p1, a, Some(o), q, x);
        }
    }
    for &(p, a, x, q) in &e.pops {
        b.pop(p, a, None, x, q);
        for &(p1, s) in &into[p as usize] {
            let o = out_of(&mut b, s);
            b.pop(p1, a, Some(o), x, q);
        }
    }
    for &(p, a, q) in &e.neutrals {
        b.neutral(p, a, None, q);
        for &(p1, s) in &into[p as usize] {
            let o = out_of(&mut b, s);
            b.neutral(p1, a, Some(o), q);
        }
    }
    for p in 0..e.num_states() as State {
        if !e.finals[p as usize] {
            continue;
        }
        b.neutral(p, end_marker, None, qf);
        for &(p1, s) in &into[p as usize] {
            let o = out_of(&mut b, s);
            b.neutral(p1, end_marker, Some(o), qf);
        }
    }
    Ok((b.build()?, end_marker, sets))
}

/// Compiles a grammar, rejecting capture cycles and non-functional
/// grammars.
pub fn compile(g: &Vpeg, mode: SpannerMode) -> Result<CompiledSpanner> {
    let e = to_evpa(g);
    check_capture_dag(&e)?;
    check_functional(&e)?;
    let (vpt, end_marker, capture_sets) = evpa_to_vpt(&e)?;
    let engine_vpt = match mode {
        SpannerMode::TrustUnambiguous => vpt.clone(),
        SpannerMode::Auto if is_io_deterministic(&vpt) => vpt.clone(),
        SpannerMode::Auto => io_determinize(&vpt),
    };
    Ok(CompiledSpanner {
        vars: g.vars.clone(),
        doc_alphabet: g.alphabet.clone(),
        vpt,
        engine_vpt,
        end_marker,
        capture_sets,
        evpa_ops: e.build_ops,
    })
}

/// Assignment of variables to spans.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpanMapping(pub BTreeMap<String, Span>);

impl fmt::Display for SpanMapping {
    /// `x=[i,j) y=[k,l)`, sorted by variable.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, s) in &self.0 {
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            write!(f, "{v}=[{},{})", s.start, s.end)?;
        }
        Ok(())
    }
}

/// Turns an output word into a mapping. Each capture sits at the position
/// of the letter it precedes; `doc_len + 1` is the end marker.
pub fn decode_mapping(
    word: &OutputWord,
    capture_sets: &[CaptureSet],
    vars: &[String],
    doc_len: usize,
) -> Result<SpanMapping> {
    let mut start: Vec<Option<usize>> = vec![None; vars.len()];
    let mut end: Vec<Option<usize>> = vec![None; vars.len()];
    for &(o, pos) in word {
        let s = capture_sets
            .get(o as usize)
            .copied()
            .ok_or_else(|| Error::Model(format!("unknown output symbol {o}")))?;
        let pos = pos as usize;
        if pos == 0 || pos > doc_len + 1 {
            return Err(Error::PositionOutOfRange {
                pos,
                max: doc_len + 1,
            });
        }
        for (i, v) in vars.iter().enumerate() {
            for (bit, slot) in [(2 * i, &mut start[i]), (2 * i + 1, &mut end[i])] {
                if s & (1 << bit) != 0 {
                    if slot.is_some() {
                        return Err(Error::Model(format!("variable `{v}` captured twice")));
                    }
                    *slot = Some(pos);
                }
            }
        }
    }
    let mut m = BTreeMap::new();
    for (i, v) in vars.iter().enumerate() {
        match (start[i], end[i]) {
            (Some(a), Some(b)) if a <= b => {
                m.insert(v.clone(), Span::new(a, b));
            }
            (Some(_), Some(_)) => {
                return Err(Error::Model(format!("variable `{v}` closes before it opens")))
            }
            _ => return Err(Error::Model(format!("variable `{v}` is not assigned"))),
        }
    }
    Ok(SpanMapping(m))
}

/// Preprocessed evaluation of a spanner over one document.
pub struct SpannerRun<'c> {
    compiled: &'c CompiledSpanner,
    pub result: PreprocessResult,
    pub doc_len: usize,
}

impl SpannerRun<'_> {
    /// Streams the mappings.
    pub fn mappings(&self) -> impl Iterator<Item = Result<SpanMapping>> + '_ {
        self.result.outputs().map(move |w| {
            decode_mapping(
                &w,
                &self.compiled.capture_sets,
                &self.compiled.vars,
                self.doc_len,
            )
        })
    }
}

/// Runs a compiled spanner over a document given as letters of
/// `c.doc_alphabet`.
pub fn evaluate_spanner<I>(c: &CompiledSpanner, tokens: I) -> Result<SpannerRun<'_>>
where
    I: IntoIterator<Item = Result<Token>>,
{
    let mut n = 0usize;
    let tokens = tokens
        .into_iter()
        .inspect(|t| {
            if t.is_ok() {
                n += 1;
            }
        })
        .chain(std::iter::once(Ok(Token::neutral(c.end_marker))));
    let result = preprocess(&c.engine_vpt, tokens)?;
    let doc_len = result.length - 1;
    debug_assert_eq!(doc_len, n);
    Ok(SpannerRun {
        compiled: c,
        result,
        doc_len,
    })
}
