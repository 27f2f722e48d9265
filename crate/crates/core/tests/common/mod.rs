//! Random instance generators and brute-force oracles shared by the
//! integration tests. Nothing here calls into the engine: every expected
//! value is computed from the definitions directly.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use vpt_enum::ecs::{Ecs, NodeId};
use vpt_enum::enumtree::enumerate_all;
use vpt_enum::nested::{currlevel, lowerlevel, Kind, StructuredAlphabet, Token};
use vpt_enum::spanner::{Body, Capture, CaptureSet, RefLetter, SpanMapping, Vpeg};
use vpt_enum::vpt::{oracle_runs, out_of_subrun, Vpt, VptBuilder};
use vpt_enum::nested::Span;
use vpt_enum::{OutSym, OutputWord, StackSym, State};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shape of random transducers.
#[derive(Clone, Copy, Debug)]
pub struct VptShape {
    pub max_states: usize,
    pub max_transitions: usize,
    pub stack_symbols: usize,
    pub outputs: usize,
    /// Number of open/close pairs; one neutral letter is always present.
    pub pairs: usize,
    pub io_deterministic: bool,
}

impl Default for VptShape {
    fn default() -> Self {
        VptShape {
            max_states: 5,
            max_transitions: 15,
            stack_symbols: 2,
            outputs: 2,
            pairs: 1,
            io_deterministic: false,
        }
    }
}

/// Alphabet with pairs `<a a>`, `<c c>`, ... and the neutral letter `b`.
pub fn alphabet(pairs: usize) -> StructuredAlphabet {
    let mut al = StructuredAlphabet::new();
    for name in ["a", "c", "d"].iter().take(pairs) {
        al.declare(Kind::Open, name).unwrap();
        al.declare(Kind::Close, name).unwrap();
    }
    al.declare(Kind::Neutral, "b").unwrap();
    al
}

/// A random transducer. With `io_deterministic`, transitions never share
/// their determinism key and there is one initial state.
pub fn random_vpt(rng: &mut impl Rng, shape: VptShape) -> Vpt {
    let mut b = VptBuilder::new();
    b.alphabet = alphabet(shape.pairs);
    let n = rng.gen_range(1..=shape.max_states);
    let states: Vec<State> = (0..n).map(|i| b.state(&format!("q{i}"))).collect();
    let stack: Vec<StackSym> = (0..shape.stack_symbols)
        .map(|i| b.stack_symbol(&format!("X{i}")))
        .collect();
    let outs: Vec<OutSym> = (0..shape.outputs).map(|i| b.output(&format!("o{i}"))).collect();
    let letters = b.alphabet.letters();

    let initial = if shape.io_deterministic {
        1
    } else {
        rng.gen_range(1..=n.min(2))
    };
    for &q in states.choose_multiple(rng, initial) {
        b.set_initial(q);
    }
    for &q in &states {
        if rng.gen_bool(0.5) {
            b.set_final(q);
        }
    }
    b.set_final(*states.choose(rng).unwrap());

    let count = rng.gen_range(1..=shape.max_transitions);
    let mut keys = BTreeSet::new();
    let mut added = 0;
    let mut attempts = 0;
    while added < count && attempts < 20 * count {
        attempts += 1;
        let from = *states.choose(rng).unwrap();
        let to = *states.choose(rng).unwrap();
        let tok = *letters.choose(rng).unwrap();
        let out = if rng.gen_bool(0.5) {
            Some(*outs.choose(rng).unwrap())
        } else {
            None
        };
        let x = *stack.choose(rng).unwrap();
        let key = match tok.kind {
            Kind::Close => (tok, from, out, Some(x)),
            _ => (tok, from, out, None),
        };
        if shape.io_deterministic && !keys.insert(key) {
            continue;
        }
        match tok.kind {
            Kind::Open => b.push(from, tok.sym, out, to, x),
            Kind::Close => b.pop(from, tok.sym, out, x, to),
            Kind::Neutral => b.neutral(from, tok.sym, out, to),
        }
        added += 1;
    }
    b.build().unwrap()
}

/// A uniformly shaped random well-nested word of length at most `max_len`.
pub fn random_word(rng: &mut impl Rng, al: &StructuredAlphabet, max_len: usize) -> Vec<Token> {
    let len = rng.gen_range(0..=max_len);
    random_word_exact(rng, al, len, 0.45, 0.2)
}

/// A well-nested word of length `len` (or `len - 1` when the parity
/// forces it). `p_open` and `p_neutral` weight the letter classes.
pub fn random_word_exact(
    rng: &mut impl Rng,
    al: &StructuredAlphabet,
    len: usize,
    p_open: f64,
    p_neutral: f64,
) -> Vec<Token> {
    let opens: Vec<_> = al.symbols(Kind::Open).collect();
    let closes: Vec<_> = al.symbols(Kind::Close).collect();
    let neutrals: Vec<_> = al.symbols(Kind::Neutral).collect();
    let mut w = Vec::with_capacity(len);
    let mut depth = 0usize;
    while w.len() < len {
        let left = len - w.len();
        let can_open = !opens.is_empty() && depth + 2 <= left;
        let can_close = depth > 0;
        let can_neutral = !neutrals.is_empty() && depth < left;
        if !can_open && !can_close && !can_neutral {
            break;
        }
        let r: f64 = rng.gen();
        let choice = if r < p_open {
            0
        } else if r < p_open + p_neutral {
            2
        } else {
            1
        };
        let pick = [choice, 0, 1, 2]
            .into_iter()
            .find(|&c| match c {
                0 => can_open,
                1 => can_close,
                _ => can_neutral,
            })
            .unwrap();
        match pick {
            0 => {
                w.push(Token::open(*opens.choose(rng).unwrap()));
                depth += 1;
            }
            1 => {
                w.push(Token::close(*closes.choose(rng).unwrap()));
                depth -= 1;
            }
            _ => w.push(Token::neutral(*neutrals.choose(rng).unwrap())),
        }
    }
    while depth > 0 {
        w.push(Token::close(*closes.choose(rng).unwrap()));
        depth -= 1;
    }
    w
}

/// True when every output of `t` on `w` has exactly one accepting run.
pub fn unambiguous_on(t: &Vpt, w: &[Token]) -> Option<BTreeMap<OutputWord, u64>> {
    let runs = oracle_runs(t, w, 2_000_000u64).ok()?;
    runs.values().all(|&c| c == 1).then_some(runs)
}

/// A random transducer and word on which it is I/O-unambiguous; half of
/// the machines are I/O-deterministic by construction.
pub fn unambiguous_instance(rng: &mut impl Rng, max_len: usize) -> (Vpt, Vec<Token>, BTreeSet<OutputWord>) {
    loop {
        let shape = VptShape {
            io_deterministic: rng.gen_bool(0.5),
            pairs: rng.gen_range(1..=2),
            ..VptShape::default()
        };
        let t = random_vpt(rng, shape);
        let w = random_word(rng, t.alphabet(), max_len);
        if let Some(runs) = unambiguous_on(&t, &w) {
            return (t, w, runs.into_keys().collect());
        }
    }
}

/// Every run (from an initial state, not necessarily accepting) on `w`:
/// states `q_1..q_{n+1}`, step outputs and the symbol pushed at each step.
pub struct Run {
    pub states: Vec<State>,
    pub outs: Vec<Option<OutSym>>,
    pub pushed: Vec<Option<StackSym>>,
}

pub fn all_runs(t: &Vpt, w: &[Token], cap: usize) -> Option<Vec<Run>> {
    let mut out = Vec::new();
    fn go(
        t: &Vpt,
        w: &[Token],
        cap: usize,
        cur: &mut Run,
        stack: &mut Vec<StackSym>,
        out: &mut Vec<Run>,
    ) -> bool {
        if out.len() > cap {
            return false;
        }
        let k = cur.outs.len();
        if k == w.len() {
            out.push(Run {
                states: cur.states.clone(),
                outs: cur.outs.clone(),
                pushed: cur.pushed.clone(),
            });
            return true;
        }
        let q = *cur.states.last().unwrap();
        let tok = w[k];
        let mut next: Vec<(Option<OutSym>, State, Option<StackSym>, bool)> = Vec::new();
        match tok.kind {
            Kind::Open => {
                for tr in t.pushes() {
                    if tr.from == q && tr.sym == tok.sym {
                        next.push((tr.out, tr.to, Some(tr.push), false));
                    }
                }
            }
            Kind::Close => {
                for tr in t.pops() {
                    if tr.from == q && tr.sym == tok.sym && stack.last() == Some(&tr.pop) {
                        next.push((tr.out, tr.to, None, true));
                    }
                }
            }
            Kind::Neutral => {
                for tr in t.neutrals() {
                    if tr.from == q && tr.sym == tok.sym {
                        next.push((tr.out, tr.to, None, false));
                    }
                }
            }
        }
        for (o, to, push, pop) in next {
            let popped = if pop { stack.pop() } else { None };
            if let Some(x) = push {
                stack.push(x);
            }
            cur.states.push(to);
            cur.outs.push(o);
            cur.pushed.push(push);
            let ok = go(t, w, cap, cur, stack, out);
            cur.states.pop();
            cur.outs.pop();
            cur.pushed.pop();
            if push.is_some() {
                stack.pop();
            }
            if let Some(x) = popped {
                stack.push(x);
            }
            if !ok {
                return false;
            }
        }
        true
    }
    for &q0 in t.initial() {
        let mut cur = Run {
            states: vec![q0],
            outs: Vec::new(),
            pushed: Vec::new(),
        };
        if !go(t, w, cap, &mut cur, &mut Vec::new(), &mut out) {
            return None;
        }
    }
    Some(out)
}

pub type Grouped<K> = BTreeMap<K, BTreeSet<OutputWord>>;

/// Level entries and, below the outermost level, stack entries.
pub type Tables = (Grouped<(State, State)>, Option<Grouped<(State, StackSym, State)>>);

/// Expected contents of the current-level table and of the topmost stack
/// table after reading `w[..k-1]`. With `currlevel(k) = ⟨j,k⟩`, level
/// entries group the runs over `w[..k-1]` by `(q_j, q_k)`; with
/// `lowerlevel(k) = ⟨i,j-1⟩`, stack entries group the runs over
/// `w[..j-1]` by `(q_i, x, q_j)` where `x` is pushed by letter `j-1`.
pub fn expected_tables(
    t: &Vpt,
    w: &[Token],
    k: usize,
) -> Option<Tables> {
    let cur = currlevel(w, k).unwrap();
    let low = lowerlevel(w, k).unwrap();
    let j = cur.start;
    let mut s: Grouped<(State, State)> = BTreeMap::new();
    for r in &all_runs(t, &w[..k - 1], 200_000)? {
        s.entry((r.states[j - 1], r.states[k - 1]))
            .or_default()
            .insert(out_of_subrun(&r.outs, j, k));
    }
    let top = match low {
        None => None,
        Some(l) => {
            let i = l.start;
            let mut top: Grouped<(State, StackSym, State)> = BTreeMap::new();
            for r in &all_runs(t, &w[..j - 1], 200_000)? {
                let x = r.pushed[j - 2].expect("the letter before a level is an open");
                top.entry((r.states[i - 1], x, r.states[j - 1]))
                    .or_default()
                    .insert(out_of_subrun(&r.outs, i, j));
            }
            Some(top)
        }
    };
    Some((s, top))
}

/// Language of every table entry.
pub fn tables_languages<K: Ord + Copy>(
    ecs: &Ecs,
    table: impl IntoIterator<Item = (K, NodeId)>,
) -> Grouped<K> {
    table
        .into_iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(k, v)| (k, enumerate_all(ecs, v).into_iter().collect()))
        .collect()
}

/// `currlevel` by its definition: the least `j` with `w[j..k-1]`
/// well-nested.
pub fn brute_currlevel(w: &[Token], k: usize) -> Span {
    for j in 1..=k {
        if vpt_enum::nested::validate_nestedness(&w[j - 1..k - 1]) {
            return Span::new(j, k);
        }
    }
    unreachable!("the empty span is well-nested")
}

// ---------------------------------------------------------------------
// Grammars.

/// Status of one variable: 0 unopened, 1 open, 2 closed; packed base 3.
fn digit(s: u32, v: u32) -> u32 {
    (s / 3u32.pow(v)) % 3
}

/// A random functional grammar. Every nonterminal has a type: the capture
/// status when it starts and when its derivation ends. Productions only
/// combine nonterminals whose types fit, so every complete derivation
/// from the start symbol opens and closes each variable once. The types
/// always include one capture path from nothing to all closed, so the
/// grammar usually has complete derivations.
pub fn random_vpeg(rng: &mut impl Rng, vars: usize, extra_nts: usize) -> Vpeg {
    let all_closed: u32 = (0..vars as u32).map(|v| 2 * 3u32.pow(v)).sum();
    let le = |a: u32, b: u32| (0..vars as u32).all(|v| digit(a, v) <= digit(b, v));
    let statuses: Vec<u32> = (0..3u32.pow(vars as u32)).collect();

    // A random order of the 2|X| capture steps.
    let mut steps: Vec<u32> = (0..vars as u32).flat_map(|v| [v, v]).collect();
    steps.shuffle(rng);
    let mut types: Vec<(u32, u32)> = Vec::new();
    let mut cur = 0;
    types.push((cur, all_closed));
    for v in steps {
        cur += 3u32.pow(v);
        if !types.contains(&(cur, all_closed)) {
            types.push((cur, all_closed));
        }
    }
    for _ in 0..rng.gen_range(0..=extra_nts) {
        let a = *statuses.choose(rng).unwrap();
        let bs: Vec<u32> = statuses.iter().copied().filter(|&b| le(a, b)).collect();
        types.push((a, *bs.choose(rng).unwrap()));
    }

    let mut al = StructuredAlphabet::new();
    let a = al.declare(Kind::Open, "a").unwrap();
    let ac = al.declare(Kind::Close, "a").unwrap();
    let c = al.declare(Kind::Open, "c").unwrap();
    let cc = al.declare(Kind::Close, "c").unwrap();
    let b = al.declare(Kind::Neutral, "b").unwrap();
    let brackets = [(a, ac), (c, cc), (a, cc)];

    let with_type = |t: (u32, u32)| -> Vec<u32> {
        types
            .iter()
            .enumerate()
            .filter(|(_, &x)| x == t)
            .map(|(i, _)| i as u32)
            .collect()
    };
    let mut productions = Vec::new();
    for (lhs, &(from, to)) in types.iter().enumerate() {
        let lhs = lhs as u32;
        let mut candidates = Vec::new();
        if from == to {
            candidates.push(Body::Eps);
        }
        for nb in with_type((from, to)) {
            candidates.push(Body::Letter(b, nb));
        }
        for v in 0..vars as u32 {
            let d = digit(from, v);
            if d < 2 {
                let m = from + 3u32.pow(v);
                if le(m, to) {
                    for nb in with_type((m, to)) {
                        candidates.push(Body::Capture(Capture { var: v, open: d == 0 }, nb));
                    }
                }
            }
        }
        for &m in statuses.iter().filter(|&&m| le(from, m) && le(m, to)) {
            for inner in with_type((from, m)) {
                for next in with_type((m, to)) {
                    let (open, close) = *brackets.choose(rng).unwrap();
                    candidates.push(Body::Nest {
                        open,
                        inner,
                        close,
                        next,
                    });
                }
            }
        }
        candidates.shuffle(rng);
        let count = rng.gen_range(1..=3).min(candidates.len());
        for body in candidates.into_iter().take(count) {
            productions.push(vpt_enum::spanner::Production { lhs, body });
        }
    }
    Vpeg {
        vars: ["x", "y"].iter().take(vars).map(|s| s.to_string()).collect(),
        nonterminals: (0..types.len()).map(|i| format!("N{i}")).collect(),
        alphabet: al,
        start: 0,
        productions,
    }
}

/// Partial derivations of `A` from letter index `i` (0-based): the index
/// after the derived part, the captures in order with their positions,
/// the captures used so far, and the number of derivations.
type Derivations = BTreeMap<(usize, Vec<(Capture, usize)>, CaptureSet), u64>;

fn derive(
    g: &Vpeg,
    d: &[Token],
    a: u32,
    i: usize,
    used: CaptureSet,
    memo: &mut HashMap<(u32, usize, CaptureSet), Derivations>,
) -> Derivations {
    if let Some(r) = memo.get(&(a, i, used)) {
        return r.clone();
    }
    let mut out: Derivations = BTreeMap::new();
    for p in g.productions.iter().filter(|p| p.lhs == a) {
        match p.body {
            Body::Eps => *out.entry((i, Vec::new(), used)).or_default() += 1,
            Body::Letter(s, nb) => {
                if d.get(i) == Some(&Token::neutral(s)) {
                    for ((j, ev, u), c) in derive(g, d, nb, i + 1, used, memo) {
                        *out.entry((j, ev, u)).or_default() += c;
                    }
                }
            }
            Body::Capture(cap, nb) => {
                // Repeating a capture can never give a valid ref-word.
                if used & cap.bit() != 0 {
                    continue;
                }
                for ((j, ev, u), c) in derive(g, d, nb, i, used | cap.bit(), memo) {
                    let mut e = vec![(cap, i + 1)];
                    e.extend(ev);
                    *out.entry((j, e, u)).or_default() += c;
                }
            }
            Body::Nest {
                open,
                inner,
                close,
                next,
            } => {
                if d.get(i) != Some(&Token::open(open)) {
                    continue;
                }
                for ((j, ev, u), c) in derive(g, d, inner, i + 1, used, memo) {
                    if d.get(j) != Some(&Token::close(close)) {
                        continue;
                    }
                    for ((j2, ev2, u2), c2) in derive(g, d, next, j + 1, u, memo) {
                        let mut e = ev.clone();
                        e.extend(ev2);
                        *out.entry((j2, e, u2)).or_default() += c * c2;
                    }
                }
            }
        }
    }
    memo.insert((a, i, used), out.clone());
    out
}

/// `⟦G⟧(d)` from the ref-word semantics, plus the largest number of
/// derivations of a single ref-word with plain part `d`.
pub fn refword_oracle(g: &Vpeg, d: &[Token]) -> (BTreeSet<SpanMapping>, u64) {
    let mut memo = HashMap::new();
    let all = derive(g, d, g.start, 0, 0, &mut memo);
    let mut out = BTreeSet::new();
    let mut max_count = 0;
    for ((j, ev, _), c) in all {
        if j != d.len() {
            continue;
        }
        max_count = max_count.max(c);
        let mut start: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
        let mut end: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
        for (idx, &(cap, pos)) in ev.iter().enumerate() {
            let slot = if cap.open { &mut start } else { &mut end };
            slot.insert(cap.var, (idx, pos));
        }
        let valid = (0..g.vars.len() as u32).all(|v| match (start.get(&v), end.get(&v)) {
            (Some(&(i1, _)), Some(&(i2, _))) => i1 < i2,
            _ => false,
        }) && ev.len() == 2 * g.vars.len();
        if !valid {
            continue;
        }
        let m = g
            .vars
            .iter()
            .enumerate()
            .map(|(v, name)| {
                let s = start[&(v as u32)].1;
                let e = end[&(v as u32)].1;
                (name.clone(), Span::new(s, e))
            })
            .collect();
        out.insert(SpanMapping(m));
    }
    (out, max_count)
}

/// Number of leftmost derivations of the ref-word `r`.
pub fn derivations_of(g: &Vpeg, r: &[RefLetter]) -> u64 {
    fn go(g: &Vpeg, r: &[RefLetter], a: u32, i: usize, memo: &mut HashMap<(u32, usize), BTreeMap<usize, u64>>) -> BTreeMap<usize, u64> {
        if let Some(m) = memo.get(&(a, i)) {
            return m.clone();
        }
        let mut out: BTreeMap<usize, u64> = BTreeMap::new();
        for p in g.productions.iter().filter(|p| p.lhs == a) {
            match p.body {
                Body::Eps => *out.entry(i).or_default() += 1,
                Body::Letter(s, nb) => {
                    if r.get(i) == Some(&RefLetter::Letter(Token::neutral(s))) {
                        for (j, c) in go(g, r, nb, i + 1, memo) {
                            *out.entry(j).or_default() += c;
                        }
                    }
                }
                Body::Capture(cap, nb) => {
                    if r.get(i) == Some(&RefLetter::Capture(cap)) {
                        for (j, c) in go(g, r, nb, i + 1, memo) {
                            *out.entry(j).or_default() += c;
                        }
                    }
                }
                Body::Nest {
                    open,
                    inner,
                    close,
                    next,
                } => {
                    if r.get(i) != Some(&RefLetter::Letter(Token::open(open))) {
                        continue;
                    }
                    for (j, c) in go(g, r, inner, i + 1, memo) {
                        if r.get(j) != Some(&RefLetter::Letter(Token::close(close))) {
                            continue;
                        }
                        for (j2, c2) in go(g, r, next, j + 1, memo) {
                            *out.entry(j2).or_default() += c * c2;
                        }
                    }
                }
            }
        }
        memo.insert((a, i), out.clone());
        out
    }
    go(g, r, g.start, 0, &mut HashMap::new())
        .get(&r.len())
        .copied()
        .unwrap_or(0)
}

/// Every well-nested ref-word up to `max_len` over the grammar's letters
/// and captures.
pub fn all_ref_words(g: &Vpeg, max_len: usize) -> Vec<Vec<RefLetter>> {
    let mut letters: Vec<RefLetter> = g.alphabet.letters().into_iter().map(RefLetter::Letter).collect();
    for v in 0..g.vars.len() as u32 {
        letters.push(RefLetter::Capture(Capture { var: v, open: true }));
        letters.push(RefLetter::Capture(Capture { var: v, open: false }));
    }
    let mut out = Vec::new();
    fn go(letters: &[RefLetter], max_len: usize, depth: usize, cur: &mut Vec<RefLetter>, out: &mut Vec<Vec<RefLetter>>) {
        if depth == 0 {
            out.push(cur.clone());
        }
        if cur.len() == max_len {
            return;
        }
        for &l in letters {
            let d = match l {
                RefLetter::Letter(t) if t.kind == Kind::Open => {
                    if depth + 1 > max_len - cur.len() - 1 {
                        continue;
                    }
                    depth + 1
                }
                RefLetter::Letter(t) if t.kind == Kind::Close => {
                    if depth == 0 {
                        continue;
                    }
                    depth - 1
                }
                _ => depth,
            };
            cur.push(l);
            go(letters, max_len, d, cur, out);
            cur.pop();
        }
    }
    go(&letters, max_len, 0, &mut Vec::new(), &mut out);
    out
}

/// Plain words sampled from the grammar by random derivations, so that
/// documents are in the language more often than uniform words are.
pub fn sample_document(rng: &mut impl Rng, g: &Vpeg, max_len: usize) -> Option<Vec<Token>> {
    fn go(rng: &mut impl Rng, g: &Vpeg, a: u32, budget: &mut usize, depth: usize, out: &mut Vec<Token>) -> bool {
        if depth > 40 {
            return false;
        }
        let ps: Vec<_> = g.productions.iter().filter(|p| p.lhs == a).collect();
        let Some(p) = ps.choose(rng) else {
            return false;
        };
        match p.body {
            Body::Eps => true,
            Body::Letter(s, nb) => {
                if *budget == 0 {
                    return false;
                }
                *budget -= 1;
                out.push(Token::neutral(s));
                go(rng, g, nb, budget, depth + 1, out)
            }
            Body::Capture(_, nb) => go(rng, g, nb, budget, depth + 1, out),
            Body::Nest {
                open,
                inner,
                close,
                next,
            } => {
                if *budget < 2 {
                    return false;
                }
                *budget -= 2;
                out.push(Token::open(open));
                if !go(rng, g, inner, budget, depth + 1, out) {
                    return false;
                }
                out.push(Token::close(close));
                go(rng, g, next, budget, depth + 1, out)
            }
        }
    }
    for _ in 0..20 {
        let mut out = Vec::new();
        let mut budget = max_len;
        if go(rng, g, g.start, &mut budget, 0, &mut out) {
            return Some(out);
        }
    }
    None
}

// ---------------------------------------------------------------------
// ECS operation sequences.

/// Outcome of a random ECS operation sequence.
#[derive(Debug, Default)]
pub struct EcsReport {
    pub ops: usize,
    pub enumerated_words: usize,
    pub max_tree_ratio: f64,
    pub violations: Vec<String>,
}

type Lang = BTreeSet<OutputWord>;

fn positions(l: &Lang) -> Option<(vpt_enum::Pos, vpt_enum::Pos)> {
    let mut it = l.iter().flatten().map(|&(_, p)| p);
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), p| (lo.min(p), hi.max(p))))
}

/// Enumerates `v` through output trees, checking the tree size against
/// the printed word at every step.
pub fn check_trees(ecs: &Ecs, v: NodeId, lang: &Lang, factor: usize, report: &mut EcsReport) {
    use vpt_enum::ecs::EpsCase;
    use vpt_enum::enumtree::OutputTree;
    if v.is_empty() {
        if !lang.is_empty() {
            report.violations.push("sentinel with a non-empty shadow".into());
        }
        return;
    }
    let mut got: Vec<OutputWord> = Vec::new();
    let root = match ecs.eps_case(v) {
        EpsCase::IsEps => None,
        EpsCase::Case3 => Some(ecs.right(v)),
        EpsCase::NoEps => Some(v),
        EpsCase::Other => {
            report.violations.push(format!("{v:?} is not ε-safe"));
            return;
        }
    };
    if ecs.contains_epsilon(v) {
        got.push(Vec::new());
    }
    if let Some(root) = root {
        let mut t = OutputTree::new(ecs, root);
        loop {
            t.finish();
            if t.is_exhausted() {
                break;
            }
            let len = t.word().len();
            let ratio = t.size() as f64 / len.max(1) as f64;
            report.max_tree_ratio = report.max_tree_ratio.max(ratio);
            if t.size() > factor * len.max(1) {
                let unions = t
                    .nodes_preorder()
                    .into_iter()
                    .filter(|&n| ecs.label(n) == vpt_enum::ecs::Label::Union)
                    .count();
                report.violations.push(format!(
                    "tree of {} nodes ({unions} unions) for a word of length {len}",
                    t.size()
                ));
            }
            if t.print() != *t.word() {
                report.violations.push("print differs from the streamed word".into());
            }
            got.push(t.take_and_advance().unwrap());
        }
    }
    report.enumerated_words += got.len();
    let set: Lang = got.iter().cloned().collect();
    if set.len() != got.len() {
        report.violations.push(format!("{v:?} enumerates duplicates"));
    }
    if set != *lang {
        report.violations.push(format!("{v:?} denotes the wrong language"));
    }
}

/// Runs `n_ops` random operations on a fresh arena against shadow
/// languages. Languages larger than `lang_cap` are not built.
pub fn ecs_campaign(seed: u64, n_ops: usize, lang_cap: usize, tree_factor: usize) -> EcsReport {
    let mut rng = rng(seed);
    let mut ecs = Ecs::new();
    let mut report = EcsReport::default();
    let mut pool: Vec<(NodeId, Lang)> = vec![(NodeId::EMPTY, Lang::new())];
    let mut snapshots: Vec<(NodeId, Lang)> = Vec::new();
    let mut next_pos: vpt_enum::Pos = 1;
    let mut checked_upto = 0usize;
    let pick = |rng: &mut ChaCha8Rng, pool: &Vec<(NodeId, Lang)>| {
        // Favour recent nodes so that languages grow.
        let n = pool.len();
        let i = if rng.gen_bool(0.7) {
            n - 1 - rng.gen_range(0..n.min(16))
        } else {
            rng.gen_range(0..n)
        };
        pool[i].clone()
    };
    while report.ops < n_ops {
        let before = ecs.len();
        let (kind, v, lang) = match rng.gen_range(0..10) {
            0..=2 => {
                let o = rng.gen_range(0..3);
                let p = next_pos;
                next_pos += 1;
                let v = ecs.add(o, p);
                ("add", v, BTreeSet::from([vec![(o, p)]]))
            }
            3 => ("epsilon", ecs.epsilon(), BTreeSet::from([Vec::new()])),
            4..=6 => {
                let (a, la) = pick(&mut rng, &pool);
                let (b, lb) = pick(&mut rng, &pool);
                let nonempty_a = la.iter().filter(|w| !w.is_empty());
                if nonempty_a.clone().any(|w| lb.contains(w)) {
                    continue;
                }
                let u: Lang = la.union(&lb).cloned().collect();
                if u.len() > lang_cap {
                    continue;
                }
                ("union", ecs.union(a, b), u)
            }
            _ => {
                let (mut a, mut la) = pick(&mut rng, &pool);
                let (mut b, mut lb) = pick(&mut rng, &pool);
                match (positions(&la), positions(&lb)) {
                    (Some((_, ha)), Some((lo_b, _))) if ha < lo_b => {}
                    (Some((lo_a, _)), Some((_, hb))) if hb < lo_a => {
                        std::mem::swap(&mut a, &mut b);
                        std::mem::swap(&mut la, &mut lb);
                    }
                    (None, _) | (_, None) => {}
                    _ => continue,
                }
                if la.len() * lb.len() > lang_cap {
                    continue;
                }
                let mut p = Lang::new();
                for x in &la {
                    for y in &lb {
                        let mut w = x.clone();
                        w.extend(y.iter().copied());
                        p.insert(w);
                    }
                }
                ("prod", ecs.prod(a, b), p)
            }
        };
        report.ops += 1;
        let created = ecs.len() - before;
        let budget = match kind {
            "add" | "epsilon" => 1,
            "union" => 4,
            _ => 5,
        };
        if created > budget {
            report
                .violations
                .push(format!("{kind} created {created} nodes (budget {budget})"));
        }
        for id in ecs.ids().skip(checked_upto) {
            if ecs.output_depth(id) > 2 {
                report.violations.push(format!("{id:?} has output depth {}", ecs.output_depth(id)));
            }
        }
        checked_upto = ecs.len();
        if !v.is_empty() && !ecs.is_safe(v) {
            report.violations.push(format!("{kind} returned an unsafe node"));
        }
        check_trees(&ecs, v, &lang, tree_factor, &mut report);
        if rng.gen_bool(0.01) {
            snapshots.push((v, lang.clone()));
        }
        pool.push((v, lang));
    }
    for (v, lang) in &snapshots {
        let got: Lang = if v.is_empty() {
            Lang::new()
        } else {
            enumerate_all(&ecs, *v).into_iter().collect()
        };
        if got != *lang {
            report.violations.push(format!("snapshot {v:?} changed"));
        }
    }
    report
}
