//! Visibly pushdown automata and their determinization.
//!
//! The deterministic automaton tracks, after reading a prefix, the set of
//! pairs `(p, q)` such that some run reads the current level from `p` to
//! `q`. Its stack holds the matching triples `(p, x, q)` of the level below.
//! Acceptance checking runs the same construction on the fly, which keeps
//! it polynomial in the word length.

use std::collections::HashMap;
use std::sync::Mutex;

use indexmap::IndexSet;

use crate::format;
use crate::nested::{check_nestedness, Kind, StructuredAlphabet, Sym, Token};
use crate::vpt::Vpt;
use crate::{Error, OutSym, Result, StackSym, State};

/// A sorted, duplicate-free set of state pairs.
pub type Pairs = Vec<(State, State)>;
/// A sorted, duplicate-free set of `(state, stack symbol, state)` triples.
pub type Triples = Vec<(State, StackSym, State)>;

fn normalize<T: Ord>(mut v: Vec<T>) -> Vec<T> {
    v.sort_unstable();
    v.dedup();
    v
}

fn key_matches(filter: Option<Option<OutSym>>, out: Option<OutSym>) -> bool {
    filter.is_none_or(|f| f == out)
}

/// Opening `<a` from `s`: the new level starts at `{(q,q)}` and the pushed
/// symbol remembers `{(p, x, q)}`. With `Some(key)`, only transitions whose
/// output equals `key` are used.
pub fn open_subset(t: &Vpt, s: &Pairs, sym: Sym, filter: Option<Option<OutSym>>) -> (Pairs, Triples) {
    let mut next = Vec::new();
    let mut top = Vec::new();
    for &(p, p2) in s {
        for tr in t.pushes_from(p2, sym) {
            if key_matches(filter, tr.out) {
                next.push((tr.to, tr.to));
                top.push((p, tr.push, tr.to));
            }
        }
    }
    (normalize(next), normalize(top))
}

/// Closing `a>` from `s` with `top` on the stack: `{(p, q)}` for
/// `(p, x, p′) ∈ top`, `(p′, q′) ∈ s` and a pop of `x` from `q′` to `q`.
pub fn close_subset(t: &Vpt, s: &Pairs, top: &Triples, sym: Sym, filter: Option<Option<OutSym>>) -> Pairs {
    let mut next = Vec::new();
    for &(p, x, p2) in top {
        let lo = s.partition_point(|&(a, _)| a < p2);
        for &(_, q2) in s[lo..].iter().take_while(|&&(a, _)| a == p2) {
            for tr in t.pops_from(q2, sym) {
                if tr.pop == x && key_matches(filter, tr.out) {
                    next.push((p, tr.to));
                }
            }
        }
    }
    normalize(next)
}

/// Reading a neutral letter composes the second components.
pub fn neutral_subset(t: &Vpt, s: &Pairs, sym: Sym, filter: Option<Option<OutSym>>) -> Pairs {
    let mut next = Vec::new();
    for &(p, q) in s {
        for tr in t.neutrals_from(q, sym) {
            if key_matches(filter, tr.out) {
                next.push((p, tr.to));
            }
        }
    }
    normalize(next)
}

/// Anything that decides membership of well-nested words.
pub trait Acceptor {
    fn alphabet(&self) -> &StructuredAlphabet;
    fn accepts(&self, tokens: &[Token]) -> Result<bool>;
}

/// A visibly pushdown automaton. Stored as a transducer without outputs.
#[derive(Clone, Debug)]
pub struct Vpa {
    machine: Vpt,
}

impl Vpa {
    /// Drops the outputs of `t`.
    pub fn from_vpt(t: &Vpt) -> Self {
        Vpa {
            machine: t.erase_outputs(),
        }
    }

    /// Parses the transducer text format; `out` clauses are not allowed.
    pub fn parse(text: &str) -> Result<Self> {
        let t = format::parse_machine(text)?;
        if t.num_outputs() > 0
            || t.pushes().iter().any(|x| x.out.is_some())
            || t.pops().iter().any(|x| x.out.is_some())
            || t.neutrals().iter().any(|x| x.out.is_some())
        {
            return Err(Error::Model("automaton files take no outputs".into()));
        }
        Ok(Vpa { machine: t })
    }

    pub fn machine(&self) -> &Vpt {
        &self.machine
    }

    fn initial_pairs(&self) -> Pairs {
        self.machine.initial().iter().map(|&q| (q, q)).collect()
    }

    fn is_accepting(&self, s: &Pairs) -> bool {
        s.iter()
            .any(|&(p, q)| self.machine.is_initial(p) && self.machine.is_final(q))
    }
}

impl Acceptor for Vpa {
    fn alphabet(&self) -> &StructuredAlphabet {
        self.machine.alphabet()
    }

    fn accepts(&self, tokens: &[Token]) -> Result<bool> {
        check_nestedness(tokens)?;
        let t = &self.machine;
        let mut s = self.initial_pairs();
        let mut stack: Vec<Triples> = Vec::new();
        for tok in tokens {
            s = match tok.kind {
                Kind::Open => {
                    let (next, top) = open_subset(t, &s, tok.sym, None);
                    stack.push(top);
                    next
                }
                Kind::Close => {
                    let top = stack.pop().expect("checked well-nested");
                    close_subset(t, &s, &top, tok.sym, None)
                }
                Kind::Neutral => neutral_subset(t, &s, tok.sym, None),
            };
        }
        Ok(self.is_accepting(&s))
    }
}

#[derive(Debug, Default)]
struct Memo {
    states: IndexSet<Pairs>,
    stacks: IndexSet<Triples>,
    open: HashMap<(u32, Sym), (u32, u32)>,
    close: HashMap<(u32, u32, Sym), u32>,
    neutral: HashMap<(u32, Sym), u32>,
}

/// The deterministic automaton, built lazily.
///
/// Subset states and stack symbols are interned on first use and
/// transitions memoized; the memo sits behind a mutex so concurrent callers
/// see one consistent table.
#[derive(Debug)]
pub struct DetVpa {
    vpa: Vpa,
    memo: Mutex<Memo>,
}

/// One configuration of a [`DetVpa`] run: the current pair set and the set
/// of triples on top of the stack, if any.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetSnapshot {
    pub pairs: Pairs,
    pub top: Option<Triples>,
}

/// The deterministic automaton for `vpa`.
pub fn determinize(vpa: &Vpa) -> DetVpa {
    let mut memo = Memo::default();
    memo.states.insert(vpa.initial_pairs());
    DetVpa {
        vpa: vpa.clone(),
        memo: Mutex::new(memo),
    }
}

impl DetVpa {
    /// `{(q,q) | q ∈ I}`.
    pub fn initial_state(&self) -> Pairs {
        self.vpa.initial_pairs()
    }

    pub fn is_final(&self, s: &Pairs) -> bool {
        self.vpa.is_accepting(s)
    }

    /// Number of subset states materialized so far.
    pub fn materialized_states(&self) -> usize {
        self.memo.lock().expect("memo lock").states.len()
    }

    /// Runs over `tokens` and returns the configuration before each letter
    /// and after the last one (`|w|+1` snapshots).
    pub fn trace(&self, tokens: &[Token]) -> Result<Vec<DetSnapshot>> {
        check_nestedness(tokens)?;
        let t = self.vpa.machine();
        let mut memo = self.memo.lock().expect("memo lock");
        let mut s = 0u32;
        let mut stack: Vec<u32> = Vec::new();
        let mut out = Vec::with_capacity(tokens.len() + 1);
        let snap = |memo: &Memo, s: u32, stack: &[u32]| DetSnapshot {
            pairs: memo.states[s as usize].clone(),
            top: stack.last().map(|&x| memo.stacks[x as usize].clone()),
        };
        out.push(snap(&memo, s, &stack));
        for tok in tokens {
            s = match tok.kind {
                Kind::Open => {
                    let (n, x) = match memo.open.get(&(s, tok.sym)) {
                        Some(&r) => r,
                        None => {
                            let cur = memo.states[s as usize].clone();
                            let (next, top) = open_subset(t, &cur, tok.sym, None);
                            let n = memo.states.insert_full(next).0 as u32;
                            let x = memo.stacks.insert_full(top).0 as u32;
                            memo.open.insert((s, tok.sym), (n, x));
                            (n, x)
                        }
                    };
                    stack.push(x);
                    n
                }
                Kind::Close => {
                    let x = stack.pop().expect("checked well-nested");
                    match memo.close.get(&(s, x, tok.sym)) {
                        Some(&n) => n,
                        None => {
                            let cur = memo.states[s as usize].clone();
                            let top = memo.stacks[x as usize].clone();
                            let next = close_subset(t, &cur, &top, tok.sym, None);
                            let n = memo.states.insert_full(next).0 as u32;
                            memo.close.insert((s, x, tok.sym), n);
                            n
                        }
                    }
                }
                Kind::Neutral => match memo.neutral.get(&(s, tok.sym)) {
                    Some(&n) => n,
                    None => {
                        let cur = memo.states[s as usize].clone();
                        let next = neutral_subset(t, &cur, tok.sym, None);
                        let n = memo.states.insert_full(next).0 as u32;
                        memo.neutral.insert((s, tok.sym), n);
                        n
                    }
                },
            };
            out.push(snap(&memo, s, &stack));
        }
        Ok(out)
    }
}

impl Acceptor for DetVpa {
    fn alphabet(&self) -> &StructuredAlphabet {
        self.vpa.alphabet()
    }

    fn accepts(&self, tokens: &[Token]) -> Result<bool> {
        let trace = self.trace(tokens)?;
        Ok(self.is_final(&trace.last().expect("non-empty trace").pairs))
    }
}

/// Every well-nested word of length at most `max_len` over the letters of
/// `alphabet`, shortest first. Fails once more than `cap` words would be
/// produced.
pub fn well_nested_words(alphabet: &StructuredAlphabet, max_len: usize, cap: usize) -> Result<Vec<Vec<Token>>> {
    let letters = alphabet.letters();
    let mut out: Vec<Vec<Token>> = Vec::new();
    fn go(
        letters: &[Token],
        len: usize,
        depth: usize,
        cur: &mut Vec<Token>,
        out: &mut Vec<Vec<Token>>,
        cap: usize,
    ) -> Result<()> {
        let left = len - cur.len();
        if left == 0 {
            if depth == 0 {
                if out.len() >= cap {
                    return Err(Error::ResourceCap(format!("more than {cap} words")));
                }
                out.push(cur.clone());
            }
            return Ok(());
        }
        for &l in letters {
            let d = match l.kind {
                Kind::Open if depth < left - 1 => depth + 1,
                Kind::Close if depth > 0 => depth - 1,
                Kind::Neutral if depth < left => depth,
                _ => continue,
            };
            cur.push(l);
            go(letters, len, d, cur, out, cap)?;
            cur.pop();
        }
        Ok(())
    }
    for len in 0..=max_len {
        go(&letters, len, 0, &mut Vec::new(), &mut out, cap)?;
    }
    Ok(out)
}

/// Word cap of [`language_equal_upto`].
pub const WORD_CAP: usize = 2_000_000;

/// Compares acceptance on every well-nested word up to `max_len`.
pub fn language_equal_upto(a1: &dyn Acceptor, a2: &dyn Acceptor, max_len: usize) -> Result<bool> {
    if a1.alphabet() != a2.alphabet() {
        return Err(Error::Model("automata over different alphabets".into()));
    }
    for w in well_nested_words(a1.alphabet(), max_len, WORD_CAP)? {
        if a1.accepts(&w)? != a2.accepts(&w)? {
            return Ok(false);
        }
    }
    Ok(true)
}
