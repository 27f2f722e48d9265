//! Structured alphabets, document tokens and the span bookkeeping of
//! well-nested words.
//!
//! Document syntax is whitespace-separated tokens: `<x` opens `x`, `x>`
//! closes `x`, and a bare `x` is the neutral letter `x`. A `#` starts a
//! comment that runs to the end of the line.

use std::collections::{HashMap, VecDeque};
use std::io::BufRead;

use crate::{Error, Result};

/// Index of a symbol name in a [`StructuredAlphabet`].
pub type Sym = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    Open,
    Close,
    Neutral,
}

impl Kind {
    fn bit(self) -> u8 {
        match self {
            Kind::Open => 1,
            Kind::Close => 2,
            Kind::Neutral => 4,
        }
    }
}

/// One document letter: a symbol name tagged with its class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token {
    pub kind: Kind,
    pub sym: Sym,
}

impl Token {
    pub fn open(sym: Sym) -> Self {
        Token { kind: Kind::Open, sym }
    }
    pub fn close(sym: Sym) -> Self {
        Token { kind: Kind::Close, sym }
    }
    pub fn neutral(sym: Sym) -> Self {
        Token { kind: Kind::Neutral, sym }
    }
}

/// Open, close and neutral letters over a shared table of names.
///
/// `<a` and `a>` share the name `a` but are distinct letters. A name used
/// as a neutral letter may not also be used for an open or close letter.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StructuredAlphabet {
    names: Vec<String>,
    index: HashMap<String, Sym>,
    kinds: Vec<u8>,
}

impl StructuredAlphabet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares the letter `(kind, name)` and returns the symbol index.
    pub fn declare(&mut self, kind: Kind, name: &str) -> Result<Sym> {
        check_name(name).map_err(Error::Model)?;
        let sym = match self.index.get(name) {
            Some(&s) => s,
            None => {
                let s = self.names.len() as Sym;
                self.names.push(name.to_string());
                self.index.insert(name.to_string(), s);
                self.kinds.push(0);
                s
            }
        };
        let bits = self.kinds[sym as usize] | kind.bit();
        if bits & 4 != 0 && bits & 3 != 0 {
            return Err(Error::Model(format!(
                "symbol `{name}` is used both as a neutral letter and as a bracket"
            )));
        }
        self.kinds[sym as usize] = bits;
        Ok(sym)
    }

    /// Declares a letter written in document syntax (`<a`, `a>` or `a`).
    pub fn declare_token(&mut self, text: &str) -> Result<Token> {
        let (kind, name) = split_token(text)
            .ok_or_else(|| Error::Model(format!("malformed letter `{text}`")))?;
        let sym = self.declare(kind, name)?;
        Ok(Token { kind, sym })
    }

    pub fn lookup(&self, kind: Kind, name: &str) -> Option<Sym> {
        let &s = self.index.get(name)?;
        self.contains(kind, s).then_some(s)
    }

    pub fn contains(&self, kind: Kind, sym: Sym) -> bool {
        self.kinds
            .get(sym as usize)
            .is_some_and(|b| b & kind.bit() != 0)
    }

    pub fn name(&self, sym: Sym) -> &str {
        &self.names[sym as usize]
    }

    /// Number of distinct symbol names.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// All letters of one class, in declaration order.
    pub fn symbols(&self, kind: Kind) -> impl Iterator<Item = Sym> + '_ {
        (0..self.names.len() as Sym).filter(move |&s| self.contains(kind, s))
    }

    /// Every letter of the alphabet.
    pub fn letters(&self) -> Vec<Token> {
        let mut out = Vec::new();
        for kind in [Kind::Open, Kind::Close, Kind::Neutral] {
            out.extend(self.symbols(kind).map(|sym| Token { kind, sym }));
        }
        out
    }

    /// Renders a token in document syntax.
    pub fn render(&self, t: Token) -> String {
        let n = self.name(t.sym);
        match t.kind {
            Kind::Open => format!("<{n}"),
            Kind::Close => format!("{n}>"),
            Kind::Neutral => n.to_string(),
        }
    }

    /// Parses one token against this alphabet. `pos` is only used in errors.
    pub fn parse_token(&self, text: &str, pos: usize) -> Result<Token> {
        let (kind, name) = split_token(text).ok_or_else(|| Error::MalformedToken {
            pos,
            text: text.to_string(),
        })?;
        if check_name(name).is_err() {
            return Err(Error::MalformedToken {
                pos,
                text: text.to_string(),
            });
        }
        let sym = self.lookup(kind, name).ok_or_else(|| Error::UnknownSymbol {
            pos,
            text: text.to_string(),
        })?;
        Ok(Token { kind, sym })
    }
}

fn split_token(text: &str) -> Option<(Kind, &str)> {
    if let Some(rest) = text.strip_prefix('<') {
        Some((Kind::Open, rest))
    } else if let Some(rest) = text.strip_suffix('>') {
        Some((Kind::Close, rest))
    } else if text.is_empty() {
        None
    } else {
        Some((Kind::Neutral, text))
    }
}

fn check_name(name: &str) -> std::result::Result<(), String> {
    if name.is_empty() {
        return Err("empty symbol name".into());
    }
    if name
        .chars()
        .any(|c| c.is_whitespace() || matches!(c, '<' | '>' | '#'))
    {
        return Err(format!("invalid symbol name `{name}`"));
    }
    Ok(())
}

/// Pull-based tokenizer over a buffered reader.
///
/// Lines are read on demand, so a document is never buffered as a whole.
pub struct Tokenizer<'a, R> {
    alphabet: &'a StructuredAlphabet,
    reader: R,
    pending: VecDeque<String>,
    pos: usize,
    done: bool,
}

impl<'a, R: BufRead> Tokenizer<'a, R> {
    pub fn new(alphabet: &'a StructuredAlphabet, reader: R) -> Self {
        Tokenizer {
            alphabet,
            reader,
            pending: VecDeque::new(),
            pos: 0,
            done: false,
        }
    }

    /// Returns the next token, or `Ok(None)` at end of input.
    pub fn next_token(&mut self) -> Result<Option<Token>> {
        loop {
            if let Some(text) = self.pending.pop_front() {
                self.pos += 1;
                return self.alphabet.parse_token(&text, self.pos).map(Some);
            }
            if self.done {
                return Ok(None);
            }
            let mut line = String::new();
            if self.reader.read_line(&mut line)? == 0 {
                self.done = true;
                continue;
            }
            let content = line.split('#').next().unwrap_or("");
            self.pending
                .extend(content.split_whitespace().map(str::to_string));
        }
    }
}

impl<R: BufRead> Iterator for Tokenizer<'_, R> {
    type Item = Result<Token>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_token().transpose()
    }
}

/// Tokenizes a whole string.
pub fn tokenize(text: &str, alphabet: &StructuredAlphabet) -> Result<Vec<Token>> {
    Tokenizer::new(alphabet, text.as_bytes()).collect()
}

/// Renders tokens in document syntax, separated by single spaces.
pub fn serialize(tokens: &[Token], alphabet: &StructuredAlphabet) -> String {
    tokens
        .iter()
        .map(|&t| alphabet.render(t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// True iff the word is well-nested. Any open may be closed by any close.
pub fn validate_nestedness(tokens: &[Token]) -> bool {
    let mut depth = 0usize;
    for t in tokens {
        match t.kind {
            Kind::Open => depth += 1,
            Kind::Close => {
                if depth == 0 {
                    return false;
                }
                depth -= 1;
            }
            Kind::Neutral => {}
        }
    }
    depth == 0
}

/// Checks well-nestedness, reporting the first offending position.
pub fn check_nestedness(tokens: &[Token]) -> Result<()> {
    let mut opens = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        match t.kind {
            Kind::Open => opens.push(i + 1),
            Kind::Close => {
                if opens.pop().is_none() {
                    return Err(Error::UnbalancedClose(i + 1));
                }
            }
            Kind::Neutral => {}
        }
    }
    match opens.pop() {
        Some(p) => Err(Error::UnclosedOpen(p)),
        None => Ok(()),
    }
}

/// The span `⟨start, end⟩` covering letters `start..end` (1-based, end
/// exclusive).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }
}

/// Start of the longest well-nested span ending at `k`, or an error when
/// the prefix before `k` closes more than it opens.
fn level_start(tokens: &[Token], k: usize) -> Result<usize> {
    if k == 0 || k > tokens.len() + 1 {
        return Err(Error::PositionOutOfRange {
            pos: k,
            max: tokens.len() + 1,
        });
    }
    let mut opens: Vec<usize> = Vec::new();
    for (i, t) in tokens[..k - 1].iter().enumerate() {
        match t.kind {
            Kind::Open => opens.push(i + 1),
            Kind::Close => {
                opens.pop().ok_or(Error::UnbalancedClose(i + 1))?;
            }
            Kind::Neutral => {}
        }
    }
    Ok(opens.last().map_or(1, |&o| o + 1))
}

/// `currlevel(k)`: the span `⟨j,k⟩` with the least `j` such that it is
/// well-nested.
pub fn currlevel(tokens: &[Token], k: usize) -> Result<Span> {
    Ok(Span::new(level_start(tokens, k)?, k))
}

/// `lowerlevel(k)`: `currlevel(j-1)` where `currlevel(k) = ⟨j,k⟩`, or
/// `None` when `j = 1`.
pub fn lowerlevel(tokens: &[Token], k: usize) -> Result<Option<Span>> {
    let j = level_start(tokens, k)?;
    if j == 1 {
        return Ok(None);
    }
    currlevel(tokens, j - 1).map(Some)
}

/// For every position, the position of its matching partner (opens map to
/// closes and back). Neutral letters map to `None`.
pub fn matching(tokens: &[Token]) -> Result<Vec<Option<usize>>> {
    let mut out = vec![None; tokens.len()];
    let mut opens = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        match t.kind {
            Kind::Open => opens.push(i),
            Kind::Close => {
                let o = opens.pop().ok_or(Error::UnbalancedClose(i + 1))?;
                out[o] = Some(i + 1);
                out[i] = Some(o + 1);
            }
            Kind::Neutral => {}
        }
    }
    if let Some(&o) = opens.last() {
        return Err(Error::UnclosedOpen(o + 1));
    }
    Ok(out)
}
