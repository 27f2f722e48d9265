//! Text format shared by transducers and automata.
//!
//! ```text
//! states: q0 q1
//! initial: q0
//! final: q1
//! stack: X
//! outputs: o
//! open a q0 -> q1 push X out o
//! close a q1 pop X -> q0 out -
//! neutral b q0 -> q0
//! ```
//!
//! `out -` (or no `out` clause) means the ε output. Letter classes are
//! inferred from the transitions; an optional `alphabet:` line declares
//! extra letters in document syntax (`<a a> b`). `#` starts a comment.

use std::fmt::Write as _;

use crate::nested::Kind;
use crate::vpt::{Vpt, VptBuilder};
use crate::{Error, OutSym, Result};

fn syntax(line: usize, msg: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        msg: msg.into(),
    }
}

/// Parses a transducer.
pub fn parse_machine(text: &str) -> Result<Vpt> {
    let lines: Vec<(usize, Vec<&str>)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").split_whitespace().collect()))
        .filter(|(_, toks): &(usize, Vec<&str>)| !toks.is_empty())
        .collect();

    let mut b = VptBuilder::new();
    let mut initial = Vec::new();
    let mut finals = Vec::new();
    let mut saw_states = false;
    for (line, toks) in &lines {
        let rest = &toks[1..];
        match toks[0] {
            "states:" => {
                saw_states = true;
                for s in rest {
                    b.state(s);
                }
            }
            "stack:" => rest.iter().for_each(|s| {
                b.stack_symbol(s);
            }),
            "outputs:" => rest.iter().for_each(|s| {
                b.output(s);
            }),
            "initial:" => initial.extend(rest.iter().map(|s| (*line, *s))),
            "final:" => finals.extend(rest.iter().map(|s| (*line, *s))),
            "alphabet:" => {
                for s in rest {
                    b.alphabet
                        .declare_token(s)
                        .map_err(|e| syntax(*line, e.to_string()))?;
                }
            }
            "open" | "close" | "neutral" => {}
            other => return Err(syntax(*line, format!("unexpected `{other}`"))),
        }
    }
    if !saw_states {
        return Err(syntax(0, "missing `states:` line"));
    }
    let state = |b: &VptBuilder, line: usize, s: &str| {
        b.find_state(s)
            .ok_or_else(|| syntax(line, format!("undeclared state `{s}`")))
    };
    for (line, s) in initial {
        let q = state(&b, line, s)?;
        b.set_initial(q);
    }
    for (line, s) in finals {
        let q = state(&b, line, s)?;
        b.set_final(q);
    }

    for (line, toks) in &lines {
        let line = *line;
        let kind = match toks[0] {
            "open" => Kind::Open,
            "close" => Kind::Close,
            "neutral" => Kind::Neutral,
            _ => continue,
        };
        // Core shape, then an optional `out o` suffix.
        let (core, out) = match toks.iter().position(|&t| t == "out") {
            Some(i) => {
                if i + 2 != toks.len() {
                    return Err(syntax(line, "`out` takes exactly one output"));
                }
                (&toks[..i], Some(toks[i + 1]))
            }
            None => (&toks[..], None),
        };
        let out: Option<OutSym> = match out {
            None | Some("-") => None,
            Some(o) => Some(
                b.find_output(o)
                    .ok_or_else(|| syntax(line, format!("undeclared output `{o}`")))?,
            ),
        };
        let stack = |b: &VptBuilder, x: &str| {
            b.find_stack_symbol(x)
                .ok_or_else(|| syntax(line, format!("undeclared stack symbol `{x}`")))
        };
        let sym = b
            .alphabet
            .declare(kind, core.get(1).copied().unwrap_or(""))
            .map_err(|e| syntax(line, e.to_string()))?;
        match (kind, core) {
            (Kind::Open, [_, _, q, "->", q2, "push", x]) => {
                let (q, q2, x) = (state(&b, line, q)?, state(&b, line, q2)?, stack(&b, x)?);
                b.push(q, sym, out, q2, x);
            }
            (Kind::Close, [_, _, q, "pop", x, "->", q2]) => {
                let (q, x, q2) = (state(&b, line, q)?, stack(&b, x)?, state(&b, line, q2)?);
                b.pop(q, sym, out, x, q2);
            }
            (Kind::Neutral, [_, _, q, "->", q2]) => {
                let (q, q2) = (state(&b, line, q)?, state(&b, line, q2)?);
                b.neutral(q, sym, out, q2);
            }
            _ => return Err(syntax(line, format!("malformed {} transition", toks[0]))),
        }
    }
    b.build()
}

/// Writes a transducer in the format read by [`parse_machine`].
pub fn write_machine(t: &Vpt) -> String {
    let mut s = String::new();
    let names = |n: usize, f: &dyn Fn(u32) -> String| -> String {
        (0..n as u32).map(f).collect::<Vec<_>>().join(" ")
    };
    let _ = writeln!(s, "states: {}", names(t.num_states(), &|q| t.state_name(q).to_string()));
    let initial: Vec<&str> = t.initial().iter().map(|&q| t.state_name(q)).collect();
    let _ = writeln!(s, "initial: {}", initial.join(" "));
    let finals: Vec<&str> = t.finals().map(|q| t.state_name(q)).collect();
    let _ = writeln!(s, "final: {}", finals.join(" "));
    let _ = writeln!(s, "stack: {}", names(t.num_stack_symbols(), &|x| t.stack_name(x).to_string()));
    let _ = writeln!(s, "outputs: {}", names(t.num_outputs(), &|o| t.output_name(o).to_string()));
    let letters: Vec<String> = t
        .alphabet()
        .letters()
        .into_iter()
        .map(|l| t.alphabet().render(l))
        .collect();
    let _ = writeln!(s, "alphabet: {}", letters.join(" "));
    let out = |o: Option<OutSym>| o.map_or("-".to_string(), |o| t.output_name(o).to_string());
    let a = t.alphabet();
    for tr in t.pushes() {
        let _ = writeln!(
            s,
            "open {} {} -> {} push {} out {}",
            a.name(tr.sym),
            t.state_name(tr.from),
            t.state_name(tr.to),
            t.stack_name(tr.push),
            out(tr.out)
        );
    }
    for tr in t.pops() {
        let _ = writeln!(
            s,
            "close {} {} pop {} -> {} out {}",
            a.name(tr.sym),
            t.state_name(tr.from),
            t.stack_name(tr.pop),
            t.state_name(tr.to),
            out(tr.out)
        );
    }
    for tr in t.neutrals() {
        let _ = writeln!(
            s,
            "neutral {} {} -> {} out {}",
            a.name(tr.sym),
            t.state_name(tr.from),
            t.state_name(tr.to),
            out(tr.out)
        );
    }
    s.lines().map(|l| format!("{}\n", l.trim_end())).collect()
}
