//! Enumeration of `L(v)` with output-linear delay.
//!
//! An [`OutputTree`] is a tree of arena nodes witnessing one output: union
//! nodes keep one child, product nodes two. Outputs are visited in the total
//! order where, at every union, the left branch comes first. Once the left
//! branch of a union is exhausted the union is dropped from the tree and
//! replaced by the first tree of its right child ("tilting"), which keeps
//! the tree size proportional to the output length.
//!
//! The tree is advanced by an explicit micro-step machine instead of
//! recursion, so deep arenas cannot overflow the call stack, and so that
//! work can be paused after a step budget. [`Enumerator`] uses that to hold
//! each output back until a share of the next computation is done, which
//! bounds the gap between two emissions by the size of the later output.

use crate::ecs::{Ecs, EpsCase, Label, NodeId};
use crate::OutputWord;

const NIL: u32 = u32::MAX;

/// Steps of lookahead bought by each emitted symbol.
pub const SMOOTHING: u64 = 16;

#[derive(Clone, Copy, Debug)]
struct TNode {
    v: NodeId,
    a: u32,
    b: u32,
}

#[derive(Clone, Copy, Debug)]
enum Frame {
    Enter(u32),
    AfterRight(u32),
    AfterLeft(u32),
    AfterChild(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Idle,
    Search,
    Free,
    Build,
    Print,
    Ready,
    Exhausted,
}

/// A left-tilted output tree together with the machine that advances it.
pub struct OutputTree<'a> {
    ecs: &'a Ecs,
    nodes: Vec<TNode>,
    free: Vec<u32>,
    live: usize,
    root: u32,
    frames: Vec<Frame>,
    ret: bool,
    work: Vec<u32>,
    slot: u32,
    target: NodeId,
    print_after_build: bool,
    word: OutputWord,
    phase: Phase,
    steps: u64,
}

impl<'a> OutputTree<'a> {
    /// Starts building the first tree rooted at `v` (a non-sentinel node).
    /// Nothing runs until [`run`](Self::run) or [`finish`](Self::finish).
    pub fn new(ecs: &'a Ecs, v: NodeId) -> Self {
        assert!(!v.is_empty(), "output tree over the empty sentinel");
        OutputTree {
            ecs,
            nodes: vec![TNode { v, a: NIL, b: NIL }],
            free: Vec::new(),
            live: 1,
            root: 0,
            frames: Vec::new(),
            ret: false,
            work: vec![0],
            slot: 0,
            target: v,
            print_after_build: true,
            word: Vec::new(),
            phase: Phase::Build,
            steps: 0,
        }
    }

    /// Micro-steps executed so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Number of nodes in the current tree.
    pub fn size(&self) -> usize {
        self.live
    }

    /// True when the current tree's output is ready to be taken.
    pub fn is_ready(&self) -> bool {
        self.phase == Phase::Ready
    }

    /// True once every tree has been visited.
    pub fn is_exhausted(&self) -> bool {
        self.phase == Phase::Exhausted
    }

    /// The output of the current tree, valid while [`is_ready`](Self::is_ready).
    pub fn word(&self) -> &OutputWord {
        &self.word
    }

    /// Runs at most `budget` micro-steps. Returns true when the pending
    /// computation has completed (a tree is ready, or the trees ran out).
    pub fn run(&mut self, budget: u64) -> bool {
        let mut left = budget;
        while left > 0 {
            if !self.step() {
                return true;
            }
            left -= 1;
        }
        matches!(self.phase, Phase::Ready | Phase::Exhausted | Phase::Idle)
    }

    /// Runs the pending computation to completion.
    pub fn finish(&mut self) {
        while self.step() {}
    }

    /// Takes the ready output and starts computing the next tree.
    /// Returns `None` once the trees are exhausted.
    pub fn take_and_advance(&mut self) -> Option<OutputWord> {
        self.finish();
        if self.phase == Phase::Exhausted {
            return None;
        }
        let w = std::mem::take(&mut self.word);
        self.phase = Phase::Idle;
        self.advance();
        Some(w)
    }

    /// Moves to the next tree and prints it. Returns false when exhausted.
    pub fn next_tree(&mut self) -> bool {
        self.finish();
        if self.phase == Phase::Exhausted {
            return false;
        }
        self.phase = Phase::Idle;
        self.advance();
        self.finish();
        self.phase == Phase::Ready
    }

    fn advance(&mut self) {
        debug_assert_eq!(self.phase, Phase::Idle);
        self.frames.clear();
        self.frames.push(Frame::Enter(self.root));
        self.ret = false;
        self.phase = Phase::Search;
    }

    fn alloc(&mut self, v: NodeId) -> u32 {
        self.live += 1;
        let t = TNode { v, a: NIL, b: NIL };
        match self.free.pop() {
            Some(i) => {
                self.nodes[i as usize] = t;
                i
            }
            None => {
                self.nodes.push(t);
                (self.nodes.len() - 1) as u32
            }
        }
    }

    fn push_children(&mut self, i: u32) {
        let t = self.nodes[i as usize];
        if t.a != NIL {
            self.work.push(t.a);
        }
        if t.b != NIL {
            self.work.push(t.b);
        }
    }

    /// Frees the subtree below `slot`, then rebuilds `slot` as the first
    /// tree of `target`.
    fn start_replace(&mut self, slot: u32, target: NodeId) {
        self.work.clear();
        self.push_children(slot);
        self.slot = slot;
        self.target = target;
        self.print_after_build = false;
        self.phase = Phase::Free;
    }

    /// One micro-step. Returns false when nothing is left to do.
    fn step(&mut self) -> bool {
        match self.phase {
            Phase::Idle | Phase::Ready | Phase::Exhausted => return false,
            Phase::Search => self.search_step(),
            Phase::Free => match self.work.pop() {
                Some(j) => {
                    self.push_children(j);
                    self.free.push(j);
                    self.live -= 1;
                }
                None => {
                    self.nodes[self.slot as usize] = TNode {
                        v: self.target,
                        a: NIL,
                        b: NIL,
                    };
                    self.work.push(self.slot);
                    self.phase = Phase::Build;
                }
            },
            Phase::Build => match self.work.pop() {
                Some(j) => {
                    let v = self.nodes[j as usize].v;
                    match self.ecs.label(v) {
                        Label::Union => {
                            let c = self.alloc(self.ecs.left(v));
                            self.nodes[j as usize].a = c;
                            self.work.push(c);
                        }
                        Label::Product => {
                            let a = self.alloc(self.ecs.left(v));
                            let b = self.alloc(self.ecs.right(v));
                            let n = &mut self.nodes[j as usize];
                            n.a = a;
                            n.b = b;
                            self.work.push(b);
                            self.work.push(a);
                        }
                        Label::Symbol { .. } | Label::Epsilon => {}
                    }
                }
                None => {
                    if self.print_after_build {
                        self.start_print();
                    } else {
                        self.phase = Phase::Search;
                    }
                }
            },
            Phase::Print => match self.work.pop() {
                Some(j) => {
                    let t = self.nodes[j as usize];
                    match self.ecs.label(t.v) {
                        Label::Union => self.work.push(t.a),
                        Label::Product => {
                            self.work.push(t.b);
                            self.work.push(t.a);
                        }
                        Label::Symbol { out, pos } => self.word.push((out, pos)),
                        Label::Epsilon => {}
                    }
                }
                None => self.phase = Phase::Ready,
            },
        }
        self.steps += 1;
        true
    }

    fn start_print(&mut self) {
        self.word.clear();
        self.work.clear();
        self.work.push(self.root);
        self.phase = Phase::Print;
    }

    fn search_step(&mut self) {
        let Some(frame) = self.frames.pop() else {
            if self.ret {
                self.start_print();
            } else {
                self.phase = Phase::Exhausted;
            }
            return;
        };
        match frame {
            Frame::Enter(i) => {
                let t = self.nodes[i as usize];
                match self.ecs.label(t.v) {
                    Label::Union => {
                        self.frames.push(Frame::AfterChild(i));
                        self.frames.push(Frame::Enter(t.a));
                    }
                    Label::Product => {
                        self.frames.push(Frame::AfterRight(i));
                        self.frames.push(Frame::Enter(t.b));
                    }
                    Label::Symbol { .. } | Label::Epsilon => self.ret = false,
                }
            }
            Frame::AfterRight(i) => {
                if !self.ret {
                    self.frames.push(Frame::AfterLeft(i));
                    self.frames.push(Frame::Enter(self.nodes[i as usize].a));
                }
            }
            Frame::AfterLeft(i) => {
                if self.ret {
                    let t = self.nodes[i as usize];
                    self.start_replace(t.b, self.ecs.right(t.v));
                }
            }
            Frame::AfterChild(i) => {
                if !self.ret {
                    let v = self.nodes[i as usize].v;
                    self.start_replace(i, self.ecs.right(v));
                    self.ret = true;
                }
            }
        }
    }

    /// Left-to-right leaf concatenation of the current tree.
    pub fn print(&self) -> OutputWord {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(j) = stack.pop() {
            let t = self.nodes[j as usize];
            match self.ecs.label(t.v) {
                Label::Union => stack.push(t.a),
                Label::Product => {
                    stack.push(t.b);
                    stack.push(t.a);
                }
                Label::Symbol { out: o, pos } => out.push((o, pos)),
                Label::Epsilon => {}
            }
        }
        out
    }

    /// Arena nodes of the current tree in pre-order, for inspection.
    pub fn nodes_preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(j) = stack.pop() {
            let t = self.nodes[j as usize];
            out.push(t.v);
            if t.b != NIL {
                stack.push(t.b);
            }
            if t.a != NIL {
                stack.push(t.a);
            }
        }
        out
    }
}

/// Builds and prints the first output tree rooted at `v`.
pub fn build_tree(ecs: &Ecs, v: NodeId) -> OutputTree<'_> {
    let mut t = OutputTree::new(ecs, v);
    t.finish();
    t
}

/// Advances `t` to the next tree in the order. Returns false when exhausted.
pub fn next_tree(t: &mut OutputTree<'_>) -> bool {
    t.next_tree()
}

/// The output word of `t`.
pub fn print_tree(t: &OutputTree<'_>) -> OutputWord {
    t.print()
}

#[derive(Clone, Copy, Debug)]
enum Start {
    Fresh(NodeId),
    Running,
    Done,
}

/// Streams `L(v)` with output-linear delay.
///
/// ε-safe roots are dispatched first: an ε leaf yields only the empty word,
/// and a Case-3 union yields the empty word and then `L(r(v))`.
pub struct Enumerator<'a> {
    ecs: &'a Ecs,
    start: Start,
    tree: Option<OutputTree<'a>>,
    pending: Option<OutputWord>,
    own_steps: u64,
    smoothing: u64,
}

impl<'a> Enumerator<'a> {
    pub fn new(ecs: &'a Ecs, v: NodeId) -> Self {
        Self::with_smoothing(ecs, v, SMOOTHING)
    }

    /// `smoothing` is the lookahead budget per emitted symbol; 0 disables
    /// the buffer.
    pub fn with_smoothing(ecs: &'a Ecs, v: NodeId, smoothing: u64) -> Self {
        Enumerator {
            ecs,
            start: Start::Fresh(v),
            tree: None,
            pending: None,
            own_steps: 0,
            smoothing,
        }
    }

    /// Total unit steps spent so far.
    pub fn steps(&self) -> u64 {
        self.own_steps + self.tree.as_ref().map_or(0, |t| t.steps())
    }

    /// Size of the tree currently held, if any.
    pub fn tree_size(&self) -> usize {
        self.tree.as_ref().map_or(0, |t| t.size())
    }

    fn init(&mut self, v: NodeId) {
        if v.is_empty() {
            self.start = Start::Done;
            return;
        }
        self.start = Start::Running;
        match self.ecs.eps_case(v) {
            EpsCase::IsEps => self.pending = Some(Vec::new()),
            EpsCase::Case3 => {
                self.pending = Some(Vec::new());
                self.tree = Some(OutputTree::new(self.ecs, self.ecs.right(v)));
            }
            _ => self.tree = Some(OutputTree::new(self.ecs, v)),
        }
    }
}

impl Iterator for Enumerator<'_> {
    type Item = OutputWord;

    fn next(&mut self) -> Option<OutputWord> {
        if let Start::Fresh(v) = self.start {
            self.init(v);
        }
        if let Start::Done = self.start {
            return None;
        }
        self.own_steps += 1;
        if self.pending.is_none() {
            let tree = self.tree.as_mut()?;
            match tree.take_and_advance() {
                Some(w) => self.pending = Some(w),
                None => {
                    self.own_steps += tree.steps();
                    self.tree = None;
                    self.start = Start::Done;
                    return None;
                }
            }
        }
        let w = self.pending.take()?;
        if let Some(tree) = self.tree.as_mut() {
            tree.run(self.smoothing * (w.len() as u64).max(1));
        }
        Some(w)
    }
}

/// Collects every output of `v`.
pub fn enumerate_all(ecs: &Ecs, v: NodeId) -> Vec<OutputWord> {
    Enumerator::new(ecs, v).collect()
}
