//! Enumerable compact sets with ε: an append-only DAG whose nodes denote
//! sets of output words.
//!
//! Leaves hold one `(symbol, position)` pair or the empty word, product
//! nodes concatenate the languages of their children and union nodes join
//! them. Nodes are never modified after creation, so every handle keeps
//! denoting the same set forever.
//!
//! `add`, `prod` and `union` run in constant time. Starting from an empty
//! arena and feeding ε-safe operands, every node has output depth at most 2
//! and every returned node is ε-safe, which is what the enumerator needs
//! for output-linear delay.

use std::fmt::Write as _;

use crate::{OutSym, Pos};

/// Handle to a node, or the empty sentinel [`NodeId::EMPTY`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    /// Denotes "no set". Unions ignore it; products with it are empty.
    pub const EMPTY: NodeId = NodeId(u32::MAX);

    pub fn is_empty(self) -> bool {
        self == Self::EMPTY
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    Union,
    Product,
    Symbol { out: OutSym, pos: Pos },
    Epsilon,
}

/// Where ε sits in a node's language.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpsCase {
    /// ε is not in the language.
    NoEps,
    /// The node is an ε leaf.
    IsEps,
    /// A union whose left child is an ε leaf and whose right child has no ε.
    Case3,
    /// Contains ε in any other shape. Never produced by the public operations.
    Other,
}

#[derive(Clone, Copy, Debug)]
pub struct Node {
    pub label: Label,
    pub left: NodeId,
    pub right: NodeId,
    odepth: u8,
    eps: EpsCase,
}

/// Call counters for the public operations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub add: u64,
    pub epsilon: u64,
    pub prod: u64,
    pub union: u64,
}

impl OpCounts {
    pub fn total(&self) -> u64 {
        self.add + self.epsilon + self.prod + self.union
    }
}

/// The node arena.
#[derive(Clone, Debug, Default)]
pub struct Ecs {
    nodes: Vec<Node>,
    ops: OpCounts,
}

impl Ecs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Every node handle, oldest first.
    pub fn ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn ops(&self) -> OpCounts {
        self.ops
    }

    pub fn node(&self, v: NodeId) -> &Node {
        &self.nodes[v.index()]
    }

    pub fn label(&self, v: NodeId) -> Label {
        self.node(v).label
    }

    pub fn left(&self, v: NodeId) -> NodeId {
        self.node(v).left
    }

    pub fn right(&self, v: NodeId) -> NodeId {
        self.node(v).right
    }

    pub fn output_depth(&self, v: NodeId) -> u8 {
        self.node(v).odepth
    }

    pub fn eps_case(&self, v: NodeId) -> EpsCase {
        self.node(v).eps
    }

    pub fn contains_epsilon(&self, v: NodeId) -> bool {
        self.node(v).eps != EpsCase::NoEps
    }

    /// Leaves and product nodes.
    pub fn is_output_node(&self, v: NodeId) -> bool {
        self.label(v) != Label::Union
    }

    /// The ε-aware safety predicate.
    pub fn is_safe(&self, v: NodeId) -> bool {
        match self.eps_case(v) {
            EpsCase::NoEps => self.plain_safe(v),
            EpsCase::IsEps => true,
            EpsCase::Case3 => self.plain_safe(self.right(v)),
            EpsCase::Other => false,
        }
    }

    fn plain_safe(&self, v: NodeId) -> bool {
        match self.output_depth(v) {
            0 => true,
            1 => self.output_depth(self.right(v)) <= 1,
            _ => false,
        }
    }

    fn push(&mut self, label: Label, left: NodeId, right: NodeId) -> NodeId {
        let (odepth, eps) = match label {
            Label::Symbol { .. } => (0, EpsCase::NoEps),
            Label::Epsilon => (0, EpsCase::IsEps),
            Label::Product => {
                let both = self.contains_epsilon(left) && self.contains_epsilon(right);
                (0, if both { EpsCase::Other } else { EpsCase::NoEps })
            }
            Label::Union => {
                let d = self.output_depth(left).saturating_add(1);
                let eps = match (self.eps_case(left), self.eps_case(right)) {
                    (EpsCase::NoEps, EpsCase::NoEps) => EpsCase::NoEps,
                    (EpsCase::IsEps, EpsCase::NoEps) => EpsCase::Case3,
                    _ => EpsCase::Other,
                };
                (d, eps)
            }
        };
        let id = NodeId(self.nodes.len() as u32);
        assert!(id != NodeId::EMPTY, "arena exhausted");
        self.nodes.push(Node {
            label,
            left,
            right,
            odepth,
            eps,
        });
        id
    }

    /// A fresh leaf for `{(out, pos)}`.
    pub fn add(&mut self, out: OutSym, pos: Pos) -> NodeId {
        self.ops.add += 1;
        self.push(
            Label::Symbol { out, pos },
            NodeId::EMPTY,
            NodeId::EMPTY,
        )
    }

    /// A fresh leaf for `{ε}`.
    pub fn epsilon(&mut self) -> NodeId {
        self.ops.epsilon += 1;
        self.epsilon_leaf()
    }

    fn epsilon_leaf(&mut self) -> NodeId {
        self.push(Label::Epsilon, NodeId::EMPTY, NodeId::EMPTY)
    }

    /// Concatenation `L(a)·L(b)`.
    ///
    /// Operands must be ε-safe and every word of the result must split
    /// uniquely. A product with the sentinel is the sentinel.
    pub fn prod(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.ops.prod += 1;
        if a.is_empty() || b.is_empty() {
            return NodeId::EMPTY;
        }
        use EpsCase::*;
        match (self.eps_case(a), self.eps_case(b)) {
            (NoEps, NoEps) => self.push(Label::Product, a, b),
            (NoEps, IsEps) | (IsEps, IsEps) | (Case3, IsEps) => a,
            (IsEps, NoEps) | (IsEps, Case3) => b,
            (NoEps, Case3) => {
                // {a} ∪ a·r(b); the product goes left when `a` is a union.
                let p = self.push(Label::Product, a, self.right(b));
                if self.is_output_node(a) {
                    self.push(Label::Union, a, p)
                } else {
                    self.push(Label::Union, p, a)
                }
            }
            (Case3, NoEps) => {
                let p = self.push(Label::Product, self.right(a), b);
                self.push(Label::Union, p, b)
            }
            (Case3, Case3) => {
                let (r1, r2) = (self.right(a), self.right(b));
                let v4 = self.push(Label::Product, r1, r2);
                if self.is_output_node(r1) {
                    let v3 = self.push(Label::Union, v4, r2);
                    let v2 = self.push(Label::Union, r1, v3);
                    let eps = self.epsilon_leaf();
                    self.push(Label::Union, eps, v2)
                } else {
                    // r1 is a union: hang its branches directly so that the
                    // result stays safe.
                    let vs = self.push(Label::Union, self.right(r1), r2);
                    let v3 = self.push(Label::Union, v4, vs);
                    let v2 = self.push(Label::Union, self.left(r1), v3);
                    self.push(Label::Union, self.left(a), v2)
                }
            }
            _ => panic!("prod on a node that is not ε-safe"),
        }
    }

    /// Union `L(a) ∪ L(b)`.
    ///
    /// Operands must be ε-safe and disjoint apart from ε. The sentinel is
    /// the neutral element.
    pub fn union(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.ops.union += 1;
        if a.is_empty() {
            return b;
        }
        if b.is_empty() {
            return a;
        }
        use EpsCase::*;
        match (self.eps_case(a), self.eps_case(b)) {
            (NoEps, NoEps) => self.union_plain(a, b),
            (NoEps, IsEps) => self.push(Label::Union, b, a),
            (NoEps, Case3) => {
                let u = self.union_plain(a, self.right(b));
                self.push(Label::Union, self.left(b), u)
            }
            (IsEps, NoEps) => self.push(Label::Union, a, b),
            (IsEps, IsEps) | (Case3, IsEps) => a,
            (IsEps, Case3) => b,
            (Case3, NoEps) => {
                let u = self.union_plain(self.right(a), b);
                self.push(Label::Union, self.left(a), u)
            }
            (Case3, Case3) => {
                let u = self.union_plain(self.right(a), self.right(b));
                self.push(Label::Union, self.left(b), u)
            }
            _ => panic!("union on a node that is not ε-safe"),
        }
    }

    /// Union of two safe ε-free nodes.
    fn union_plain(&mut self, a: NodeId, b: NodeId) -> NodeId {
        if self.is_output_node(a) {
            self.push(Label::Union, a, b)
        } else if self.is_output_node(b) {
            self.push(Label::Union, b, a)
        } else {
            let vs = self.push(Label::Union, self.right(a), self.right(b));
            let v2 = self.push(Label::Union, self.left(b), vs);
            self.push(Label::Union, self.left(a), v2)
        }
    }

    /// Graphviz rendering of the whole arena. Left edges are dashed.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph ecs {\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let label = match n.label {
                Label::Union => "∪".to_string(),
                Label::Product => "⊙".to_string(),
                Label::Symbol { out, pos } => format!("{out}@{pos}"),
                Label::Epsilon => "ε".to_string(),
            };
            let _ = writeln!(s, "  n{i} [label=\"{label}\"];");
            if !n.left.is_empty() {
                let _ = writeln!(s, "  n{i} -> n{} [style=dashed];", n.left.0);
            }
            if !n.right.is_empty() {
                let _ = writeln!(s, "  n{i} -> n{};", n.right.0);
            }
        }
        s.push_str("}\n");
        s
    }
}
