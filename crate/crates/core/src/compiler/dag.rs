use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap, HashSet};

use super::{Coef, CompilerConfig, EriClass, IntegralNode, Kind, Position, Slot};
use crate::error::{Error, Result};
use crate::input::cartesian_components;

/// Children of `node` when reduced at `pos`, with their coefficients.
///
/// Panics if `pos` is not one of [`positions`]`(node)`.
pub fn derive(node: &IntegralNode, pos: Position) -> Vec<(Coef, IntegralNode)> {
    let i = pos.axis as usize;
    let ax = pos.axis;
    let n = *node;
    match pos.slot {
        Slot::B => {
            let b = n.b.lowered(i).expect("HRR position needs b_i > 0");
            vec![
                (Coef::ONE, IntegralNode { a: n.a.raised(i), b, ..n }),
                (Coef::of(Kind::AB(ax)), IntegralNode { b, ..n }),
            ]
        }
        Slot::D => {
            let d = n.d.lowered(i).expect("HRR position needs d_i > 0");
            vec![
                (Coef::ONE, IntegralNode { c: n.c.raised(i), d, ..n }),
                (Coef::of(Kind::CD(ax)), IntegralNode { d, ..n }),
            ]
        }
        Slot::A | Slot::C => {
            assert!(n.is_primitive_level(), "VRR position needs b = d = 0");
            let on_a = pos.slot == Slot::A;
            let (own, other) = if on_a { (n.a, n.c) } else { (n.c, n.a) };
            let e = own.lowered(i).expect("VRR position needs a nonzero component");
            let (k_center, k_w, k_inv2, k_rho) = if on_a {
                (Kind::PA(ax), Kind::WP(ax), Kind::Inv2p, Kind::RhoOverP)
            } else {
                (Kind::QC(ax), Kind::WQ(ax), Kind::Inv2q, Kind::RhoOverQ)
            };
            let make = |own: crate::input::Momentum, other: crate::input::Momentum, m: u8| {
                if on_a {
                    IntegralNode { a: own, c: other, m, ..n }
                } else {
                    IntegralNode { a: other, c: own, m, ..n }
                }
            };
            let m = n.m;
            let mut out = vec![
                (Coef::of(k_center), make(e, other, m)),
                (Coef::of(k_w), make(e, other, m + 1)),
            ];
            let ei = e.get(i) as i32;
            if ei > 0 {
                let e2 = e.lowered(i).unwrap();
                out.push((Coef { scale: ei, first: k_inv2, second: Kind::One }, make(e2, other, m)));
                out.push((Coef { scale: -ei, first: k_rho, second: k_inv2 }, make(e2, other, m + 1)));
            }
            let fi = other.get(i) as i32;
            if fi > 0 {
                let f2 = other.lowered(i).unwrap();
                out.push((Coef { scale: fi, first: Kind::Inv2pq, second: Kind::One }, make(e, f2, m + 1)));
            }
            out
        }
    }
}

/// Valid recurrence positions at `node`, in enumeration order.
///
/// HRR on `d` then `b` while either is nonzero; afterwards VRR on `c` then
/// `a`. Axes run z, y, x within a slot.
pub fn positions(node: &IntegralNode) -> Vec<Position> {
    let slots: &[Slot] = if node.is_primitive_level() {
        &[Slot::C, Slot::A]
    } else {
        &[Slot::D, Slot::B]
    };
    let mut out = Vec::new();
    for &slot in slots {
        let mom = node.slot(slot);
        for axis in (0..3u8).rev() {
            if mom.get(axis as usize) > 0 {
                out.push(Position { slot, axis });
            }
        }
    }
    out
}

/// A candidate position with its cost inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub position: Position,
    /// Children already present in the graph.
    pub reused: usize,
    /// Children the position would introduce.
    pub new: usize,
    /// Angular momentum of the reduced slot along the chosen axis.
    pub momentum: u32,
}

impl Candidate {
    pub fn cost(&self, lambda: f64) -> f64 {
        (self.new as f64 - self.reused as f64) + lambda * self.momentum as f64
    }
}

/// Index of the candidate with minimal `(new - reused) + lambda * momentum`;
/// the first one wins ties.
pub fn find_optimal_position(candidates: &[Candidate], lambda: f64) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (idx, c) in candidates.iter().enumerate() {
        let cost = c.cost(lambda);
        if best.is_none_or(|(_, min)| cost < min) {
            best = Some((idx, cost));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidArgument("no candidate positions".into()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathStep {
    pub node: IntegralNode,
    /// `None` for base cases.
    pub position: Option<Position>,
}

/// Nodes in derivation (top-down) order.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchPath {
    pub class: EriClass,
    pub steps: Vec<PathStep>,
    /// Sum of `reused` over the chosen positions.
    pub reuse_count: usize,
}

/// Target components of a class, `a`-major.
pub(crate) fn target_nodes(class: EriClass) -> Vec<IntegralNode> {
    let [la, lb, lc, ld] = class.0;
    let mut out = Vec::with_capacity(class.n_components());
    for a in cartesian_components(la) {
        for b in cartesian_components(lb) {
            for c in cartesian_components(lc) {
                for d in cartesian_components(ld) {
                    out.push(IntegralNode { a, b, c, d, m: 0 });
                }
            }
        }
    }
    out
}

/// Greedy path search with the configured `lambda`.
pub fn search_path(class: EriClass, config: &CompilerConfig) -> SearchPath {
    let lambda = config.lambda;
    search_path_with(class, |_, cands| {
        find_optimal_position(cands, lambda).expect("non-base nodes always have a position")
    })
}

/// Path search with a caller-supplied choice at every non-base node.
///
/// Pending nodes are expanded in descending `(total momentum, |b|+|d|)` order,
/// so a node is only expanded after every node that refers to it.
pub fn search_path_with<F>(class: EriClass, mut choose: F) -> SearchPath
where
    F: FnMut(&IntegralNode, &[Candidate]) -> usize,
{
    let mut known: HashSet<IntegralNode> = HashSet::new();
    let mut pending: BTreeSet<(Reverse<(u32, u32)>, IntegralNode)> = BTreeSet::new();
    for t in target_nodes(class) {
        known.insert(t);
        pending.insert((Reverse(t.priority()), t));
    }
    let mut steps = Vec::new();
    let mut reuse_count = 0;
    while let Some((_, node)) = pending.pop_first() {
        if node.is_base() {
            steps.push(PathStep { node, position: None });
            continue;
        }
        let cands: Vec<Candidate> = positions(&node)
            .into_iter()
            .map(|position| {
                let children: HashSet<IntegralNode> = derive(&node, position).into_iter().map(|(_, c)| c).collect();
                let reused = children.iter().filter(|c| known.contains(c)).count();
                Candidate {
                    position,
                    reused,
                    new: children.len() - reused,
                    momentum: node.slot(position.slot).get(position.axis as usize) as u32,
                }
            })
            .collect();
        let pick = choose(&node, &cands);
        let chosen = cands[pick];
        reuse_count += chosen.reused;
        for (_, child) in derive(&node, chosen.position) {
            if known.insert(child) {
                pending.insert((Reverse(child.priority()), child));
            }
        }
        steps.push(PathStep {
            node,
            position: Some(chosen.position),
        });
    }
    SearchPath {
        class,
        steps,
        reuse_count,
    }
}

/// How a node is derived: its position and weighted parents (by node index).
#[derive(Debug, Clone, PartialEq)]
pub struct Derivation {
    pub position: Position,
    pub terms: Vec<(Coef, usize)>,
}

/// Intermediate-result graph for one class. Edge `child -> parent` in
/// `derivations[child].terms` means `child` is computed from `parent`.
#[derive(Debug, Clone)]
pub struct RecurrenceDAG {
    pub class: EriClass,
    pub nodes: Vec<IntegralNode>,
    pub derivations: Vec<Option<Derivation>>,
    pub targets: Vec<usize>,
    index: HashMap<IntegralNode, usize>,
}

impl RecurrenceDAG {
    pub fn from_path(path: &SearchPath) -> Result<Self> {
        let mut index = HashMap::with_capacity(path.steps.len());
        for (i, s) in path.steps.iter().enumerate() {
            index.insert(s.node, i);
        }
        let nodes: Vec<IntegralNode> = path.steps.iter().map(|s| s.node).collect();
        let mut derivations = Vec::with_capacity(nodes.len());
        for s in &path.steps {
            let d = match s.position {
                None => None,
                Some(position) => {
                    let terms = derive(&s.node, position)
                        .into_iter()
                        .map(|(coef, child)| {
                            index
                                .get(&child)
                                .map(|&i| (coef, i))
                                .ok_or_else(|| Error::UnknownNode(child.to_string()))
                        })
                        .collect::<Result<_>>()?;
                    Some(Derivation { position, terms })
                }
            };
            derivations.push(d);
        }
        let targets = target_nodes(path.class)
            .iter()
            .map(|t| index.get(t).copied().ok_or_else(|| Error::UnknownNode(t.to_string())))
            .collect::<Result<_>>()?;
        Ok(RecurrenceDAG {
            class: path.class,
            nodes,
            derivations,
            targets,
            index,
        })
    }

    pub fn node_index(&self, node: &IntegralNode) -> Option<usize> {
        self.index.get(node).copied()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.derivations.iter().flatten().map(|d| d.terms.len()).sum()
    }

    /// Kahn's algorithm over derivation edges.
    pub fn is_acyclic(&self) -> bool {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        let mut users: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, d) in self.derivations.iter().enumerate() {
            if let Some(d) = d {
                let parents: HashSet<usize> = d.terms.iter().map(|&(_, p)| p).collect();
                indeg[i] = parents.len();
                for p in parents {
                    users[p].push(i);
                }
            }
        }
        let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = stack.pop() {
            seen += 1;
            for &u in &users[i] {
                indeg[u] -= 1;
                if indeg[u] == 0 {
                    stack.push(u);
                }
            }
        }
        seen == n
    }

    /// Every non-base node has a derivation and every node bottoms out in a base node.
    pub fn reaches_base(&self) -> bool {
        let mut ok = vec![None::<bool>; self.nodes.len()];
        fn visit(dag: &RecurrenceDAG, i: usize, ok: &mut [Option<bool>]) -> bool {
            if let Some(v) = ok[i] {
                return v;
            }
            let v = match &dag.derivations[i] {
                None => dag.nodes[i].is_base(),
                Some(d) => !d.terms.is_empty() && d.terms.iter().all(|&(_, p)| visit(dag, p, ok)),
            };
            ok[i] = Some(v);
            v
        }
        (0..self.nodes.len()).all(|i| visit(self, i, &mut ok))
    }

    /// Largest auxiliary order among base nodes.
    pub fn max_m(&self) -> u8 {
        self.nodes.iter().filter(|n| n.is_base()).map(|n| n.m).max().unwrap_or(0)
    }
}

pub fn build_dag(class: EriClass, config: &CompilerConfig) -> RecurrenceDAG {
    RecurrenceDAG::from_path(&search_path(class, config)).expect("search paths are closed")
}
