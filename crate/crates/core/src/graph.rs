//! Reaction dependency graph, cycle detection and level assignment.

use std::collections::BTreeSet;
use std::fmt::Write;

use thiserror::Error;

use crate::instance::{InstanceGraph, ReactionId, TriggerKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReactionGraph {
    /// Node names, indexed by reaction id.
    pub names: Vec<String>,
    pub edges: BTreeSet<(ReactionId, ReactionId)>,
    succ: Vec<Vec<ReactionId>>,
}

/// Level of every reaction, indexed by reaction id.
pub type LevelMap = Vec<usize>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("causality cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
}

/// Upper bound on the number of cycles reported for one graph.
pub const MAX_REPORTED_CYCLES: usize = 64;

impl ReactionGraph {
    pub fn from_edges(names: Vec<String>, edges: impl IntoIterator<Item = (ReactionId, ReactionId)>) -> Self {
        let edges: BTreeSet<_> = edges.into_iter().collect();
        let mut succ = vec![Vec::new(); names.len()];
        for &(a, b) in &edges {
            succ[a].push(b);
        }
        ReactionGraph { names, edges, succ }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn successors(&self, r: ReactionId) -> &[ReactionId] {
        &self.succ[r]
    }
}

/// Builds the dependency graph: declaration order inside each reactor plus
/// dataflow through ports and delay-free connections.
pub fn build_graph(ig: &InstanceGraph) -> ReactionGraph {
    let mut edges = BTreeSet::new();
    let mut last_of_reactor = vec![None; ig.reactors.len()];
    for (id, r) in ig.reactions.iter().enumerate() {
        if let Some(prev) = last_of_reactor[r.reactor] {
            edges.insert((prev, id));
        }
        last_of_reactor[r.reactor] = Some(id);
    }
    for (w, r) in ig.reactions.iter().enumerate() {
        for &port in r.effects.iter().filter(|&&t| ig.triggers[t].kind.is_port()) {
            let direct = ig.readers[port].iter();
            let through = ig.outgoing[port]
                .iter()
                .map(|&c| &ig.connections[c])
                .filter(|c| c.delay.is_none())
                .flat_map(|c| ig.readers[c.to].iter());
            for &reader in direct.chain(through) {
                if reader != w {
                    edges.insert((w, reader));
                }
            }
        }
    }
    ReactionGraph::from_edges(ig.reactions.iter().map(|r| r.name.clone()).collect(), edges)
}

/// Elementary cycles (Johnson's algorithm), each rotated to start at its
/// smallest name; empty iff the graph is acyclic. At most
/// [`MAX_REPORTED_CYCLES`] are returned.
pub fn detect_cycles(g: &ReactionGraph) -> Vec<Vec<String>> {
    let n = g.len();
    let mut cycles: Vec<Vec<ReactionId>> = Vec::new();
    for s in 0..n {
        if cycles.len() >= MAX_REPORTED_CYCLES {
            break;
        }
        let comp = scc_containing(g, s);
        if comp.len() == 1 && !g.edges.contains(&(s, s)) {
            continue;
        }
        let mut j = Johnson { g, comp: &comp, blocked: vec![false; n], b: vec![Vec::new(); n], stack: Vec::new(), out: &mut cycles };
        j.circuit(s, s);
    }
    let mut named: Vec<Vec<String>> = cycles
        .into_iter()
        .map(|c| {
            let mut names: Vec<String> = c.iter().map(|&r| g.names[r].clone()).collect();
            let min = (0..names.len()).min_by(|&a, &b| names[a].cmp(&names[b])).unwrap_or(0);
            names.rotate_left(min);
            names
        })
        .collect();
    named.sort();
    named.dedup();
    named.truncate(MAX_REPORTED_CYCLES);
    named
}

struct Johnson<'a> {
    g: &'a ReactionGraph,
    comp: &'a [bool],
    blocked: Vec<bool>,
    b: Vec<Vec<ReactionId>>,
    stack: Vec<ReactionId>,
    out: &'a mut Vec<Vec<ReactionId>>,
}

impl Johnson<'_> {
    fn circuit(&mut self, v: ReactionId, s: ReactionId) -> bool {
        if self.out.len() >= MAX_REPORTED_CYCLES {
            return true;
        }
        let mut found = false;
        self.stack.push(v);
        self.blocked[v] = true;
        for &w in self.g.successors(v) {
            if !self.comp[w] {
                continue;
            }
            if w == s {
                self.out.push(self.stack.clone());
                found = true;
            } else if !self.blocked[w] && self.circuit(w, s) {
                found = true;
            }
        }
        if found {
            self.unblock(v);
        } else {
            for &w in self.g.successors(v) {
                if self.comp[w] && !self.b[w].contains(&v) {
                    self.b[w].push(v);
                }
            }
        }
        self.stack.pop();
        found
    }

    fn unblock(&mut self, v: ReactionId) {
        self.blocked[v] = false;
        while let Some(w) = self.b[v].pop() {
            if self.blocked[w] {
                self.unblock(w);
            }
        }
    }
}

/// Membership mask of the strongly connected component of `s` within the
/// subgraph induced by vertices `>= s`.
fn scc_containing(g: &ReactionGraph, s: ReactionId) -> Vec<bool> {
    let n = g.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(v) = stack.pop() {
            let next: Box<dyn Iterator<Item = ReactionId>> = if forward {
                Box::new(g.successors(v).iter().copied())
            } else {
                Box::new(g.edges.iter().filter(move |&&(_, b)| b == v).map(|&(a, _)| a))
            };
            for w in next {
                if w >= s && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    };
    let fwd = reach(true);
    let bwd = reach(false);
    fwd.iter().zip(&bwd).map(|(a, b)| *a && *b).collect()
}

/// Longest-path levels (Kahn order); rejects cyclic graphs.
pub fn assign_levels(g: &ReactionGraph) -> Result<LevelMap, GraphError> {
    let n = g.len();
    let mut indegree = vec![0usize; n];
    for &(_, b) in &g.edges {
        indegree[b] += 1;
    }
    let mut level = vec![0usize; n];
    let mut ready: Vec<ReactionId> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut done = 0;
    while let Some(v) = ready.pop() {
        done += 1;
        for &w in g.successors(v) {
            level[w] = level[w].max(level[v] + 1);
            indegree[w] -= 1;
            if indegree[w] == 0 {
                ready.push(w);
            }
        }
    }
    if done < n {
        let cycle = detect_cycles(g).into_iter().next().unwrap_or_default();
        return Err(GraphError::Cycle(cycle));
    }
    Ok(level)
}

/// Graphviz rendering: solid edges are same-tag dependencies, dashed edges
/// cross delayed connections and carry the delay.
pub fn to_dot(ig: &InstanceGraph, g: &ReactionGraph, levels: Option<&LevelMap>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "digraph {:?} {{", ig.main);
    s.push_str("  rankdir=LR;\n  node [shape=box];\n");
    for (id, r) in ig.reactions.iter().enumerate() {
        let level = levels.map(|l| l[id].to_string()).unwrap_or_else(|| "?".into());
        let deadline = r.deadline.as_ref().map(|(d, _)| d.to_string()).unwrap_or_else(|| "none".into());
        let _ = writeln!(s, "  {:?} [label={:?}];", r.name, format!("{} (level={level}, deadline={deadline})", r.name));
    }
    for &(a, b) in &g.edges {
        let _ = writeln!(s, "  {:?} -> {:?};", g.names[a], g.names[b]);
    }
    let mut dashed = BTreeSet::new();
    for (w, r) in ig.reactions.iter().enumerate() {
        for &port in &r.effects {
            if !matches!(ig.triggers[port].kind, TriggerKind::Output(_) | TriggerKind::Input(_)) {
                continue;
            }
            for &c in &ig.outgoing[port] {
                let c = &ig.connections[c];
                if let Some(d) = c.delay {
                    for &reader in &ig.readers[c.to] {
                        dashed.insert((w, reader, d));
                    }
                }
            }
        }
    }
    for (a, b, d) in dashed {
        let _ = writeln!(s, "  {:?} -> {:?} [style=dashed, label={:?}];", g.names[a], g.names[b], d.to_string());
    }
    s.push_str("}\n");
    s
}
