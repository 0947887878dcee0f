//! Compiled-versus-oracle checks.
//!
//! A behavior is wrapped in a harness program: a 1 ms timer drives the
//! `tick` input and a sink reads `status`. Tick `k` runs at tag (k ms, 0).
//! Every extern leaf body is served by one callback that asks the leaf
//! script for the outcome of that leaf at that tick. The trace is then read
//! back into one [`TickResult`] per tick and compared with
//! [`bt_tick_oracle`] fed by the same script.
//!
//! Input ports of leaves that were not ticked are never read by the
//! compiled network, so they are left out of the port comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use super::{bt_tick_oracle, BtNode, LeafResult, Status, TickResult, Wire};
use crate::dsl::ast::{BehaviorDef, BodyDecl, BtNodeDecl};
use crate::dsl::parse;
use crate::runtime::{self, Callbacks, RunConfig};
use crate::time::TimeValue;
use crate::trace::RecordKind;
use crate::value::Value;

/// Outcome of `leaf` at tick `k` given its present inputs.
pub type LeafScript = dyn Fn(usize, &str, &BTreeMap<String, Value>) -> Option<LeafResult> + Send + Sync;

const INSTANCE: &str = "bt";
const SINK: &str = "sink";

#[derive(Debug, Clone, PartialEq)]
pub enum Mismatch {
    /// The harness did not compile or the run failed.
    Failed(String),
    /// The oracle could not evaluate the tick.
    Oracle { tick: usize, message: String },
    Diverged { tick: usize, expected: TickResult, got: TickResult },
}

impl std::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mismatch::Failed(m) => write!(f, "compiled run failed: {m}"),
            Mismatch::Oracle { tick, message } => write!(f, "tick {tick}: oracle: {message}"),
            Mismatch::Diverged { tick, expected, got } => {
                write!(f, "tick {tick}: expected {expected:?}, got {got:?}")
            }
        }
    }
}

fn extern_names(n: &BtNodeDecl, out: &mut BTreeSet<String>) {
    match n {
        BtNodeDecl::Composite { children, .. } => children.iter().for_each(|c| extern_names(c, out)),
        BtNodeDecl::Leaf { body: BodyDecl::Extern(name), .. } => {
            out.insert(name.clone());
        }
        BtNodeDecl::Leaf { .. } => {}
    }
}

fn leaf_inputs(n: &BtNode, out: &mut BTreeMap<String, Vec<String>>) {
    match n {
        BtNode::Composite { children, .. } => children.iter().for_each(|c| leaf_inputs(c, out)),
        BtNode::Leaf { name, inputs, .. } => {
            out.insert(name.clone(), inputs.iter().map(|(p, _)| p.clone()).collect());
        }
    }
}

/// Harness program around `behavior_src`, which must hold exactly one
/// behavior block.
pub fn harness_source(behavior_src: &str, behavior: &str) -> String {
    format!(
        "{behavior_src}
reactor Ticker {{ timer t(0, 1 ms); output o: void; reaction(t) -> o {{= set(o); =}} }}
reactor Sink {{ input s: int; reaction(s) {{= =}} }}
main reactor {{ ticker = new Ticker(); {INSTANCE} = new {behavior}(); {SINK} = new Sink();
  ticker.o -> {INSTANCE}.tick; {INSTANCE}.status -> {SINK}.s }}
"
    )
}

/// Runs the compiled behavior for `ticks` ticks and compares every tick
/// against the oracle. Returns the first mismatch.
pub fn bt_equivalence(behavior_src: &str, ticks: usize, script: Arc<LeafScript>) -> Result<(), Mismatch> {
    let program = parse(behavior_src).map_err(|d| Mismatch::Failed(d.to_string()))?;
    let [decl]: [BehaviorDef; 1] =
        program.behaviors.try_into().map_err(|_| Mismatch::Failed("expected exactly one behavior".into()))?;
    let tree = BtNode::from_decl(&decl);
    let wires = Wire::from_decl(&decl);

    let expected = (0..ticks)
        .map(|k| {
            bt_tick_oracle(&tree, &wires, &mut |leaf, inputs| script(k, leaf, inputs))
                .map_err(|e| Mismatch::Oracle { tick: k, message: e.to_string() })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let got = run_compiled(&decl, &tree, behavior_src, ticks, script)?;
    for (k, (e, g)) in expected.into_iter().zip(got).enumerate() {
        let activated: BTreeSet<&str> = e.activated.iter().map(String::as_str).collect();
        let e = TickResult {
            ports: e.ports.into_iter().filter(|(key, _)| activated.contains(leaf_of(key))).collect(),
            ..e
        };
        if e != g {
            return Err(Mismatch::Diverged { tick: k, expected: e, got: g });
        }
    }
    Ok(())
}

fn leaf_of(key: &str) -> &str {
    key.rsplit_once('.').map_or(key, |(l, _)| l)
}

fn run_compiled(
    decl: &BehaviorDef,
    tree: &BtNode,
    behavior_src: &str,
    ticks: usize,
    script: Arc<LeafScript>,
) -> Result<Vec<TickResult>, Mismatch> {
    let period = TimeValue::from_millis(1);
    let ig = crate::dsl::compile(&harness_source(behavior_src, &decl.name.name))
        .map_err(|d| Mismatch::Failed(d.to_string()))?;

    let mut inputs = BTreeMap::new();
    leaf_inputs(tree, &mut inputs);
    let inputs = Arc::new(inputs);
    let mut names = BTreeSet::new();
    extern_names(&decl.root, &mut names);
    let mut callbacks = Callbacks::new();
    for name in names {
        let script = script.clone();
        let inputs = inputs.clone();
        callbacks.register(name, move |ctx| {
            let reactor = ctx.reactor_name().to_string();
            let leaf = leaf_of_reactor(&reactor);
            let k = (ctx.tag().time.as_nanos() / period.as_nanos()) as usize;
            let mut present = BTreeMap::new();
            for p in inputs.get(leaf).into_iter().flatten() {
                if let Some(v) = ctx.get(p) {
                    present.insert(p.clone(), v.clone());
                }
            }
            let r = script(k, leaf, &present).ok_or_else(|| format!("no outcome for leaf `{leaf}` at tick {k}"))?;
            for (port, v) in r.outputs {
                ctx.set(&port, v)?;
            }
            ctx.set("status", Value::Int(r.status.code()))
        });
    }

    let last = TimeValue::from_nanos(period.as_nanos() * ticks.saturating_sub(1) as i64);
    let cfg = RunConfig::fast().with_workers(1).with_timeout(last);
    let result = runtime::run(ig, cfg, callbacks).map_err(|e| Mismatch::Failed(e.to_string()))?;
    if let Some(e) = result.error {
        return Err(Mismatch::Failed(e.to_string()));
    }

    let mut out: Vec<TickResult> =
        (0..ticks).map(|_| TickResult { status: Status::Failure, activated: Vec::new(), ports: BTreeMap::new() }).collect();
    let mut seen_status = vec![false; ticks];
    let sink_input = format!("{SINK}.s");
    let prefix = format!("{INSTANCE}.");
    for r in &result.trace.records {
        if r.kind != RecordKind::Reaction {
            continue;
        }
        let k = (r.tag.time.as_nanos() / period.as_nanos()) as usize;
        let Some(tick) = out.get_mut(k) else { continue };
        if r.tag.microstep != 0 {
            return Err(Mismatch::Failed(format!("tick {k} spilled into microstep {}", r.tag.microstep)));
        }
        if r.subject.starts_with(&format!("{SINK}.")) {
            let code = match r.inputs.get(&sink_input) {
                Some(Some(Value::Int(c))) => *c,
                other => return Err(Mismatch::Failed(format!("tick {k}: bad status {other:?}"))),
            };
            tick.status = Status::from_code(code).ok_or_else(|| Mismatch::Failed(format!("status code {code}")))?;
            seen_status[k] = true;
            continue;
        }
        let Some(rest) = r.subject.strip_prefix(&prefix) else { continue };
        let Some((node, _)) = rest.split_once('.') else { continue };
        let Some(declared) = inputs.get(node) else { continue };
        tick.activated.push(node.to_string());
        for p in declared {
            if let Some(Some(v)) = r.inputs.get(&format!("{prefix}{node}.{p}")) {
                tick.ports.insert(format!("{node}.{p}"), v.clone());
            }
        }
        for (name, v) in &r.outputs {
            let local = name.strip_prefix(&prefix).unwrap_or(name);
            if local != format!("{node}.status") {
                tick.ports.insert(local.to_string(), v.clone());
            }
        }
    }
    if let Some(k) = seen_status.iter().position(|s| !s) {
        return Err(Mismatch::Failed(format!("tick {k} produced no root status")));
    }
    Ok(out)
}

fn leaf_of_reactor(reactor: &str) -> &str {
    reactor.rsplit_once('.').map_or(reactor, |(_, l)| l)
}

/// Shape of a generated tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Shape {
    Leaf,
    Sequence(Vec<Shape>),
    Fallback(Vec<Shape>),
}

impl Shape {
    /// Levels from the root down to the leaf level; an empty composite
    /// still counts the leaf level below it.
    pub fn depth(&self) -> usize {
        match self {
            Shape::Leaf => 1,
            Shape::Sequence(c) | Shape::Fallback(c) => 1 + c.iter().map(Shape::depth).max().unwrap_or(1),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Shape::Leaf => 1,
            Shape::Sequence(c) | Shape::Fallback(c) => c.iter().map(Shape::leaf_count).sum(),
        }
    }
}

/// Every tree of depth at most `depth` (see [`Shape::depth`]) whose
/// composites have at most `width` children, empty composites included.
pub fn all_shapes(depth: usize, width: usize) -> Vec<Shape> {
    if depth <= 1 {
        return if depth == 1 { vec![Shape::Leaf] } else { Vec::new() };
    }
    let smaller = all_shapes(depth - 1, width);
    let mut lists: Vec<Vec<Shape>> = vec![Vec::new()];
    let mut frontier = lists.clone();
    for _ in 0..width {
        frontier = frontier
            .iter()
            .flat_map(|l| {
                smaller.iter().map(move |s| {
                    let mut l = l.clone();
                    l.push(s.clone());
                    l
                })
            })
            .collect();
        lists.extend(frontier.iter().cloned());
    }
    let mut out = vec![Shape::Leaf];
    for l in lists {
        out.push(Shape::Sequence(l.clone()));
        out.push(Shape::Fallback(l));
    }
    out
}

/// Behavior source for a sweep tree. Leaves are `a1..an` in preorder, each
/// with an int input `i` and output `o`, and `aj.o` is wired to `a(j+1).i`.
pub fn sweep_source(shape: &Shape) -> String {
    fn render(s: &Shape, next: &mut usize, leaves: &mut usize, out: &mut String) {
        *next += 1;
        match s {
            Shape::Leaf => {
                *leaves += 1;
                let _ = writeln!(out, "action a{}(in i: int, out o: int) = extern \"leaf\"", leaves);
            }
            Shape::Sequence(c) | Shape::Fallback(c) => {
                let kw = if matches!(s, Shape::Sequence(_)) { "sequence" } else { "fallback" };
                let _ = writeln!(out, "{kw} n{} {{", next);
                for child in c {
                    render(child, next, leaves, out);
                }
                out.push_str("}\n");
            }
        }
    }
    let mut out = String::from("behavior Tree {\n");
    let (mut next, mut leaves) = (0, 0);
    render(shape, &mut next, &mut leaves, &mut out);
    for j in 1..leaves {
        let _ = writeln!(out, "wire a{j}.o -> a{}.i", j + 1);
    }
    out.push_str("}\n");
    out
}

/// Leaf script of the sweep: tick `k` enumerates every status assignment
/// in base 3, and each leaf passes on its input plus its own index.
pub fn sweep_script(k: usize, leaf: &str, inputs: &BTreeMap<String, Value>) -> Option<LeafResult> {
    let j: u32 = leaf.strip_prefix('a')?.parse().ok()?;
    let digit = (k / 3usize.pow(j - 1)) % 3;
    let status = Status::ALL[digit];
    let carried = match inputs.get("i") {
        Some(Value::Int(v)) => *v,
        _ => 0,
    };
    Some(LeafResult { status, outputs: BTreeMap::from([("o".to_string(), Value::Int(carried * 10 + j as i64))]) })
}

#[derive(Debug, Default)]
pub struct SweepReport {
    pub trees: usize,
    pub runs: usize,
    pub mismatches: Vec<(String, Mismatch)>,
}

/// Checks every shape under every status assignment of its leaves.
pub fn sweep(shapes: &[Shape]) -> SweepReport {
    let script: Arc<LeafScript> = Arc::new(sweep_script);
    let results: Vec<(usize, Option<(String, Mismatch)>)> = shapes
        .par_iter()
        .map(|s| {
            let ticks = 3usize.pow(s.leaf_count() as u32);
            let src = sweep_source(s);
            let r = bt_equivalence(&src, ticks, script.clone()).err().map(|m| (src, m));
            (ticks, r)
        })
        .collect();
    let mut report = SweepReport { trees: shapes.len(), ..Default::default() };
    for (ticks, m) in results {
        report.runs += ticks;
        report.mismatches.extend(m);
    }
    report
}
