//! Random well-formed programs for property tests.

#![allow(dead_code)]

use std::fmt::Write;

use proptest::prelude::*;

#[derive(Debug, Clone)]
pub struct Class {
    pub timer: Option<(i64, i64)>,
    pub gain: i64,
    pub deadline: Option<i64>,
    pub logs: bool,
}

#[derive(Debug, Clone)]
pub struct Link {
    pub from: usize,
    pub to: usize,
    pub after: Option<i64>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub classes: Vec<Class>,
    pub instances: Vec<usize>,
    pub links: Vec<Link>,
}

fn class() -> impl Strategy<Value = Class> {
    (
        proptest::option::weighted(0.7, (0i64..20, 1i64..15)),
        1i64..5,
        proptest::option::of(1i64..4),
        any::<bool>(),
    )
        .prop_map(|(timer, gain, deadline, logs)| Class { timer, gain, deadline, logs })
}

/// Up to 4 classes and 6 instances. Forward links may be delay-free; a
/// link going backwards always carries a positive delay, so programs are
/// causal. Every input has at most one writer.
pub fn model() -> impl Strategy<Value = Model> {
    (proptest::collection::vec(class(), 1..=4), 1usize..=6)
        .prop_flat_map(|(classes, n)| {
            let k = classes.len();
            let links = proptest::collection::vec(
                (0..n, 0..n, proptest::option::of(0i64..6), 1i64..6),
                0..=n * 2,
            );
            (Just(classes), proptest::collection::vec(0..k, n), links)
        })
        .prop_map(|(classes, instances, raw)| {
            let mut links: Vec<Link> = Vec::new();
            for (a, b, after, back_delay) in raw {
                if a == b || links.iter().any(|l| l.to == b) {
                    continue;
                }
                let after = if a < b { after } else { Some(back_delay) };
                links.push(Link { from: a, to: b, after });
            }
            Model { classes, instances, links }
        })
}

impl Model {
    pub fn source(&self) -> String {
        self.source_with(|members| members)
    }

    /// Source text, letting `arrange` reorder the members of the main
    /// reactor.
    pub fn source_with(&self, arrange: impl FnOnce(Vec<String>) -> Vec<String>) -> String {
        let mut s = String::new();
        for (k, c) in self.classes.iter().enumerate() {
            let _ = writeln!(s, "reactor C{k} {{");
            s.push_str("  input i: int\n  output o: int\n  state n: int = 0\n");
            if let Some((off, per)) = c.timer {
                let _ = writeln!(s, "  timer t({off} ms, {per} ms)");
                let _ = writeln!(s, "  reaction(t) -> o {{= n = n + 1; set(o, n * {}); =}}", c.gain);
            }
            let _ = write!(s, "  reaction(i) -> o {{= set(o, i % 1000 + {}); =}}", c.gain);
            match c.deadline {
                Some(d) => {
                    let _ = writeln!(s, " deadline({d} ms) {{= log(\"late\"); =}}");
                }
                None => s.push('\n'),
            }
            if c.logs {
                s.push_str("  reaction(i) {= log(i); =}\n");
            }
            s.push_str("}\n");
        }
        let mut members: Vec<String> =
            self.instances.iter().enumerate().map(|(j, k)| format!("x{j} = new C{k}()")).collect();
        for l in &self.links {
            let after = l.after.map(|d| format!(" after {d} ms")).unwrap_or_default();
            members.push(format!("x{}.o -> x{}.i{after}", l.from, l.to));
        }
        s.push_str("main reactor {\n");
        for m in arrange(members) {
            let _ = writeln!(s, "  {m}");
        }
        s.push_str("}\n");
        s
    }

    /// Same program with every delayed link removed.
    pub fn without_delayed(&self) -> Model {
        Model { links: self.links.iter().filter(|l| l.after.is_none()).cloned().collect(), ..self.clone() }
    }

    /// Timer of each instance that has one, as (instance name, offset ms, period ms).
    pub fn timers(&self) -> Vec<(String, i64, i64)> {
        self.instances
            .iter()
            .enumerate()
            .filter_map(|(j, &k)| self.classes[k].timer.map(|(o, p)| (format!("x{j}"), o, p)))
            .collect()
    }
}
