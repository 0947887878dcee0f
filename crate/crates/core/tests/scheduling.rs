mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use proptest::prelude::*;

use rcl_core::dsl::compile;
use rcl_core::graph::{assign_levels, build_graph};
use rcl_core::runtime::{self, Callbacks, Engine, EntryKind, Plan, RunConfig, ScriptEntry, Step};
use rcl_core::trace::RecordKind;
use rcl_core::{Tag, TimeValue};

const TIMEOUT_MS: i64 = 60;

fn ms(v: i64) -> TimeValue {
    TimeValue::from_millis(v)
}

fn stalls() -> impl Strategy<Value = Vec<ScriptEntry>> {
    proptest::collection::vec((0i64..TIMEOUT_MS, 1i64..6), 0..4).prop_map(|v| {
        let mut v: Vec<ScriptEntry> =
            v.into_iter().map(|(at, d)| ScriptEntry { at: ms(at), kind: EntryKind::Stall(ms(d)) }).collect();
        v.sort_by_key(|e| e.at);
        v
    })
}

fn cfg(script: &[ScriptEntry]) -> RunConfig {
    RunConfig::fast().with_timeout(ms(TIMEOUT_MS)).with_script(script.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trace_is_independent_of_workers_and_jitter(
        m in common::model(),
        script in stalls(),
        workers in 2usize..6,
        seed in any::<u64>(),
    ) {
        let src = m.source();
        let a = runtime::run(compile(&src).unwrap(), cfg(&script), Callbacks::new()).unwrap();
        let mut c = cfg(&script).with_workers(workers);
        c.jitter_seed = Some(seed);
        let b = runtime::run(compile(&src).unwrap(), c, Callbacks::new()).unwrap();
        prop_assert!(a.error.is_none(), "{:?}", a.error);
        prop_assert_eq!(a.trace.to_text(), b.trace.to_text());
    }

    #[test]
    fn tags_strictly_increase_and_records_stay_in_their_tag(m in common::model(), script in stalls()) {
        let plan = Arc::new(Plan::new(compile(&m.source()).unwrap()).unwrap());
        let mut engine = Engine::new(plan, Arc::new(Callbacks::new()), cfg(&script)).unwrap();
        engine.start().unwrap();
        let mut last: Option<Tag> = None;
        loop {
            let step = engine.step(None).unwrap();
            let tag = match step {
                Step::Executed(t) | Step::Stopped(t) => t,
                other => panic!("unexpected {other:?}"),
            };
            prop_assert!(last.is_none_or(|l| l < tag), "{last:?} then {tag:?}");
            for r in engine.take_records() {
                prop_assert_eq!(r.tag, tag);
            }
            last = Some(tag);
            if matches!(step, Step::Stopped(_)) {
                break;
            }
        }
        prop_assert_eq!(last, Some(Tag::new(ms(TIMEOUT_MS), 0)));
    }

    #[test]
    fn levels_follow_the_graph(m in common::model(), script in stalls()) {
        let ig = compile(&m.source()).unwrap();
        let g = build_graph(&ig);
        let levels = assign_levels(&g).unwrap();
        let level_of: BTreeMap<&str, usize> = g.names.iter().map(String::as_str).zip(levels.iter().copied()).collect();
        let r = runtime::run(ig.clone(), cfg(&script), Callbacks::new()).unwrap();
        let mut seen: BTreeMap<Tag, Vec<(&str, usize)>> = BTreeMap::new();
        for rec in r.trace.records.iter().filter(|x| matches!(x.kind, RecordKind::Reaction | RecordKind::DeadlineHandler)) {
            prop_assert_eq!(rec.level, level_of[rec.subject.as_str()]);
            seen.entry(rec.tag).or_default().push((&rec.subject, rec.level));
        }
        // Canonical order is by level, and every edge goes to a higher level.
        for list in seen.values() {
            prop_assert!(list.windows(2).all(|w| w[0].1 <= w[1].1));
        }
        for &(a, b) in &g.edges {
            prop_assert!(levels[a] < levels[b]);
        }
    }

    #[test]
    fn body_or_handler_never_both(m in common::model(), script in stalls()) {
        let r = runtime::run(compile(&m.source()).unwrap(), cfg(&script), Callbacks::new()).unwrap();
        let mut seen = BTreeSet::new();
        for rec in r.trace.records.iter().filter(|x| matches!(x.kind, RecordKind::Reaction | RecordKind::DeadlineHandler)) {
            prop_assert!(seen.insert((rec.tag, rec.subject.clone())), "{} twice at {:?}", rec.subject, rec.tag);
        }
        if script.is_empty() {
            // Nothing stalls the virtual clock, so no deadline can be missed.
            prop_assert!(r.trace.records.iter().all(|x| x.kind != RecordKind::DeadlineHandler));
        }
    }

    #[test]
    fn timers_fire_exactly_on_schedule(m in common::model()) {
        let r = runtime::run(compile(&m.source()).unwrap(), cfg(&[]), Callbacks::new()).unwrap();
        for (inst, offset, period) in m.timers() {
            let subject = format!("{inst}.reaction1");
            let got: Vec<Tag> = r.trace.reaction_records().filter(|x| x.subject == subject).map(|x| x.tag).collect();
            let want: Vec<Tag> =
                (0..).map(|k| offset + k * period).take_while(|&t| t <= TIMEOUT_MS).map(|t| Tag::new(ms(t), 0)).collect();
            prop_assert_eq!(got, want, "{}", subject);
        }
    }
}

#[test]
fn stalled_reaction_runs_its_handler() {
    let src = "reactor R { timer t(0, 10 ms) output o: int
        reaction(t) -> o {= set(o, 1); =} deadline(2 ms) {= log(\"late\"); =} }
        main reactor { r = new R() }";
    let script = [ScriptEntry { at: ms(10), kind: EntryKind::Stall(ms(3)) }];
    let r = runtime::run(
        compile(src).unwrap(),
        RunConfig::fast().with_timeout(ms(30)).with_script(script.to_vec()),
        Callbacks::new(),
    )
    .unwrap();
    let kinds: Vec<(i64, RecordKind)> =
        r.trace.reaction_records().map(|x| (x.tag.time.as_nanos() / 1_000_000, x.kind)).collect();
    assert_eq!(
        kinds,
        vec![
            (0, RecordKind::Reaction),
            (10, RecordKind::DeadlineHandler),
            (20, RecordKind::Reaction),
            (30, RecordKind::Reaction),
        ]
    );
}
