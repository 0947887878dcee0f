use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const EXAMPLES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/examples");

fn rcl(args: &[&str]) -> Output {
    rcl_env(args, &[])
}

fn rcl_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rcl"));
    cmd.args(args).env_remove("RCL_WORKERS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn example(name: &str) -> String {
    format!("{EXAMPLES}/{name}")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const COUNTER: &str = "reactor R { timer t(0, 10 ms) output o: int state n: int = 0
    reaction(t) -> o {= n = n + 1; set(o, n); =} }
    main reactor { r = new R() }";

#[test]
fn check_accepts_the_examples() {
    for name in ["vision_assistant.rcl", "screw_station.rcl", "federated_estop.rcl"] {
        let o = rcl(&["check", &example(name)]);
        assert_eq!(code(&o), 0, "{name}: {}", stderr(&o));
        assert!(stdout(&o).contains("ok"), "{}", stdout(&o));
    }
}

#[test]
fn diagnostics_exit_one_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.rcl", "reactor A { input x: int }\nmain reactor { a = new B() }\n");
    let o = rcl(&["check", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("bad.rcl:2:"), "{}", stderr(&o));

    let o = rcl(&["run", "--fast", dir.path().join("missing.rcl").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("cannot read"), "{}", stderr(&o));
}

#[test]
fn cycles_are_reported_by_check_and_graph() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(
        dir.path(),
        "loop.rcl",
        "reactor P { input i: int output o: int reaction(i) -> o {= set(o, i); =} }
         main reactor { a = new P(); b = new P(); a.o -> b.i; b.o -> a.i }",
    );
    for cmd in ["check", "graph"] {
        let o = rcl(&[cmd, src.to_str().unwrap()]);
        assert_eq!(code(&o), 1, "{cmd}");
        assert!(stderr(&o).contains("causality cycle: a.reaction1 -> b.reaction1"), "{}", stderr(&o));
    }
}

#[test]
fn graph_lists_levels_and_dot() {
    let o = rcl(&["graph", &example("screw_station.rcl")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("level=0"), "{}", stdout(&o));
    let o = rcl(&["graph", "--dot", &example("screw_station.rcl")]);
    assert_eq!(code(&o), 0);
    let dot = stdout(&o);
    assert!(dot.starts_with("digraph"), "{dot}");
    assert!(dot.trim_end().ends_with('}'), "{dot}");
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(code(&rcl(&["run", "--bogus", "x.rcl"])), 64);
    assert_eq!(code(&rcl(&[])), 64);
    assert_eq!(code(&rcl(&["run", "--update-golden", "x.rcl"])), 64);
    assert_eq!(code(&rcl(&["federate", "--federate", "robot", "x.rcl"])), 64);
    assert_eq!(code(&rcl_env(&["run", "--fast", "x.rcl"], &[("RCL_WORKERS", "many")])), 64);
}

#[test]
fn help_lists_every_flag() {
    let o = rcl(&["--help"]);
    assert_eq!(code(&o), 0);
    for sub in ["check", "graph", "run", "federate", "compare"] {
        assert!(stdout(&o).contains(sub), "{sub}");
    }
    let run = stdout(&rcl(&["run", "--help"]));
    for flag in ["--fast", "--workers", "--timeout", "--trace", "--clock-script", "--jitter-seed", "--golden", "--update-golden"] {
        assert!(run.contains(flag), "run: {flag}");
    }
    assert!(run.contains("RCL_WORKERS"));
    let fed = stdout(&rcl(&["federate", "--help"]));
    for flag in ["--mode", "--simulate-net", "--rti", "--federate", "--timeout", "--trace"] {
        assert!(fed.contains(flag), "federate: {flag}");
    }
    assert_eq!(code(&rcl(&["--version"])), 0);
}

#[test]
fn run_golden_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(dir.path(), "counter.rcl", COUNTER);
    let src = src.to_str().unwrap();
    let golden = dir.path().join("golden.jsonl");
    let golden_s = golden.to_str().unwrap();

    let o = rcl(&["run", "--fast", "--timeout", "50 ms", src, "--golden", golden_s, "--update-golden"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(fs::read_to_string(&golden).unwrap().starts_with("{\"config\""));
    let o = rcl(&["run", "--fast", "--timeout", "50 ms", src, "--golden", golden_s]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = rcl(&["run", "--fast", "--timeout", "60 ms", src, "--golden", golden_s]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("first divergence"), "{}", stderr(&o));

    let a = dir.path().join("a.jsonl");
    let o = rcl(&["run", "--fast", "--timeout", "50 ms", "--trace", a.to_str().unwrap(), src]);
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("a.phys.jsonl").exists());
    assert_eq!(code(&rcl(&["compare", golden_s, a.to_str().unwrap()])), 0);

    let other = write(dir.path(), "other.rcl", &COUNTER.replace("n + 1", "n + 2"));
    let b = dir.path().join("b.jsonl");
    rcl(&["run", "--fast", "--timeout", "50 ms", "--trace", b.to_str().unwrap(), other.to_str().unwrap()]);
    let o = rcl(&["compare", golden_s, b.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("different programs"), "{}", stderr(&o));
}

#[test]
fn workers_from_environment_do_not_change_the_trace() {
    let args = ["run", "--fast", "--timeout", "300 ms", &example("vision_assistant.rcl")];
    let one = rcl(&args);
    let four = rcl_env(&args, &[("RCL_WORKERS", "4")]);
    assert_eq!(code(&one), 0, "{}", stderr(&one));
    assert_eq!(code(&four), 0);
    assert_eq!(stdout(&one), stdout(&four));
    let flag = rcl(&["run", "--fast", "--workers", "3", "--jitter-seed", "9", "--timeout", "300 ms", &example("vision_assistant.rcl")]);
    assert_eq!(stdout(&one), stdout(&flag));
}

#[test]
fn runtime_fault_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(dir.path(), "div.rcl", "main reactor { reaction(startup) {= let z = 0; log(1 / z); =} }");
    let o = rcl(&["run", "--fast", src.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn federate_with_simulated_network() {
    let dir = tempfile::tempdir().unwrap();
    let net = write(
        dir.path(),
        "net.jsonl",
        "{\"connection\": \"vision.detect.stop->robot.stop.human\", \"delay_ms\": 25}\n",
    );
    let va = example("vision_assistant.rcl");
    let base = ["federate", "--fast", "--timeout", "200 ms", "--simulate-net", net.to_str().unwrap()];
    let o = rcl(&[&base[..], &["--mode", "decentralized", &va]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("stp faults"), "{}", stderr(&o));
    assert!(stderr(&o).contains("fault: vision.detect.stop->robot.stop.human"), "{}", stderr(&o));

    // Centralized coordination absorbs any latency: same trace as one process.
    let central = rcl(&[&base[..], &[&va[..]]].concat());
    assert_eq!(code(&central), 0, "{}", stderr(&central));
    let single = rcl(&["run", "--fast", "--timeout", "200 ms", &va]);
    assert_eq!(stdout(&central), stdout(&single));

    let bad = write(dir.path(), "bad.jsonl", "{\"connection\": \"vision.stop->robot.human\", \"delay_ms\": 1}\n");
    let o = rcl(&["federate", "--fast", "--simulate-net", bad.to_str().unwrap(), &va]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("vision.detect.stop->robot.stop.human"), "{}", stderr(&o));
}

#[test]
fn federate_over_loopback() {
    let va = example("vision_assistant.rcl");
    let o = rcl(&["federate", "--fast", "--timeout", "100 ms", &va]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let single = rcl(&["run", "--fast", "--timeout", "100 ms", &va]);
    assert_eq!(stdout(&o), stdout(&single));
}
