//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use rave_core::agents::{coefficient_of_variation, inter_onset_intervals, rhyme_timeline, CommandAction, RHYMES};
use rave_core::config::Config;
use rave_core::dm::{
    check_policy_coverage, DialogueManager, DmConfig, DmOutput, EpisodeKind, PolicyTable, DEFAULT_POLICY_TOML,
};
use rave_core::events::Payload;
use rave_core::gaze::Rect;
use rave_core::GazeSample as Sample;
use rave_core::sim::{replay, run_session, Condition, Scenario, SHIPPED_SCENARIOS};
use rave_core::thermal::{ReadinessClassifier, SlopeEstimate};
use rave_core::{Agent, AgentCatalog, Aoi, AoiGeometry, BehaviorCatalog, GazeClassifier, Readiness, Target, ThermalParams};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn shipped() -> Vec<Scenario> {
    SHIPPED_SCENARIOS.iter().map(|(_, t)| Scenario::from_toml(t).expect("shipped scenario")).collect()
}

fn policy_totality() -> Result<String, String> {
    let started = Instant::now();
    let behaviors = BehaviorCatalog::default();
    let policy = PolicyTable::from_toml(DEFAULT_POLICY_TOML, &behaviors).map_err(|e| e.to_string())?;
    let report = check_policy_coverage(&policy, &behaviors);
    let elapsed = started.elapsed();
    // Baseline: every (aoi, readiness, label) triple; the remainder adds the no-behavior case.
    let baseline = Aoi::ALL.len() * Readiness::ALL.len() * behaviors.labels().count();
    ensure(baseline == 460 && report.baseline == baseline, || format!("baseline {}", report.baseline))?;
    ensure(report.checked() == 480, || format!("checked {}", report.checked()))?;
    ensure(report.is_total(), || format!("{} uncovered", report.checked() - report.covered()))?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("{}/{} covered, baseline {baseline}, {:.1} ms", report.covered(), report.checked(), elapsed.as_secs_f64() * 1e3))
}

fn brute_force_label(x: f64, y: f64) -> Aoi {
    let inside = |x0: f64, y0: f64, x1: f64, y1: f64| x0 <= x && x <= x1 && y0 <= y && y <= y1;
    if inside(0.55, 0.15, 0.95, 0.85) {
        Aoi::Avatar
    } else if inside(0.05, 0.25, 0.35, 0.75) {
        Aoi::Robot
    } else if inside(0.35, 0.25, 0.55, 0.75) {
        Aoi::InBetween
    } else {
        Aoi::Outside
    }
}

fn majority_vote_oracle() -> Result<String, String> {
    let geometry = AoiGeometry::default_layout();
    let expected = AoiGeometry::new(
        Rect::new(0.05, 0.25, 0.35, 0.75),
        Rect::new(0.55, 0.15, 0.95, 0.85),
        Rect::new(0.35, 0.25, 0.55, 0.75),
    )
    .map_err(|e| e.to_string())?;
    ensure(geometry == expected, || "default layout changed; update the oracle".into())?;
    let clf = GazeClassifier::new(geometry, Default::default());
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let windows = 20_000;
    let mut ties = 0;
    for w in 0..windows {
        // Snap some points onto region edges so boundaries are exercised.
        let grid = [0.05, 0.15, 0.25, 0.35, 0.55, 0.75, 0.85, 0.95];
        let lost_rate = rng.gen_range(0.0..0.7);
        let samples: Vec<Sample> = (0..60u64)
            .map(|k| {
                let t = w as u64 * 500 + k * 1000 / 120;
                if rng.gen_bool(lost_rate) {
                    return Sample::lost(t);
                }
                let mut c = || if rng.gen_bool(0.1) { grid[rng.gen_range(0..grid.len())] } else { rng.gen_range(0.0..1.0) };
                Sample::at(t, c(), c())
            })
            .collect();
        let ev = clf.classify_window(&samples).map_err(|e| e.to_string())?;

        let mut counts = [0u32; 4];
        let mut valid = 0;
        for s in samples.iter().filter(|s| s.valid) {
            valid += 1;
            counts[Aoi::ALL.iter().position(|&a| a == brute_force_label(s.x, s.y)).unwrap()] += 1;
        }
        let oracle = if (valid as f64) < 0.5 * 60.0 {
            Aoi::Outside
        } else {
            let max = *counts.iter().max().unwrap();
            let tied: Vec<Aoi> = Aoi::ALL.iter().zip(counts).filter(|(_, c)| *c == max).map(|(a, _)| *a).collect();
            if tied.len() > 1 {
                ties += 1;
            }
            // Documented tie order: Avatar, Robot, InBetween, Outside.
            [Aoi::Avatar, Aoi::Robot, Aoi::InBetween, Aoi::Outside].into_iter().find(|a| tied.contains(a)).unwrap()
        };
        ensure(ev.label == oracle, || format!("window {w}: classifier {} vs oracle {oracle}", ev.label))?;
    }
    Ok(format!("{windows} windows agree ({ties} ties)"))
}

#[derive(Clone, Copy, Debug)]
enum Sym {
    Up,
    Down,
    Flat,
    Invalid,
}

fn estimate(sym: Sym, i: usize) -> SlopeEstimate<f64> {
    let end = 10_000 + i as u64 * 1000;
    let (slope, vf) = match sym {
        Sym::Up => (Some(0.02), 1.0),
        Sym::Down => (Some(-0.02), 1.0),
        Sym::Flat => (Some(0.001), 1.0),
        Sym::Invalid => (Some(0.02), 0.3),
    };
    SlopeEstimate { window_end: end, slope, valid_fraction: vf }
}

/// Promotion rules evaluated from scratch on the whole prefix.
fn oracle_state(seq: &[Sym]) -> Readiness {
    let sign = |s: &Sym| match s {
        Sym::Up => 1,
        Sym::Down => -1,
        _ => 0,
    };
    let last = sign(seq.last().unwrap());
    if last == 0 {
        return Readiness::None;
    }
    let run = seq.iter().rev().take_while(|s| sign(s) == last).count();
    match (last, run >= 3) {
        (1, true) => Readiness::VeryPositive,
        (1, false) => Readiness::Positive,
        (_, true) => Readiness::VeryNegative,
        (_, false) => Readiness::Negative,
    }
}

fn thermal_state_machine() -> Result<String, String> {
    let params = ThermalParams::default();
    let alphabet = [Sym::Up, Sym::Down, Sym::Flat, Sym::Invalid];
    let mut sequences = 0;
    for len in 1..=6u32 {
        for code in 0..4usize.pow(len) {
            let seq: Vec<Sym> = (0..len).map(|k| alphabet[(code / 4usize.pow(k)) % 4]).collect();
            let mut clf = ReadinessClassifier::new(params.clone());
            for (i, _) in seq.iter().enumerate() {
                let got = clf.push(&estimate(seq[i], i)).state;
                let want = oracle_state(&seq[..=i]);
                ensure(got == want, || format!("{seq:?} prefix {i}: {got} vs {want}"))?;
            }
            sequences += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for stream in 0..10_000 {
        let mut clf = ReadinessClassifier::new(params.clone());
        for i in 0..rng.gen_range(1..40) {
            let slope = if rng.gen_bool(0.1) { None } else { Some(rng.gen_range(-0.05..0.05)) };
            let vf = rng.gen_range(0.0..=1.0);
            let est = SlopeEstimate { window_end: i * 1000, slope, valid_fraction: vf };
            let state = clf.push(&est).state;
            let informative = slope.filter(|s| vf >= params.min_valid_fraction && s.abs() > params.deadband);
            match informative {
                None => ensure(state == Readiness::None, || format!("stream {stream}: {state} without signal"))?,
                Some(s) => ensure(state.sign() == s.signum() as i8, || format!("stream {stream}: {state} for slope {s}"))?,
            }
        }
    }
    Ok(format!("{sequences} sign sequences exhaustive, 10000 random streams"))
}

fn familiarization_exactness() -> Result<String, String> {
    use Agent::{Avatar, Robot};
    let expected = [
        (Robot, "WakeUp", None),
        (Robot, "Nod", Some(Target::Baby)),
        (Robot, "GazeLeft", Some(Target::Avatar)),
        (Avatar, "GazeRight", Some(Target::Robot)),
        (Avatar, "Nod", Some(Target::Robot)),
        (Avatar, "GazeForward", Some(Target::Baby)),
        (Avatar, "Wave", Some(Target::Baby)),
        (Avatar, "GoodMorning", Some(Target::Both)),
        (Robot, "GazeForward", Some(Target::Baby)),
    ];
    let scenarios = shipped();
    for s in &scenarios {
        let out = run_session(s, &Config::default(), DEFAULT_POLICY_TOML).map_err(|e| e.to_string())?;
        let first: Vec<_> = out
            .trace
            .commands()
            .into_iter()
            .filter_map(|(_, _, c)| match &c.action {
                CommandAction::Execute { behavior, target, plan_id, .. } => Some((c.agent, behavior.clone(), *target, *plan_id)),
                CommandAction::Reset => None,
            })
            .take(9)
            .collect();
        ensure(first.len() == 9, || format!("{}: only {} commands", s.name, first.len()))?;
        for (i, ((a, b, t, plan), (ea, eb, et))) in first.iter().zip(expected).enumerate() {
            ensure(*a == ea && b == eb && *t == et && *plan == 1, || {
                format!("{}: command {i} is {a} {b} {t:?} (plan {plan}), expected {ea} {eb} {et:?}", s.name)
            })?;
        }
    }
    Ok(format!("{} scenarios", scenarios.len()))
}

struct Leaf {
    aoi: Aoi,
    fixated: bool,
    readiness: Readiness,
    behavior: Option<&'static str>,
    rule: &'static str,
    episode: Option<EpisodeKind>,
}

const fn leaf(
    aoi: Aoi,
    fixated: bool,
    readiness: Readiness,
    behavior: Option<&'static str>,
    rule: &'static str,
    episode: Option<EpisodeKind>,
) -> Leaf {
    Leaf { aoi, fixated, readiness, behavior, rule, episode }
}

fn decision_tree_conformance() -> Result<String, String> {
    use Aoi::*;
    use EpisodeKind as E;
    use Readiness as R;
    let leaves = [
        leaf(Avatar, false, R::Positive, None, "avatar-parasympathetic", Some(E::NurseryRhyme)),
        leaf(Avatar, true, R::VeryPositive, None, "avatar-parasympathetic-fixated", Some(E::NurseryRhyme)),
        leaf(Avatar, false, R::Negative, None, "avatar-sympathetic", Some(E::Soothing)),
        leaf(Avatar, false, R::Negative, Some("Crying"), "avatar-distress", Some(E::Soothing)),
        leaf(Avatar, false, R::Positive, Some("Fussing"), "avatar-distress", Some(E::Soothing)),
        leaf(Avatar, false, R::Positive, Some("Waving"), "avatar-engaged-parasympathetic", Some(E::NurseryRhyme)),
        leaf(Avatar, false, R::VeryNegative, Some("Signs"), "avatar-engaged-sympathetic", Some(E::Soothing)),
        leaf(Avatar, false, R::None, Some("Pointing"), "avatar-engaged-neutral", Some(E::AttentionGetting)),
        leaf(Avatar, false, R::None, None, "avatar-default", None),
        leaf(Robot, false, R::Positive, None, "robot-parasympathetic", Some(E::AttentionGetting)),
        leaf(Robot, false, R::Negative, None, "robot-sympathetic", Some(E::Soothing)),
        leaf(Robot, false, R::Positive, Some("Vegetative"), "robot-distress", Some(E::Soothing)),
        leaf(Robot, false, R::Negative, Some("Reaching"), "robot-engaged", Some(E::AttentionGetting)),
        leaf(Robot, false, R::None, None, "robot-default", None),
        leaf(InBetween, false, R::Positive, None, "in-between-parasympathetic", Some(E::NurseryRhyme)),
        leaf(InBetween, false, R::VeryNegative, None, "in-between-sympathetic", Some(E::Soothing)),
        leaf(InBetween, false, R::None, Some("Babbling"), "in-between-default", Some(E::AttentionGetting)),
        leaf(Outside, false, R::Positive, None, "outside-parasympathetic", Some(E::AttentionGetting)),
        leaf(Outside, false, R::Negative, None, "outside-sympathetic", Some(E::Soothing)),
        leaf(Outside, false, R::None, Some("Crying"), "outside-distress", Some(E::Soothing)),
        leaf(Outside, false, R::None, Some("Attention"), "outside-engaged", Some(E::AttentionGetting)),
        leaf(Outside, false, R::None, None, "outside-default", None),
    ];
    let catalog = Arc::new(AgentCatalog::default());
    let policy = Arc::new(PolicyTable::default());
    for (i, l) in leaves.iter().enumerate() {
        let mut dm = DialogueManager::new(DmConfig::default(), policy.clone(), catalog.clone(), i as u64);
        dm.start(0);
        dm.handle(&readiness_payload(l.readiness, 100), 100).map_err(|e| e.to_string())?;
        dm.handle(&aoi_payload(l.aoi, l.fixated, 200), 200).map_err(|e| e.to_string())?;
        let (rule, plan) = match l.behavior {
            Some(label) => {
                let out = dm.handle(&behavior_payload(label, 300), 300).map_err(|e| e.to_string())?;
                let sel = out
                    .iter()
                    .rev()
                    .find_map(|o| match o {
                        DmOutput::State(s) => s.selections.last().cloned(),
                        _ => None,
                    })
                    .ok_or_else(|| format!("leaf {i}: no selection"))?;
                (sel.rule, dm.state().active_plan.as_ref().map(|p| p.plan.clone()))
            }
            None => {
                let sel = dm.select_plan(None, EpisodeKind::Idle, false).map_err(|e| e.to_string())?;
                (sel.rule, sel.plan)
            }
        };
        let episode = plan.as_ref().map(|p| p.episode.kind());
        ensure(rule == l.rule && episode == l.episode, || {
            format!("leaf {i} ({} {} {:?}): rule {rule} episode {episode:?}", l.aoi, l.readiness, l.behavior)
        })?;
        if let Some(p) = &plan {
            ensure(p.provenance == l.rule, || format!("leaf {i}: provenance {}", p.provenance))?;
        }
    }
    Ok(format!("{} leaves", leaves.len()))
}

fn preemption() -> Result<String, String> {
    let config = Config::default();
    let mut discards = 0;
    let mut interrupts = 0;
    for seed in 0..1000u64 {
        let scenario = random_scenario(seed, 60.0, seed % 5 == 0);
        let out = run_session(&scenario, &config, DEFAULT_POLICY_TOML).map_err(|e| format!("seed {seed}: {e}"))?;
        let v = preemption_violations(&out.trace);
        ensure(v.is_empty(), || format!("seed {seed}: {}", v[0]))?;
        ensure(out.rejected_commands == 0, || format!("seed {seed}: {} commands rejected", out.rejected_commands))?;
        discards += out.stats.discarded_steps;
        interrupts += out.stats.interrupts;
    }
    ensure(discards > 0, || "no discards exercised".into())?;
    Ok(format!("1000 sessions, 0 violations ({interrupts} interrupts, {discards} steps discarded)"))
}

fn rhyme_timing() -> Result<String, String> {
    let catalog = AgentCatalog::default();
    let nominal = 1000.0 / 1.5;
    let mut out = Vec::new();
    for r in RHYMES {
        let behavior = catalog.get(Agent::Avatar, r).map_err(|e| e.to_string())?;
        let tl = rhyme_timeline(behavior, catalog.nucleus_hz, catalog.rhyme_padding_ms).map_err(|e| e.to_string())?;
        let ioi = inter_onset_intervals(&tl);
        ensure(!ioi.is_empty(), || format!("{r}: single unit"))?;
        for d in &ioi {
            ensure((d - nominal).abs() <= 0.1 * nominal, || format!("{r}: interval {d:.1} ms"))?;
        }
        let cv = coefficient_of_variation(&ioi);
        ensure(cv.abs() < 1e-9, || format!("{r}: CV {cv}"))?;
        out.push(format!("{r} {}x{:.1}ms", ioi.len(), ioi[0]));
    }
    Ok(format!("{}, CV 0", out.join(", ")))
}

fn determinism_and_replay() -> Result<String, String> {
    let config = Config::default();
    let mut slowest = Duration::ZERO;
    for s in shipped() {
        let started = Instant::now();
        let a = run_session(&s, &config, DEFAULT_POLICY_TOML).map_err(|e| e.to_string())?;
        let elapsed = started.elapsed();
        if s.duration_s >= 300.0 {
            ensure(elapsed < Duration::from_secs(5), || format!("{}: {elapsed:?}", s.name))?;
            slowest = slowest.max(elapsed);
        }
        let b = run_session(&s, &config, DEFAULT_POLICY_TOML).map_err(|e| e.to_string())?;
        ensure(a.trace.hash() == b.trace.hash(), || format!("{}: hashes differ", s.name))?;
        let report = replay(&a.trace, None).map_err(|e| e.to_string())?;
        ensure(report.is_match(), || format!("{}: {:?}", s.name, report.divergence))?;
    }
    ensure(slowest > Duration::ZERO, || "no 5-minute scenario shipped".into())?;
    Ok(format!("{} scenarios stable and replayed; 5-minute run {:.0} ms", SHIPPED_SCENARIOS.len(), slowest.as_secs_f64() * 1e3))
}

fn parent_non_contingency() -> Result<String, String> {
    let config = Config::default();
    let mut checked = 0;
    for base in shipped() {
        let mut without = base.clone();
        without.condition = Condition::TwoWay;
        without.parent_joined_at_s = None;
        let mut with = base.clone();
        with.condition = Condition::ThreeWay;
        with.parent_joined_at_s = Some(base.duration_s / 2.0);
        let cmds = |s: &Scenario| -> Result<Vec<String>, String> {
            let out = run_session(s, &config, DEFAULT_POLICY_TOML).map_err(|e| e.to_string())?;
            Ok(commands(&out.trace).iter().map(|m| serde_json::to_string(m).unwrap()).collect())
        };
        let (a, b) = (cmds(&without)?, cmds(&with)?);
        ensure(a == b, || format!("{}: command streams differ", base.name))?;
        let flips = with_parent_state(&with)?;
        ensure(flips, || format!("{}: parent_joined never observed", base.name))?;
        checked += 1;
    }
    Ok(format!("{checked} scenario pairs byte-identical"))
}

fn with_parent_state(s: &Scenario) -> Result<bool, String> {
    let out = run_session(s, &Config::default(), DEFAULT_POLICY_TOML).map_err(|e| e.to_string())?;
    Ok(out.trace.records.iter().any(|m| matches!(&m.payload, Payload::State(st) if st.state.parent_joined)))
}

fn main() {
    let checks: [(&str, Check); 9] = [
        ("policy totality", policy_totality),
        ("majority-vote oracle", majority_vote_oracle),
        ("thermal state machine", thermal_state_machine),
        ("familiarization exactness", familiarization_exactness),
        ("decision-tree conformance", decision_tree_conformance),
        ("preemption", preemption),
        ("rhyme timing", rhyme_timing),
        ("determinism and replay", determinism_and_replay),
        ("parent non-contingency", parent_non_contingency),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match result {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(e) => {
                failed += 1;
                println!("FAIL  {name}: {e}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
