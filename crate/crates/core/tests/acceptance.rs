//! Acceptance gate: one pass/fail line per criterion, nonzero exit on failure.
//!
//! cargo test --release -p bilevel-cot --test acceptance

mod common;

use std::time::Instant;

use bilevel_cot::action::{entropy, ActionDistribution};
use bilevel_cot::env::{
    Action, ChainState, ChainWorld, ChainWorldConfig, EnvConfig, Environment, FourRoom,
    FourRoomConfig, FourRoomState, Position, RewardSide,
};
use bilevel_cot::harness::{cmd_train, METRICS_FILE};
use bilevel_cot::prompt::{Similarity, UcbState};
use bilevel_cot::trainer::{
    mean, train, ActionMode, MetricsReport, Resources, SeedRun, TrainOptions,
    TrainOutcome, TrainerConfig,
};
use proptest::prelude::*;
use proptest::test_runner::{Config as RunnerConfig, TestRunner};

use common::{
    chain_analytic_optimum, chain_value_iteration, enumeration_gradient_check, kitchen_at,
    load_config, matches_golden, ppo_gradient_check, prompt_gradient_check, scripted_trace,
    ucb_oracle, FOURROOM_SCRIPT, SALAD_SCRIPT,
};

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn config(name: &str, set: &[(&str, &str)]) -> TrainerConfig {
    load_config(name, set).config
}

fn run(config: &TrainerConfig) -> TrainOutcome {
    let res = Resources::from_config(config, &Default::default()).unwrap();
    train(config, &res, &TrainOptions::default()).unwrap()
}

fn entropies(report: &MetricsReport) -> (f64, f64) {
    let init: Vec<f64> = report.seeds.iter().map(|s| s.initial_entropy).collect();
    let fin: Vec<f64> = report.seeds.iter().map(|s| s.final_entropy).collect();
    (mean(&init), mean(&fin))
}

fn entropy_closed_forms() -> Verdict {
    let mut worst: f64 = 0.0;
    for n in [2usize, 4] {
        let h = entropy(&vec![1.0 / n as f64; n]);
        worst = worst.max((h - (n as f64).ln()).abs());
    }
    let peaked = ActionDistribution::from_logits(&[50.0, 0.0, -50.0, -50.0], 1e-6);
    let h = entropy(&peaked.probs);
    check(
        worst <= 1e-9 && h <= 1e-4,
        format!("uniform error {worst:.1e}, near-deterministic entropy {h:.2e}"),
    )
}

fn gradient_oracles() -> Verdict {
    let start = Instant::now();
    let mut checked = 0;
    for (name, result) in [
        ("dot", prompt_gradient_check(Similarity::Dot, 0)),
        ("cosine", prompt_gradient_check(Similarity::Cosine, 1)),
        ("ppo", ppo_gradient_check(7).0),
    ] {
        match result {
            Ok(n) => checked += n,
            Err((i, g, n)) => return Err(format!("{name} component {i}: analytic {g} numeric {n}")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 60.0, format!("{checked} components in {secs:.1}s"))
}

fn monte_carlo_vs_enumeration() -> Verdict {
    let c = enumeration_gradient_check(100_000, 5);
    check(
        c.max_abs_z <= 3.0,
        format!("{} samples, max |z| {:.2}", c.samples, c.max_abs_z),
    )
}

fn environment_oracles() -> Verdict {
    let cw = ChainWorldConfig::default();
    for side in [RewardSide::Left, RewardSide::Right] {
        let (_, greedy) = chain_value_iteration(&cw, side);
        for p in 1..cw.length - 1 {
            let mut env = ChainWorld::new(cw.clone()).unwrap();
            env.set_state(ChainState { position: p, rewarded: side, steps: 0, done: false })
                .unwrap();
            let mut total = 0.0;
            while !env.is_done() {
                total += env.step(Action(greedy[env.state().position])).unwrap().reward;
            }
            if total != chain_analytic_optimum(&cw, side, p) {
                return Err(format!("chain {side:?} from {p}: return {total}"));
            }
        }
    }

    let mut fr = FourRoom::new(FourRoomConfig::default()).unwrap();
    fr.set_state(FourRoomState {
        agent: Position::new(7, 7),
        goal: Position::new(1, 1),
        steps: 0,
        done: false,
    })
    .unwrap();
    let (rewards, trace) = scripted_trace(&mut fr, &FOURROOM_SCRIPT);
    let mut expected = vec![-0.4; FOURROOM_SCRIPT.len()];
    expected[1] = -2.0;
    expected[7] = -2.0;
    expected[15] = 50.0;
    if rewards != expected || !fr.is_done() {
        return Err(format!("fourroom rewards {rewards:?}"));
    }
    if !matches_golden("fourroom_trace.jsonl", &trace) {
        return Err("fourroom golden trace differs".into());
    }

    let mut oc = kitchen_at((1, 2));
    let (rewards, trace) = scripted_trace(&mut oc, &SALAD_SCRIPT);
    let bonus: Vec<(usize, f64)> = rewards
        .iter()
        .enumerate()
        .filter(|(_, &r)| r != -0.5)
        .map(|(t, &r)| (t, r + 0.5))
        .collect();
    let want = [(0, 10.0), (4, 30.0), (9, 10.0), (17, 30.0), (31, 50.0), (37, 100.0)];
    if bonus != want || !oc.is_done() {
        return Err(format!("overcooked bonuses {bonus:?}"));
    }
    if !matches_golden("overcooked_salad_trace.jsonl", &trace) {
        return Err("overcooked golden trace differs".into());
    }
    // an incomplete plate earns nothing at the counter
    let mut oc = kitchen_at((1, 4));
    let gated = [3, 0, 0, 0, 1, 1, 1, 0, 0, 0, 1, 2, 1, 1, 2, 2, 3, 3, 2];
    let (rewards, _) = scripted_trace(&mut oc, &gated);
    check(
        !oc.is_done() && *rewards.last().unwrap() == -0.5,
        "chain optimum at 16 starts, fourroom and salad traces match".into(),
    )
}

fn vanilla_learns() -> Verdict {
    let report = run(&config("vanilla", &[])).report;
    let finals: Vec<f64> = report.seeds.iter().map(|s| s.final_norm_reward).collect();
    let m = mean(&finals);
    check(
        m >= 0.9,
        format!("final normalized reward {m:.3} over {} seeds {finals:.3?}", finals.len()),
    )
}

fn prompt_converges_to_situation() -> Verdict {
    let cfg = config("chainworld_full", &[("episodes", "4000")]);
    let res = Resources::from_config(&cfg, &Default::default()).unwrap();
    let outcome = train(&cfg, &res, &TrainOptions::default()).unwrap();
    let EnvConfig::Chainworld(cw) = cfg.env.clone() else {
        unreachable!()
    };
    let mentions = |text: &str, word: &str| {
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .any(|w| w == word)
    };
    let mut per_case = Vec::new();
    for ck in &outcome.finals {
        let seed_run = SeedRun::from_checkpoint(&cfg, &res, ck).unwrap();
        let mut env = ChainWorld::new(cw.clone()).unwrap();
        for (side, word) in [(RewardSide::Left, "left"), (RewardSide::Right, "right")] {
            let mut probs = Vec::new();
            for position in 1..cw.length - 1 {
                env.set_state(ChainState { position, rewarded: side, steps: 0, done: false })
                    .unwrap();
                let dist = seed_run
                    .prompt_distribution(&[env.observation()])
                    .unwrap()
                    .unwrap();
                probs.push(
                    res.candidates
                        .iter()
                        .filter(|c| mentions(&c.text, word))
                        .map(|c| dist[c.id])
                        .sum::<f64>(),
                );
            }
            per_case.push(mean(&probs));
        }
    }
    let worst = per_case.iter().cloned().fold(f64::INFINITY, f64::min);
    check(
        worst >= 0.9,
        format!(
            "consistent-prompt probability mean {:.3}, worst seed-side {worst:.3}",
            mean(&per_case)
        ),
    )
}

struct Ablation {
    learned: MetricsReport,
}

fn ablation_ordering() -> (Verdict, Ablation) {
    let learned = run(&config("chainworld_full", &[])).report;
    let random = run(&config("chainworld_full", &[("selector", "random")])).report;
    let ucb = run(&config("chainworld_full", &[("selector", "ucb")])).report;
    let env_reward = run(&config("chainworld_full", &[("objective", "env-reward")])).report;

    let margin = |other: &MetricsReport| {
        let pooled = (learned.auc_stderr.powi(2) + other.auc_stderr.powi(2)).sqrt();
        (learned.auc_mean - other.auc_mean, pooled)
    };
    let (d_random, se_random) = margin(&random);
    let (d_ucb, se_ucb) = margin(&ucb);
    let h_learned = entropies(&learned).1;
    let h_env = entropies(&env_reward).1;
    let verdict = check(
        d_random > se_random && d_ucb > se_ucb && h_learned < h_env,
        format!(
            "AUC learned {:.4}±{:.4}, random {:.4}±{:.4}, ucb {:.4}±{:.4}; \
             final entropy neg-entropy {h_learned:.4} vs env-reward {h_env:.4}",
            learned.auc_mean,
            learned.auc_stderr,
            random.auc_mean,
            random.auc_stderr,
            ucb.auc_mean,
            ucb.auc_stderr,
        ),
    );
    (verdict, Ablation { learned })
}

fn entropy_decays(chain: &MetricsReport) -> Verdict {
    let fourroom = run(&config("fourroom", &[])).report;
    let mut details = Vec::new();
    let mut ok = true;
    for (name, report) in [("chainworld", chain), ("fourroom", &fourroom)] {
        let (init, fin) = entropies(report);
        ok &= fin < init;
        let seeds: Vec<String> = report
            .seeds
            .iter()
            .map(|s| format!("{:.3}->{:.3}", s.initial_entropy, s.final_entropy))
            .collect();
        details.push(format!("{name} {init:.3}->{fin:.3} [{}]", seeds.join(" ")));
    }
    check(ok, details.join("; "))
}

fn replay_is_byte_identical() -> Verdict {
    let resolved = load_config("chainworld_full", &[("seeds", "[0, 1]"), ("episodes", "64")]);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    cmd_train(&resolved, a.path()).unwrap();
    cmd_train(&resolved, b.path()).unwrap();
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join(METRICS_FILE)).unwrap();
    let (x, y) = (read(&a), read(&b));
    check(x == y, format!("{} bytes of metrics, identical: {}", x.len(), x == y))
}

fn ucb_semantics() -> Verdict {
    let mut runner = TestRunner::new(RunnerConfig {
        cases: 256,
        failure_persistence: None,
        ..RunnerConfig::default()
    });
    let strategy = (
        1usize..6,
        prop::collection::vec(prop::collection::vec(-2.0f64..0.0, 1..20), 1..5),
        0.0f64..2.0,
    );
    let property = runner.run(&strategy, |(k, episodes, c)| {
        let mut ucb = UcbState::new(k, c);
        for rewards in &episodes {
            ucb.begin_episode();
            prop_assert!(ucb.counts().iter().all(|&n| n == 0));
            let (mut counts, mut sums) = (vec![0u64; k], vec![0.0; k]);
            for (t, &r) in rewards.iter().enumerate() {
                let arm = ucb.select();
                if t < k {
                    prop_assert_eq!(arm, t);
                }
                prop_assert_eq!(arm, ucb_oracle(&counts, &sums, c));
                ucb.update(arm, r);
                counts[arm] += 1;
                sums[arm] += r;
            }
        }
        Ok(())
    });
    if let Err(e) = property {
        return Err(format!("property failed: {e}"));
    }

    let cfg = config("chainworld_full", &[("selector", "ucb"), ("seeds", "[0]")]);
    let res = Resources::from_config(&cfg, &Default::default()).unwrap();
    let seed_run = SeedRun::new(&cfg, &res, 0).unwrap();
    let k = res.candidates.len();
    for e in 0..50 {
        let t = seed_run.rollout(e, ActionMode::Sample).unwrap();
        let ids: Vec<usize> = t.records.iter().map(|r| r.prompt_id.unwrap()).collect();
        let n = ids.len().min(k);
        if ids[..n] != (0..n).collect::<Vec<_>>()[..] {
            return Err(format!("episode {e} opened with {ids:?}"));
        }
    }
    Ok("256 property cases; 50 trainer episodes open with arms in id order".into())
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, v: Verdict| {
        let (tag, detail) = match v {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n}: {tag} {detail}");
    };
    report(1, entropy_closed_forms());
    report(2, gradient_oracles());
    report(3, monte_carlo_vs_enumeration());
    report(4, environment_oracles());
    report(5, vanilla_learns());
    report(6, prompt_converges_to_situation());
    let (v7, ablation) = ablation_ordering();
    report(7, v7);
    report(8, entropy_decays(&ablation.learned));
    report(9, replay_is_byte_identical());
    report(10, ucb_semantics());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
