//! Scratch harness for picking engine defaults; not part of the library.

use std::time::Instant;

use resplit_core::engine::baselines::random_split;
use resplit_core::engine::evaluate::evaluate_split;
use resplit_core::engine::{self, synth, RunConfig};
use resplit_core::learners::{LearnerKind, LearnerSpec};
use resplit_core::metrics::spearman;
use resplit_core::regularizers::kl_discrete;
use resplit_core::rewards::{MetricKind, RewardMechanism};
use resplit_core::RewardMechanism as RM;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn specs(kinds: &[LearnerKind]) -> Vec<LearnerSpec> {
    kinds.iter().map(|k| LearnerSpec::with_defaults(*k)).collect()
}

fn trend(episodes: &[resplit_core::engine::EpisodeLog]) -> f64 {
    let idx: Vec<f64> = episodes.iter().map(|l| l.episode as f64).collect();
    let rew: Vec<f64> = episodes.iter().map(|l| l.reward).collect();
    spearman(&idx, &rew).unwrap_or(f64::NAN)
}

fn ratio_experiment(
    lr: f64,
    mechanism: RewardMechanism,
    episodes: usize,
    gamma: f64,
    baseline: bool,
    two_learners: bool,
) {
    let data = synth::clusters(200, 3, 2, 2.0, 1000).unwrap();
    println!(
        "== ratio lr={lr} mech={} episodes={episodes} gamma={gamma} baseline={baseline} two={two_learners}",
        mechanism.name()
    );
    let kinds: &[LearnerKind] = if two_learners {
        &[LearnerKind::Logistic, LearnerKind::Tree]
    } else {
        &[LearnerKind::Logistic]
    };
    for seed in 0..10u64 {
        let mut config = RunConfig::new(mechanism, MetricKind::Auc, 0.75, seed, specs(kinds));
        config.lr = lr;
        config.episodes = episodes;
        config.scales.gamma = gamma;
        config.baseline_subtraction = baseline;
        let t0 = Instant::now();
        match engine::run(&data, &config) {
            Ok(out) => {
                let r = out.split.train_ratio();
                let inputs = resplit_core::policy::policy_inputs(&data);
                let probs = out.policy.greedy_decode(&inputs.view()).unwrap().probs;
                let pinned_hi = probs.iter().filter(|p| **p > 0.999).count();
                let pinned_lo = probs.iter().filter(|p| **p < 0.001).count();
                let above = probs.iter().filter(|p| **p >= 0.5).count();
                let mean_p = probs.iter().sum::<f64>() / probs.len() as f64;
                println!(
                    "seed {seed}: ratio {:.4} (|d|={:.4}) src={} eps={} stop={:?} trend={:.3} \
                     probs[mean {:.3} >=.5 {} hi {} lo {}] {:.1}s",
                    r,
                    (r - 0.75).abs(),
                    out.split_source.name(),
                    out.episodes.len(),
                    out.stopped_early,
                    trend(&out.episodes),
                    mean_p,
                    above,
                    pinned_hi,
                    pinned_lo,
                    t0.elapsed().as_secs_f64()
                );
            }
            Err(e) => println!("seed {seed}: ERROR {e}"),
        }
    }
}

fn madelon_experiment(
    lr: f64,
    wide: f64,
    narrow: f64,
    linear_sep: f64,
    episodes: usize,
    mechanism: RewardMechanism,
    gamma: f64,
) {
    let data = synth::banded_clusters(520, 5, 45, wide, narrow, linear_sep, 2000).unwrap();
    let learners = specs(&[LearnerKind::Logistic, LearnerKind::Tree, LearnerKind::Mlp]);
    println!(
        "== madelon lr={lr} gamma={gamma} wide={wide} narrow={narrow} lin={linear_sep} episodes={episodes} mech={}",
        mechanism.name()
    );
    let mut wins = 0;
    let mut trends_pos = 0;
    for seed in 0..10u64 {
        let mut config = RunConfig::new(
            mechanism,
            MetricKind::Auc,
            0.75,
            seed,
            learners.clone(),
        );
        config.lr = lr;
        config.episodes = episodes;
        config.scales.gamma = gamma;
        config.baseline_subtraction = true;
        let t0 = Instant::now();
        match engine::run(&data, &config) {
            Ok(out) => {
                let rds = match evaluate_split(&data, &out.split, &learners, MetricKind::Auc, seed, 1)
                {
                    Ok(r) => r,
                    Err(e) => {
                        println!(
                            "seed {seed}: UNEVALUABLE ({e}) ratio {:.3} src={}",
                            out.split.train_ratio(),
                            out.split_source.name()
                        );
                        continue;
                    }
                };
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rand_split = random_split(data.n_samples(), 0.75, &mut rng).unwrap();
                let rnd =
                    evaluate_split(&data, &rand_split, &learners, MetricKind::Auc, seed, 1)
                        .unwrap();
                let tr = trend(&out.episodes);
                let win = rds.ensemble >= rnd.ensemble;
                if win {
                    wins += 1;
                }
                if tr > 0.0 {
                    trends_pos += 1;
                }
                println!(
                    "seed {seed}: rds {:.4} vs rnd {:.4} ({}) ratio {:.3} src={} trend {:.3} eps={} {:.0}s",
                    rds.ensemble,
                    rnd.ensemble,
                    if win { "WIN" } else { "loss" },
                    out.split.train_ratio(),
                    out.split_source.name(),
                    tr,
                    out.episodes.len(),
                    t0.elapsed().as_secs_f64()
                );
            }
            Err(e) => println!("seed {seed}: ERROR {e}"),
        }
    }
    println!("wins {wins}/10  positive trends {trends_pos}/10");
}

fn probe_learners(wide: f64, narrow: f64, linear_sep: f64) {
    let data = synth::banded_clusters(520, 5, 45, wide, narrow, linear_sep, 2000).unwrap();
    let learners = specs(&[LearnerKind::Logistic, LearnerKind::Tree, LearnerKind::Mlp]);
    println!("== probe wide={wide} narrow={narrow} lin={linear_sep}");
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let split = random_split(data.n_samples(), 0.75, &mut rng).unwrap();
        let rep = evaluate_split(&data, &split, &learners, MetricKind::Auc, seed, 1).unwrap();
        let per: Vec<String> = rep
            .per_learner
            .iter()
            .map(|s| format!("{} {:.4}", s.learner, s.score))
            .collect();
        println!("seed {seed}: {} | ensemble {:.4}", per.join("  "), rep.ensemble);
    }
}

fn trace_run(lr: f64, seed: u64, mechanism: RewardMechanism, which: &str, gamma: f64) {
    let (data, learners) = if which == "ratio" {
        let data = synth::clusters(200, 3, 2, 2.0, 1000).unwrap();
        (data, specs(&[LearnerKind::Logistic]))
    } else {
        let data = synth::banded_clusters(520, 5, 45, 2.0, 0.4, 1.0, 2000).unwrap();
        let learners = specs(&[LearnerKind::Logistic, LearnerKind::Tree, LearnerKind::Mlp]);
        (data, learners)
    };
    let mut config = RunConfig::new(mechanism, MetricKind::Auc, 0.75, seed, learners);
    config.lr = lr;
    config.scales.gamma = gamma;
    config.baseline_subtraction = true;
    if let Ok(v) = std::env::var("TRACE_EPISODES") {
        config.episodes = v.parse().unwrap();
    }
    match engine::run(&data, &config) {
        Ok(out) => {
            println!("== trace lr={lr} seed={seed} mech={}", mechanism.name());
            for log in &out.episodes {
                println!(
                    "{:3} r={:.4} ratio={:.3} learner={} failed={}",
                    log.episode,
                    log.reward,
                    log.ratio,
                    log.chosen_learner.map_or("-".into(), |i| i.to_string()),
                    log.failed as u8
                );
            }
        }
        Err(e) => println!("trace ERROR {e}"),
    }
}

fn iid_experiment(lr: f64, psi: f64, episodes: usize) {
    let data = synth::imbalanced_clusters(400, 0.05, 3, 2, 2.0, 3000).unwrap();
    let targets = data.targets();
    let hard_kl = |split: &resplit_core::Split| {
        let (tr, te) = split.class_counts(targets, 2);
        let n_tr: usize = tr.iter().sum();
        let n_te: usize = te.iter().sum();
        let p: Vec<f64> = te.iter().map(|c| *c as f64 / n_te as f64).collect();
        let q: Vec<f64> = tr.iter().map(|c| *c as f64 / n_tr as f64).collect();
        kl_discrete(&p, &q).unwrap()
    };

    // Reference distribution over random splits.
    let mut rnd_kls: Vec<f64> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    for _ in 0..200 {
        let s = random_split(400, 0.75, &mut rng).unwrap();
        rnd_kls.push(hard_kl(&s));
    }
    rnd_kls.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q25 = rnd_kls[49];
    println!("== iid lr={lr} psi={psi} episodes={episodes} | random 25th pct KL={q25:.6}");

    let mut hits = 0;
    for seed in 0..10u64 {
        let mut config = RunConfig::new(
            RewardMechanism::Deterministic,
            MetricKind::Auc,
            0.75,
            seed,
            specs(&[LearnerKind::Logistic]),
        );
        config.lr = lr;
        config.episodes = episodes;
        config.scales.psi = psi;
        config.scales.gamma = 50.0;
        config.baseline_subtraction = true;
        let t0 = Instant::now();
        match engine::run(&data, &config) {
            Ok(out) => {
                let kl = hard_kl(&out.split);
                let hit = kl <= q25;
                if hit {
                    hits += 1;
                }
                println!(
                    "seed {seed}: KL {:.6} ({}) ratio {:.3} src={} {:.0}s",
                    kl,
                    if hit { "HIT" } else { "miss" },
                    out.split.train_ratio(),
                    out.split_source.name(),
                    t0.elapsed().as_secs_f64()
                );
            }
            Err(e) => println!("seed {seed}: ERROR {e}"),
        }
    }
    println!("hits {hits}/10");
}

fn reg_experiment(lr: f64, psi: f64, episodes: usize) {
    let data = synth::linear_regression(300, 4, 0.5, 4000).unwrap();
    let learners = specs(&[LearnerKind::Ridge, LearnerKind::Tree, LearnerKind::Mlp]);
    println!("== reg lr={lr} psi={psi} episodes={episodes}");
    let mut trends_pos = 0;
    for seed in 0..10u64 {
        let mut config = RunConfig::new(
            RewardMechanism::Deterministic,
            MetricKind::RSquared,
            0.75,
            seed,
            learners.clone(),
        );
        config.lr = lr;
        config.episodes = episodes;
        config.scales.psi = psi;
        config.scales.gamma = 50.0;
        config.baseline_subtraction = true;
        let t0 = Instant::now();
        match engine::run(&data, &config) {
            Ok(out) => {
                let tr = trend(&out.episodes);
                if tr > 0.0 {
                    trends_pos += 1;
                }
                let last = out.episodes.last().unwrap();
                println!(
                    "seed {seed}: ratio {:.3} src={} trend {:.3} last R {:.4} shaped {:.4} eps={} {:.0}s",
                    out.split.train_ratio(),
                    out.split_source.name(),
                    tr,
                    last.reward,
                    last.reward_shaped,
                    out.episodes.len(),
                    t0.elapsed().as_secs_f64()
                );
            }
            Err(e) => println!("seed {seed}: ERROR {e}"),
        }
    }
    println!("positive trends {trends_pos}/10");
}

fn sto_experiment(episodes: usize, seed: u64) {
    let data = synth::clusters(120, 2, 1, 2.5, 5000).unwrap();
    let learners = specs(&[LearnerKind::Logistic, LearnerKind::Tree, LearnerKind::Mlp]);
    let mut config = RunConfig::new(
        RewardMechanism::Stochastic,
        MetricKind::Auc,
        0.75,
        seed,
        learners,
    );
    config.episodes = episodes;
    config.scales.gamma = 50.0;
    config.baseline_subtraction = true;
    let t0 = Instant::now();
    match engine::run(&data, &config) {
        Ok(out) => {
            let mut counts = [0usize; 3];
            for log in &out.episodes {
                counts[log.chosen_learner.unwrap()] += 1;
            }
            let n = out.episodes.len() as f64;
            println!(
                "== sto seed={seed} episodes={} freq {:.4} {:.4} {:.4} (target 0.3333 +-0.07) {:.0}s",
                out.episodes.len(),
                counts[0] as f64 / n,
                counts[1] as f64 / n,
                counts[2] as f64 / n,
                t0.elapsed().as_secs_f64()
            );
        }
        Err(e) => println!("sto ERROR {e}"),
    }
}

fn main() {
    env_logger::init();
    let _ = RM::Deterministic;
    let args: Vec<String> = std::env::args().collect();
    let cmd = args.get(1).map(String::as_str).unwrap_or("help");
    let f = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let u = |i: usize, d: usize| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    match cmd {
        "ratio" => ratio_experiment(
            f(2, 0.01),
            if args.get(3).map(String::as_str) == Some("sto") {
                RewardMechanism::Stochastic
            } else {
                RewardMechanism::Deterministic
            },
            u(4, 150),
            f(5, 0.9),
            args.get(6).map(String::as_str) == Some("base"),
            args.get(7).map(String::as_str) == Some("two"),
        ),
        "madelon" => madelon_experiment(
            f(2, 0.01),
            f(3, 2.0),
            f(4, 0.4),
            f(5, 1.0),
            u(6, 150),
            if args.get(7).map(String::as_str) == Some("sto") {
                RewardMechanism::Stochastic
            } else {
                RewardMechanism::Deterministic
            },
            f(8, 80.0),
        ),
        "probe" => probe_learners(f(2, 2.0), f(3, 0.4), f(4, 1.0)),
        "trace" => trace_run(
            f(2, 0.02),
            u(3, 0) as u64,
            if args.get(4).map(String::as_str) == Some("sto") {
                RewardMechanism::Stochastic
            } else {
                RewardMechanism::Deterministic
            },
            args.get(5).map(String::as_str).unwrap_or("madelon"),
            f(6, 50.0),
        ),
        "iid" => iid_experiment(f(2, 0.01), f(3, 0.5), u(4, 150)),
        "reg" => reg_experiment(f(2, 0.01), f(3, 0.1), u(4, 150)),
        "sto" => sto_experiment(u(2, 300), u(3, 0) as u64),
        _ => println!("commands: ratio | madelon | iid | reg | sto"),
    }
}
