//! Acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Run a subset by number: `cargo test --test acceptance -- 1 5 7`.
//! Failing criteria only fail the process when `ACCEPTANCE_STRICT` is set.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use strateval::evaluators::{
    holdout_eval, ips_eval, per_stratum_eval, simpson_audit, stratified_eval, IpsOptions, PerStratum, TestView,
};
use strateval::experiment::{run_seed, ExperimentConfig, SeedResult};
use strateval::metrics::{ndcg, EvalContext, MetricSpec, RankedList, Rankings};
use strateval::models::{fit, sweep_configs, Algorithm, ModelConfig};
use strateval::propensity::{fit_gamma, fit_propensities, PropensityTable};
use strateval::simulator::{generate, Policy, SimConfig};
use strateval::stats::{kendall_pair_counts, kendall_tau_b, steiger_test, PairCounts};
use strateval::strata::{assign_strata, StrataRule, StratumWeights};

use strateval::Result;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

// ---------------------------------------------------------------- 1, 2

fn fixed_strata(values: &[f64], weights: &[f64]) -> Result<f64> {
    let per = PerStratum {
        spec: MetricSpec::full(),
        users: Vec::<String>::new().into(),
        values: values.iter().map(|&v| Some(v)).collect(),
        per_user: vec![Vec::new(); values.len()],
        user_counts: vec![1; values.len()],
        interaction_counts: vec![0; values.len()],
    };
    let w = StratumWeights { weights: weights.to_vec(), counts: vec![0; weights.len()] };
    Ok(stratified_eval(&per, &w)?.overall)
}

fn kidney_stones() -> Result<Verdict> {
    let w = [0.51, 0.49];
    let a = fixed_strata(&[0.93, 0.73], &w)?;
    let b = fixed_strata(&[0.87, 0.69], &w)?;
    let ok = (a - 0.832).abs() <= 1e-3 && (b - 0.782).abs() <= 1e-3;
    Ok(verdict(ok, format!("A = {a:.4} (0.832), B = {b:.4} (0.782), tolerance 0.001")))
}

fn two_strata_fixture() -> Result<Verdict> {
    let w = [0.99, 0.01];
    let a = fixed_strata(&[0.339, 0.695], &w)?;
    let b = fixed_strata(&[0.350, 0.418], &w)?;
    let ok = (a - 0.343).abs() <= 1e-3 && (b - 0.351).abs() <= 1e-3;
    Ok(verdict(ok, format!("{a:.4} (0.343), {b:.4} (0.351), tolerance 0.001")))
}

// ---------------------------------------------------------------- 3

fn random_sim(rng: &mut ChaCha8Rng) -> SimConfig {
    let n_items = rng.random_range(30..=90);
    let policies = [Policy::PopularityBiased, Policy::TrainedMf, Policy::UniformRandom];
    SimConfig {
        n_users: rng.random_range(40..=150),
        n_items,
        true_rank: rng.random_range(2..=6),
        exposure_budget: rng.random_range(3..=8),
        sessions: rng.random_range(1..=4),
        deployed_policy: policies[rng.random_range(0..3)],
        interact_noise: rng.random_range(0.0..0.1),
        relevance_quantile: rng.random_range(0.05..0.3),
        seed: rng.random(),
        ..SimConfig::default()
    }
}

fn small_models(seed: u64) -> Vec<ModelConfig> {
    let mut base = ModelConfig::default().with_seed(seed);
    base.epochs = 10;
    base.als_iterations = 3;
    sweep_configs(&Algorithm::ALL, &[4], &base)
}

fn reduction_identity() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let specs = [MetricSpec::full(), MetricSpec::at(5), MetricSpec::at(10)];
    let mut checked = 0usize;
    let mut mismatches = 0usize;
    for _ in 0..100 {
        let sim = random_sim(&mut rng);
        let log = generate(&sim)?;
        let table = fit_propensities(&log.closed(), Default::default())?;
        let ctx = EvalContext::new(&log.closed_train, &[&log.closed_test]);
        let view = TestView::new(&ctx, &log.closed_test)?;
        let one = assign_strata(&table, 1, StrataRule::default())?;
        for mc in small_models(sim.seed) {
            let model = fit(&mc, &log.closed_train)?;
            let rankings = Rankings::build(&ctx, &model.scorer(ctx.items()));
            for spec in specs {
                let h = holdout_eval(&rankings, &view, spec)?;
                let per = per_stratum_eval(&rankings, &view, &ctx, &one, spec)?;
                let s = stratified_eval(&per, &per.weights()?)?;
                checked += 1;
                if h.overall.to_bits() != s.overall.to_bits() {
                    mismatches += 1;
                }
            }
        }
    }
    Ok(verdict(
        mismatches == 0,
        format!("{checked} model x metric values over 100 instances, {mismatches} not bit-identical"),
    ))
}

// ---------------------------------------------------------------- 4

fn ips_identities() -> Result<Verdict> {
    let sim = SimConfig { n_users: 600, n_items: 200, ..SimConfig::default() };
    let log = generate(&sim)?;
    let table = fit_propensities(&log.closed(), Default::default())?;
    let ctx = EvalContext::new(&log.closed_train, &[&log.closed_test]);
    let view = TestView::new(&ctx, &log.closed_test)?;
    let unit = PropensityTable::uniform(ctx.items(), 1.0);
    let factors = [0.5, 3.7, 1e-3];
    let scaled: Vec<PropensityTable> = factors.iter().map(|&f| table.rescaled(f)).collect();
    let configs = sweep_configs(&Algorithm::ALL, &strateval::models::standard_sizes(), &ModelConfig::default());
    let specs = [MetricSpec::full(), MetricSpec::at(10)];
    let opts = IpsOptions::default();

    let mut unit_mismatch = 0usize;
    let mut base = vec![Vec::new(); specs.len()];
    let mut rescaled = vec![vec![Vec::new(); factors.len()]; specs.len()];
    for mc in &configs {
        let model = fit(mc, &log.closed_train)?;
        let rankings = Rankings::build(&ctx, &model.scorer(ctx.items()));
        for (si, &spec) in specs.iter().enumerate() {
            let h = holdout_eval(&rankings, &view, spec)?.overall;
            let u = ips_eval(&rankings, &view, &ctx, &unit, spec, opts)?.overall;
            if h.to_bits() != u.to_bits() {
                unit_mismatch += 1;
            }
            base[si].push(ips_eval(&rankings, &view, &ctx, &table, spec, opts)?.overall);
            for (fi, t) in scaled.iter().enumerate() {
                rescaled[si][fi].push(ips_eval(&rankings, &view, &ctx, t, spec, opts)?.overall);
            }
        }
    }
    let mut min_tau = f64::INFINITY;
    for si in 0..specs.len() {
        for col in &rescaled[si] {
            min_tau = min_tau.min(kendall_tau_b(&base[si], col)?.unwrap_or(f64::NAN));
        }
    }
    Ok(verdict(
        unit_mismatch == 0 && min_tau == 1.0,
        format!(
            "{} models: unit propensities differ from holdout in {unit_mismatch} cases; min tau-b under rescaling {min_tau}",
            configs.len()
        ),
    ))
}

// ---------------------------------------------------------------- 5

fn brute_force_counts(x: &[f64], y: &[f64]) -> PairCounts {
    let n = x.len();
    let (mut ties_x, mut ties_y, mut score) = (0u64, 0u64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].partial_cmp(&x[j]).unwrap();
            let dy = y[i].partial_cmp(&y[j]).unwrap();
            use std::cmp::Ordering::Equal;
            if dx == Equal {
                ties_x += 1;
            }
            if dy == Equal {
                ties_y += 1;
            }
            if dx != Equal && dy != Equal {
                score += if dx == dy { 1 } else { -1 };
            }
        }
    }
    PairCounts { n0: (n * (n - 1) / 2) as u64, ties_x, ties_y, score }
}

fn tau_b_from(c: &PairCounts) -> Option<f64> {
    let dx = (c.n0 - c.ties_x) as f64;
    let dy = (c.n0 - c.ties_y) as f64;
    (dx > 0.0 && dy > 0.0).then(|| c.score as f64 / (dx * dy).sqrt())
}

fn kendall_oracle() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut count_mismatch = 0usize;
    let mut max_err = 0.0f64;
    for case in 0..1000 {
        let n = rng.random_range(2..=60);
        // every other case draws from a few levels so ties are common
        let levels = if case % 2 == 0 { rng.random_range(2..=6) } else { 0 };
        let draw = |rng: &mut ChaCha8Rng| -> f64 {
            if levels > 0 {
                rng.random_range(0..levels) as f64
            } else {
                rng.random::<f64>()
            }
        };
        let x: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let y: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let fast = kendall_pair_counts(&x, &y)?;
        let slow = brute_force_counts(&x, &y);
        if fast != slow {
            count_mismatch += 1;
        }
        match (kendall_tau_b(&x, &y)?, tau_b_from(&slow)) {
            (Some(a), Some(b)) => max_err = max_err.max((a - b).abs()),
            (None, None) => {}
            _ => count_mismatch += 1,
        }
    }
    Ok(verdict(
        count_mismatch == 0 && max_err <= 1e-12,
        format!("1000 vectors: {count_mismatch} pair-count mismatches, max |tau difference| {max_err:.1e}"),
    ))
}

// ---------------------------------------------------------------- 6

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn steiger_calibration() -> Result<Verdict> {
    // corr(x,y) = corr(x,z) = 0.5, corr(y,z) = 0.4: the null holds
    let (rxy, rxz, ryz) = (0.5f64, 0.5f64, 0.4f64);
    let l21 = rxy;
    let l22 = (1.0 - l21 * l21).sqrt();
    let l31 = rxz;
    let l32 = (ryz - l31 * l21) / l22;
    let l33 = (1.0 - l31 * l31 - l32 * l32).sqrt();
    let (trials, n, alpha) = (10_000usize, 60usize, 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut x, mut y, mut z) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut rejections = 0usize;
    for _ in 0..trials {
        for k in 0..n {
            let e: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
            x[k] = e[0];
            y[k] = l21 * e[0] + l22 * e[1];
            z[k] = l31 * e[0] + l32 * e[1] + l33 * e[2];
        }
        let t = steiger_test(pearson(&x, &y), pearson(&x, &z), pearson(&y, &z), n)?;
        if t.p < alpha {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / trials as f64;
    Ok(verdict(
        (0.03..=0.07).contains(&rate),
        format!("rejection rate {rate:.4} at alpha 0.05 over {trials} null samples of size {n} (band [0.03, 0.07])"),
    ))
}

// ---------------------------------------------------------------- 7

/// Exact discrete power-law (Zipf) sampler by rejection from a continuous
/// Pareto envelope.
fn zipf(rng: &mut ChaCha8Rng, a: f64) -> u64 {
    let b = 2f64.powf(a - 1.0);
    loop {
        let u: f64 = 1.0 - rng.random::<f64>();
        let v: f64 = rng.random();
        let x = u.powf(-1.0 / (a - 1.0)).floor();
        if !(x.is_finite() && x < 1e18) {
            continue;
        }
        let t = (1.0 + 1.0 / x).powf(a - 1.0);
        if v * x * (t - 1.0) / (b - 1.0) <= t / b {
            return x as u64;
        }
    }
}

fn gamma_recovery() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut parts = Vec::new();
    let mut ok = true;
    for truth in [1.5, 2.5, 3.5] {
        // counts beyond u32 are redrawn; that tail holds under 2e-5 of the mass
        let counts: Vec<u32> = (0..10_000)
            .map(|_| loop {
                let c = zipf(&mut rng, truth);
                if c <= u32::MAX as u64 {
                    break c as u32;
                }
            })
            .collect();
        let g = fit_gamma(&counts)?.gamma;
        ok &= (g - truth).abs() <= 0.1;
        parts.push(format!("{truth} -> {g:.3}"));
    }
    Ok(verdict(ok, format!("{} (tolerance 0.1, n = 10000)", parts.join(", "))))
}

// ---------------------------------------------------------------- 8 to 11

const SEEDS: u64 = 20;

fn sweep_results() -> &'static std::result::Result<Vec<SeedResult>, String> {
    static RESULTS: OnceLock<std::result::Result<Vec<SeedResult>, String>> = OnceLock::new();
    RESULTS.get_or_init(|| {
        let config = ExperimentConfig::default();
        let started = Instant::now();
        (0..SEEDS)
            .map(|seed| {
                let r = run_seed(&config, seed).map_err(|e| format!("seed {seed}: {e}"));
                eprintln!("  seed {seed} done after {:.0}s", started.elapsed().as_secs_f64());
                r
            })
            .collect()
    })
}

fn shared() -> Result<&'static [SeedResult], String> {
    sweep_results().as_ref().map(|v| v.as_slice()).map_err(Clone::clone)
}

fn audit_k_position(r: &SeedResult, k: usize) -> usize {
    r.strata.iter().position(|&x| x == k).expect("audit strata count is evaluated")
}

fn simpson_demo() -> std::result::Result<Verdict, String> {
    let results = shared()?;
    let config = ExperimentConfig::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for spec in &config.specs {
        let mut seeds_with_reversal = 0usize;
        let mut seeds_with_dominant = 0usize;
        let mut audit_consistent = true;
        for r in results {
            let pos = audit_k_position(r, config.audit_k);
            let weights = &r.weights[pos];
            let s = r.spec(*spec).expect("configured metric");
            let dominant: Vec<usize> = (0..weights.len()).filter(|&k| weights[k] >= config.dominant_weight).collect();
            if !dominant.is_empty() {
                seeds_with_dominant += 1;
            }
            // independent pair scan
            let mut reversals = 0usize;
            for &d in &dominant {
                for a in 0..r.models.len() {
                    for b in 0..r.models.len() {
                        if let (Some(va), Some(vb)) = (s.audit_strata[a][d], s.audit_strata[b][d]) {
                            if s.holdout[a] > s.holdout[b] && va < vb {
                                reversals += 1;
                            }
                        }
                    }
                }
            }
            let flags = simpson_audit(&r.models, &s.holdout, &s.audit_strata, weights, config.dominant_weight);
            audit_consistent &= flags.len() == reversals;
            if reversals > 0 {
                seeds_with_reversal += 1;
            }
        }
        let pass = 2 * seeds_with_reversal >= SEEDS as usize && audit_consistent;
        ok &= pass;
        parts.push(format!(
            "{spec}: reversal in a >=90% stratum in {seeds_with_reversal}/{SEEDS} seeds (such a stratum exists in {seeds_with_dominant}), audit flags every reversal: {audit_consistent}"
        ));
    }
    Ok(verdict(ok, parts.join("; ")))
}

fn headline() -> std::result::Result<Verdict, String> {
    let results = shared()?;
    let config = ExperimentConfig::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for spec in &config.specs {
        let mut wins = 0usize;
        let mut diff = 0.0;
        for r in results {
            let pos = audit_k_position(r, config.audit_k);
            let t = r.taus(*spec).expect("configured metric");
            let (h, s) = (t.holdout.unwrap_or(0.0), t.stratified[pos].unwrap_or(0.0));
            if s >= h {
                wins += 1;
            }
            diff += s - h;
        }
        let mean = diff / SEEDS as f64;
        let pass = wins as f64 >= 0.7 * SEEDS as f64 && mean > 0.0;
        ok &= pass;
        parts.push(format!("{spec}: stratified (K={}) >= holdout in {wins}/{SEEDS} seeds, mean tau gain {mean:+.4}", config.audit_k));
    }
    Ok(verdict(ok, parts.join("; ")))
}

fn strata_sweep() -> std::result::Result<Verdict, String> {
    let results = shared()?;
    let config = ExperimentConfig::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for spec in &config.specs {
        let mut mean_by_k = vec![0.0; config.strata.len()];
        for r in results {
            let t = r.taus(*spec).expect("configured metric");
            for (m, v) in mean_by_k.iter_mut().zip(&t.stratified) {
                *m += v.unwrap_or(0.0) / SEEDS as f64;
            }
        }
        let at = |k: usize| mean_by_k[config.strata.iter().position(|&x| x == k).expect("K evaluated")];
        let rest: Vec<f64> = (2..=10).map(at).collect();
        let m = rest.iter().sum::<f64>() / rest.len() as f64;
        let sd = (rest.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / rest.len() as f64).sqrt();
        let cv = sd / m.abs();
        let pass = m > at(1) && cv < 0.15;
        ok &= pass;
        parts.push(format!("{spec}: tau K=1 {:.4}, mean K=2..10 {m:.4}, CV {cv:.3}", at(1)));
    }
    Ok(verdict(ok, parts.join("; ")))
}

fn model_sanity() -> std::result::Result<Verdict, String> {
    let results = shared()?;
    let spec = MetricSpec::at(10);
    let mut parts = Vec::new();
    let mut ok = true;
    for alg in [Algorithm::Mf, Algorithm::Bpr, Algorithm::Wmf] {
        let prefix = format!("{}-", alg.name());
        let mut seeds_ok = 0usize;
        for r in results {
            let s = r.spec(spec).expect("nDCG@10 evaluated");
            let bo = r.models.iter().position(|m| m == "BO").expect("BO in the sweep");
            let all = r
                .models
                .iter()
                .zip(&s.holdout)
                .filter(|(m, _)| m.starts_with(&prefix))
                .all(|(_, &v)| v > s.holdout[bo]);
            if all {
                seeds_ok += 1;
            }
        }
        ok &= seeds_ok as f64 >= 0.95 * SEEDS as f64;
        parts.push(format!("{alg} (every size) beats BO in {seeds_ok}/{SEEDS} seeds"));
    }
    Ok(verdict(ok, parts.join("; ")))
}

// ---------------------------------------------------------------- 12

fn ranked(order: &[u32]) -> RankedList {
    let mut rank_of = vec![0u32; order.len()];
    for (p, &i) in order.iter().enumerate() {
        rank_of[i as usize] = p as u32 + 1;
    }
    RankedList { user: 0, order: order.to_vec(), rank_of }
}

fn oracle_ndcg(order: &[u32], relevant: &[bool], cutoff: Option<usize>) -> f64 {
    let k = cutoff.unwrap_or(order.len()).min(order.len());
    let dcg: f64 = (0..k).filter(|&p| relevant[order[p] as usize]).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
    let n_rel = relevant.iter().filter(|&&r| r).count();
    let ideal: f64 = (0..n_rel.min(cutoff.unwrap_or(usize::MAX))).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
    dcg / ideal
}

/// Best DCG over every permutation of a small catalog.
fn exhaustive_best(relevant: &[bool], cutoff: Option<usize>) -> f64 {
    fn permute(items: &mut Vec<u32>, start: usize, relevant: &[bool], cutoff: Option<usize>, best: &mut f64) {
        if start == items.len() {
            let k = cutoff.unwrap_or(items.len()).min(items.len());
            let dcg: f64 = (0..k).filter(|&p| relevant[items[p] as usize]).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
            *best = best.max(dcg);
            return;
        }
        for i in start..items.len() {
            items.swap(start, i);
            permute(items, start + 1, relevant, cutoff, best);
            items.swap(start, i);
        }
    }
    let mut items: Vec<u32> = (0..relevant.len() as u32).collect();
    let mut best = 0.0;
    permute(&mut items, 0, relevant, cutoff, &mut best);
    best
}

fn ndcg_properties() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cases = 10_000;
    let (mut bounded, mut perfect, mut monotone, mut oracle) = (0usize, 0usize, 0usize, 0usize);
    for _ in 0..cases {
        let n = rng.random_range(1..=7usize);
        let mut order: Vec<u32> = (0..n as u32).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut relevant: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        relevant[rng.random_range(0..n)] = true;
        let rel_ids: Vec<u32> = (0..n as u32).filter(|&i| relevant[i as usize]).collect();
        let cutoff = if rng.random_bool(0.3) { None } else { Some(rng.random_range(1..=n + 1)) };
        let spec = MetricSpec { cutoff, ..MetricSpec::full() };

        let v = ndcg(&ranked(&order), &rel_ids, spec).expect("relevant items exist");
        if (0.0..=1.0).contains(&v) {
            bounded += 1;
        }

        let mut ideal = rel_ids.clone();
        ideal.extend((0..n as u32).filter(|&i| !relevant[i as usize]));
        if (ndcg(&ranked(&ideal), &rel_ids, spec).unwrap() - 1.0).abs() <= 1e-12 {
            perfect += 1;
        }

        // move a relevant item above a non-relevant one
        let pos_rel: Vec<usize> = (0..n).filter(|&p| relevant[order[p] as usize]).collect();
        let pos_non: Vec<usize> = (0..n).filter(|&p| !relevant[order[p] as usize]).collect();
        let swap = pos_rel.iter().rev().find_map(|&pr| pos_non.iter().find(|&&pn| pn < pr).map(|&pn| (pn, pr)));
        match swap {
            Some((pn, pr)) => {
                let mut better = order.clone();
                better.swap(pn, pr);
                if ndcg(&ranked(&better), &rel_ids, spec).unwrap() >= v - 1e-15 {
                    monotone += 1;
                }
            }
            None => monotone += 1,
        }

        let direct = oracle_ndcg(&order, &relevant, cutoff);
        let k = cutoff.unwrap_or(n).min(n);
        let dcg: f64 = (0..k).filter(|&p| relevant[order[p] as usize]).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
        let via_best = dcg / exhaustive_best(&relevant, cutoff);
        if (v - direct).abs() <= 1e-12 && (v - via_best).abs() <= 1e-12 {
            oracle += 1;
        }
    }
    let ok = [bounded, perfect, monotone, oracle].iter().all(|&c| c == cases);
    Ok(verdict(
        ok,
        format!(
            "{cases} cases each: bounded {bounded}, perfect = 1 {perfect}, monotone {monotone}, oracle agreement {oracle}"
        ),
    ))
}

// ---------------------------------------------------------------- 13

fn external_reproduction() -> Option<std::result::Result<Verdict, String>> {
    let closed = std::env::var("STRATEVAL_EXTERNAL_CLOSED").ok()?;
    let open = std::env::var("STRATEVAL_EXTERNAL_OPEN").ok()?;
    let delimiter = std::env::var("STRATEVAL_EXTERNAL_DELIMITER").unwrap_or_else(|_| "whitespace".into());
    Some((|| {
        use clap::Parser;
        use strateval_workbench::cli::Cli;
        let home = tempfile::TempDir::new().map_err(|e| e.to_string())?;
        let h = home.path().to_str().unwrap().to_string();
        let steps: Vec<Vec<&str>> = vec![
            vec!["ingest", "--name", "x", "--closed", &closed, "--open", &open, "--delimiter", &delimiter, "--split", "0.8"],
            vec!["propensity", "--dataset", "x-closed", "--name", "x"],
            vec!["train", "--train", "x-train", "--name", "m"],
            vec!["evaluate", "--models", "m", "--train", "x-train", "--test", "x-test", "--catalog", "x-open", "--propensity", "x", "--strata", "1..10", "--baseline", "POP", "--name", "closed"],
            vec!["evaluate", "--models", "m", "--train", "x-train", "--test", "x-open", "--catalog", "x-test", "--methods", "holdout", "--name", "open"],
            vec!["compare", "--open", "open", "--closed", "closed", "--name", "c"],
            vec!["report", "--compare", "c"],
        ];
        let mut last = String::new();
        for step in steps {
            let mut argv = vec!["strateval", "--home", &h];
            argv.extend(step.iter().copied());
            let cli = Cli::try_parse_from(&argv).map_err(|e| e.to_string())?;
            last = strateval_workbench::run(&cli).map_err(|f| format!("{}: {f}", step[0]))?;
        }
        Ok(verdict(true, format!("pipeline completed, no tolerance asserted\n{last}")))
    })())
}

// ----------------------------------------------------------------

type Check = fn() -> std::result::Result<Verdict, String>;

fn lib<F: Fn() -> Result<Verdict>>(f: F) -> std::result::Result<Verdict, String> {
    f().map_err(|e| e.to_string())
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let strict = std::env::var_os("ACCEPTANCE_STRICT").is_some();
    let checks: Vec<(usize, &str, Check)> = vec![
        (1, "kidney-stone marginalization", || lib(kidney_stones)),
        (2, "two-strata fixture", || lib(two_strata_fixture)),
        (3, "K=1 reduction identity", || lib(reduction_identity)),
        (4, "IPS identities", || lib(ips_identities)),
        (5, "Kendall tau-b oracle", || lib(kendall_oracle)),
        (6, "Steiger calibration", || lib(steiger_calibration)),
        (7, "gamma recovery", || lib(gamma_recovery)),
        (8, "Simpson demonstration", simpson_demo),
        (9, "stratified beats holdout", headline),
        (10, "strata-sweep shape", strata_sweep),
        (11, "model sanity", model_sanity),
        (12, "nDCG properties", || lib(ndcg_properties)),
    ];

    let mut failed = 0usize;
    for (id, name, check) in checks {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let started = Instant::now();
        let outcome = check();
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(v) => {
                if !v.pass {
                    failed += 1;
                }
                println!("{} [{id:>2}] {name}: {} ({secs:.1}s)", if v.pass { "PASS" } else { "FAIL" }, v.detail);
            }
            Err(e) => {
                failed += 1;
                println!("FAIL [{id:>2}] {name}: error: {e} ({secs:.1}s)");
            }
        }
    }
    if selected.is_empty() || selected.contains(&13) {
        match external_reproduction() {
            None => println!(
                "SKIP [13] external reproduction: set STRATEVAL_EXTERNAL_CLOSED and STRATEVAL_EXTERNAL_OPEN to run"
            ),
            Some(Ok(v)) => println!("PASS [13] external reproduction: {}", v.detail),
            Some(Err(e)) => {
                failed += 1;
                println!("FAIL [13] external reproduction: {e}");
            }
        }
    }
    println!("failed: {failed}");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
