use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use strateval::corpus::{parse_interactions, split_holdout, ColumnSpec, Dataset, Delimiter, LoopKind};
use strateval::evaluators::{
    catalog_strata, holdout_eval, ips_eval, paired_report_test, per_stratum_eval_with, stratified_eval,
    weighted_sum, EvalReport, IpsOptions, Method, StratumRow, TestView,
};
use strateval::metrics::{EvalContext, MetricSpec, Rankings};
use strateval::models::{fit, sweep_configs, Algorithm, TrainedModel};
use strateval::propensity::fit_propensities;
use strateval::simulator::{audit_skew, generate};
use strateval::stats::{correlation_report, kendall_tau_b, linear_fit, CorrelationReport};
use strateval::strata::{assign_strata, stratum_weights, StrataRule};

use crate::cli::*;
use crate::config::RunConfig;
use crate::failure::{Failure, Outcome, WithContext};
use crate::manifest::ManifestBuilder;
use crate::store::{write_file, Home};

/// Everything a command needs besides its own arguments.
pub struct Env {
    pub home: Home,
    pub config: RunConfig,
    pub config_path: Option<PathBuf>,
}

impl Env {
    fn manifest(&self, verb: &str, resolved: &impl Serialize) -> Outcome<ManifestBuilder> {
        let mut m = ManifestBuilder::start(verb, resolved)?;
        if let Some(p) = &self.config_path {
            m.input(p)?;
        }
        Ok(m)
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Outcome<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    split_list(s)
        .map(|x| x.parse::<T>().map_err(|e| Failure::usage(format!("{what} {x:?}: {e}"))))
        .collect()
}

/// `1..10` (inclusive) or a comma-separated list.
pub fn parse_strata(s: &str) -> Outcome<Vec<usize>> {
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| Failure::usage(format!("bad strata range {s:?}")))?;
        let b: usize = b
            .trim()
            .trim_start_matches('=')
            .parse()
            .map_err(|_| Failure::usage(format!("bad strata range {s:?}")))?;
        if a == 0 || a > b {
            return Err(Failure::usage(format!("bad strata range {s:?}")));
        }
        return Ok((a..=b).collect());
    }
    let ks: Vec<usize> = parse_list(s, "strata count")?;
    if ks.is_empty() || ks.contains(&0) {
        return Err(Failure::usage("strata counts must be positive"));
    }
    Ok(ks)
}

fn summary_line(name: &str, d: &Dataset) -> String {
    format!(
        "{name}\t{} users\t{} items\t{} interactions\t{} relevant\t{}",
        d.n_users(),
        d.n_items(),
        d.len(),
        d.n_relevant(),
        d.loop_kind()
    )
}

#[derive(Serialize)]
struct IngestResolved<'a> {
    name: &'a str,
    closed: Option<&'a PathBuf>,
    open: Option<&'a PathBuf>,
    delimiter: &'a str,
    columns: &'a str,
    split: Option<f64>,
    seed: u64,
}

pub fn ingest(env: &Env, args: &IngestArgs) -> Outcome<String> {
    if args.closed.is_none() && args.open.is_none() {
        return Err(Failure::usage("give --closed FILE, --open FILE, or both"));
    }
    if args.split.is_some() && args.closed.is_none() {
        return Err(Failure::usage("--split needs a --closed file"));
    }
    let delimiter: Delimiter = args.delimiter.parse()?;
    let cols: Vec<usize> = parse_list(&args.columns, "column")?;
    let [user, item, rating] = cols[..] else {
        return Err(Failure::usage("--columns takes exactly three indices"));
    };
    let schema = ColumnSpec { user, item, rating };

    let resolved = IngestResolved {
        name: &args.name,
        closed: args.closed.as_ref(),
        open: args.open.as_ref(),
        delimiter: &args.delimiter,
        columns: &args.columns,
        split: args.split,
        seed: args.seed,
    };
    let mut manifest = env.manifest("ingest", &resolved)?;
    manifest.seed(args.seed);
    let mut out = String::new();

    for (path, kind) in [(&args.closed, LoopKind::Closed), (&args.open, LoopKind::Open)] {
        let Some(path) = path else { continue };
        let file = std::fs::File::open(path).ctx(format!("{}", path.display()))?;
        let data = parse_interactions(std::io::BufReader::new(file), schema, delimiter, kind)
            .ctx(format!("{}", path.display()))?;
        if data.is_empty() {
            return Err(Failure::data(format!("{}: no interactions", path.display())));
        }
        manifest.input(path)?;
        let name = format!("{}-{kind}", args.name);
        manifest.artifact(&env.home.save_dataset(&name, &data)?)?;
        writeln!(out, "{}", summary_line(&name, &data)).unwrap();
        if let (Some(ratio), LoopKind::Closed) = (args.split, kind) {
            let split = split_holdout(&data, ratio, args.seed)?;
            for (suffix, part) in [("train", &split.train), ("test", &split.test)] {
                let name = format!("{}-{suffix}", args.name);
                manifest.artifact(&env.home.save_dataset(&name, part)?)?;
                writeln!(out, "{}", summary_line(&name, part)).unwrap();
            }
        }
    }
    manifest.finish(&env.home.manifest_path("ingest", &args.name))?;
    Ok(out)
}

pub fn simulate(env: &Env, args: &SimulateArgs) -> Outcome<String> {
    let mut sim = env.config.sim.clone();
    if let Some(seed) = args.seed {
        sim.seed = seed;
    }
    sim.validate()?;
    let mut manifest = env.manifest("simulate", &sim)?;
    manifest.seed(sim.seed);

    let log = generate(&sim)?;
    let closed = log.closed();
    let mut out = String::new();
    for (suffix, data) in [
        ("train", &log.closed_train),
        ("test", &log.closed_test),
        ("closed", &closed),
        ("open", &log.open_test),
    ] {
        let name = format!("{}-{suffix}", args.name);
        manifest.artifact(&env.home.save_dataset(&name, data)?)?;
        writeln!(out, "{}", summary_line(&name, data)).unwrap();
    }

    let mut exposure = String::from("item\texposures\n");
    for (item, c) in log.item_ids.iter().zip(&log.exposure_counts) {
        writeln!(exposure, "{item}\t{c}").unwrap();
    }
    let exposure_path = env.home.sim_dir().join(format!("{}-exposure.tsv", args.name));
    write_file(&exposure_path, exposure.as_bytes())?;
    manifest.artifact(&exposure_path)?;

    let skew = audit_skew(&log);
    let skew_path = env.home.sim_dir().join(format!("{}-skew.json", args.name));
    write_file(&skew_path, (serde_json::to_string_pretty(&skew)? + "\n").as_bytes())?;
    manifest.artifact(&skew_path)?;
    writeln!(
        out,
        "exposure gini {:.4}\thead share {:.4}\texposure/interaction spearman {:.4}",
        skew.exposure_gini, skew.head_share, skew.exposure_interaction_spearman
    )
    .unwrap();

    manifest.finish(&env.home.manifest_path("simulate", &args.name))?;
    Ok(out)
}

pub fn propensity(env: &Env, args: &PropensityArgs) -> Outcome<String> {
    let method = match &args.gamma_method {
        Some(m) => m.parse()?,
        None => env.config.propensity.gamma_method,
    };
    let mut manifest = env.manifest("propensity", &(&args.datasets, method))?;
    let mut parts = Vec::new();
    for name in &args.datasets {
        parts.push(env.home.load_dataset(name)?);
        manifest.input(&env.home.dataset_path(name))?;
    }
    let merged = Dataset::merge(&parts.iter().collect::<Vec<_>>());
    let table = fit_propensities(&merged, method)?;
    let path = env.home.propensity_path(&args.name);
    let mut buf = Vec::new();
    table.write_tsv(&mut buf)?;
    write_file(&path, &buf)?;
    manifest.artifact(&path)?;
    manifest.finish(&env.home.manifest_path("propensity", &args.name))?;
    let g = table.gamma();
    Ok(format!(
        "{}\tgamma {:.4}\titems {}\tmethod {:?}\n",
        args.name,
        g.gamma,
        table.len(),
        g.method
    ))
}

pub fn stratify(env: &Env, args: &StratifyArgs) -> Outcome<String> {
    let rule: StrataRule = match &args.rule {
        Some(r) => r.parse()?,
        None => env.config.evaluate.strata_rule,
    };
    if args.k == 0 {
        return Err(Failure::usage("strata count must be positive"));
    }
    let name = args.name.clone().unwrap_or_else(|| format!("{}-k{}", args.propensity, args.k));
    let mut manifest = env.manifest("stratify", &(&args.propensity, args.k, rule, &args.reference))?;
    let table = env.home.load_propensity(&args.propensity)?;
    manifest.input(&env.home.propensity_path(&args.propensity))?;
    let assignment = assign_strata(&table, args.k, rule)?;
    let path = env.home.strata_path(&name);
    let mut buf = Vec::new();
    assignment.write_tsv(&mut buf)?;
    write_file(&path, &buf)?;
    manifest.artifact(&path)?;

    let sizes = assignment.sizes();
    let weights = match &args.reference {
        Some(r) => {
            manifest.input(&env.home.dataset_path(r))?;
            Some(stratum_weights(&assignment, &env.home.load_dataset(r)?)?)
        }
        None => None,
    };
    let mut out = String::from("stratum\titems\tmass\tinteractions\tweight\n");
    for s in 0..args.k {
        let (count, weight) = match &weights {
            Some(w) => (w.counts[s].to_string(), format!("{:.6}", w.weights[s])),
            None => ("-".into(), "-".into()),
        };
        writeln!(out, "Q{}\t{}\t{:.6}\t{count}\t{weight}", s + 1, sizes[s], assignment.mass()[s]).unwrap();
    }
    let weights_path = env.home.strata_path(&format!("{name}-summary"));
    write_file(&weights_path, out.as_bytes())?;
    manifest.artifact(&weights_path)?;
    manifest.finish(&env.home.manifest_path("stratify", &name))?;
    Ok(out)
}

/// Order of a model set, written next to the model files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelIndex {
    pub train: String,
    pub models: Vec<String>,
}

pub fn train(env: &Env, args: &TrainArgs) -> Outcome<String> {
    let mut tc = env.config.train.clone();
    if let Some(a) = &args.algorithms {
        tc.algorithms = parse_list::<Algorithm>(a, "algorithm")?;
    }
    if let Some(s) = &args.sizes {
        tc.latent_sizes = parse_list(s, "latent size")?;
    }
    let mut base = env.config.model.clone();
    if let Some(seed) = args.seed {
        base.seed = seed;
    }
    if tc.algorithms.is_empty() {
        return Err(Failure::usage("no algorithms selected"));
    }
    let configs = sweep_configs(&tc.algorithms, &tc.latent_sizes, &base);
    for c in &configs {
        c.validate()?;
    }
    let mut manifest = env.manifest("train", &(&tc, &base))?;
    manifest.seed(base.seed);
    let train = env.home.load_dataset(&args.train)?;
    manifest.input(&env.home.dataset_path(&args.train))?;

    let dir = env.home.model_dir(&args.name);
    let mut out = String::new();
    let mut labels = Vec::new();
    for c in &configs {
        let started = Instant::now();
        let model = fit(c, &train)?;
        let label = model.label();
        let path = dir.join(format!("{label}.json"));
        write_file(&path, model.to_json()?.as_bytes())?;
        manifest.artifact(&path)?;
        writeln!(out, "{label}\t{:.2}s", started.elapsed().as_secs_f64()).unwrap();
        labels.push(label);
    }
    let index = ModelIndex { train: args.train.clone(), models: labels };
    let index_path = dir.join("index.json");
    write_file(&index_path, serde_json::to_string_pretty(&index)?.as_bytes())?;
    manifest.artifact(&index_path)?;
    manifest.finish(&env.home.manifest_path("train", &args.name))?;
    Ok(out)
}

/// One evaluation result: a model under one method, metric and strata count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub model: String,
    pub method: Method,
    pub metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strata_k: Option<usize>,
    pub value: f64,
    /// Users with relevant test feedback.
    pub users: usize,
    pub test: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strata: Option<Vec<StratumRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Significantly different from the baseline at the configured level.
    #[serde(default)]
    pub significant: bool,
}

impl EvalRecord {
    pub fn key(&self) -> (Method, &str, Option<usize>) {
        (self.method, self.metric.as_str(), self.strata_k)
    }
}

fn load_models(env: &Env, set: &str) -> Outcome<Vec<TrainedModel>> {
    let dir = env.home.model_dir(set);
    let index_path = dir.join("index.json");
    let text = std::fs::read_to_string(&index_path)
        .map_err(|e| Failure::data(format!("model set {set:?} not found ({e}); run `strateval train` first")))?;
    let index: ModelIndex = serde_json::from_str(&text).ctx(format!("{}", index_path.display()))?;
    index
        .models
        .iter()
        .map(|label| env.home.load_model(&dir.join(format!("{label}.json"))))
        .collect()
}

/// Re-derives each stratified value from its rows.
fn audit_stratified(rec: &EvalRecord) -> Outcome<()> {
    let Some(rows) = &rec.strata else { return Ok(()) };
    let total: f64 = rows.iter().map(|r| r.weight).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Failure::numerical(format!(
            "{} {} K={:?}: stratum weights sum to {total}",
            rec.model, rec.metric, rec.strata_k
        )));
    }
    let values: Vec<Option<f64>> = rows.iter().map(|r| r.value).collect();
    let weights: Vec<f64> = rows.iter().map(|r| r.weight).collect();
    let again = weighted_sum(&values, &weights)?;
    if again.to_bits() != rec.value.to_bits() {
        return Err(Failure::numerical(format!(
            "{} {}: stratified value {} differs from the weighted stratum sum {again}",
            rec.model, rec.metric, rec.value
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct EvaluateResolved<'a> {
    models: &'a str,
    train: &'a str,
    test: &'a str,
    catalog: &'a [String],
    propensity: Option<&'a str>,
    evaluate: &'a crate::config::EvaluateConfig,
}

pub fn evaluate(env: &Env, args: &EvaluateArgs) -> Outcome<String> {
    let mut ec = env.config.evaluate.clone();
    if let Some(m) = &args.methods {
        ec.methods = parse_list(m, "method")?;
    }
    if let Some(s) = &args.strata {
        ec.strata = parse_strata(s)?;
    }
    if let Some(m) = &args.metrics {
        ec.metrics = split_list(m).map(String::from).collect();
    }
    if args.baseline.is_some() {
        ec.baseline = args.baseline.clone();
    }
    ec.validate()?;
    let specs = ec.metric_specs()?;
    let needs_propensity = ec.methods.iter().any(|m| matches!(m, Method::Ips | Method::Stratified));
    if needs_propensity && args.propensity.is_none() {
        return Err(Failure::usage(
            "ips and stratified evaluation need a propensity table: run `strateval propensity` first and pass --propensity",
        ));
    }

    let resolved = EvaluateResolved {
        models: &args.models,
        train: &args.train,
        test: &args.test,
        catalog: &args.catalog,
        propensity: args.propensity.as_deref(),
        evaluate: &ec,
    };
    let mut manifest = env.manifest("evaluate", &resolved)?;
    let train = env.home.load_dataset(&args.train)?;
    let test = env.home.load_dataset(&args.test)?;
    manifest.input(&env.home.dataset_path(&args.train))?;
    manifest.input(&env.home.dataset_path(&args.test))?;
    let mut extra = Vec::new();
    for name in &args.catalog {
        extra.push(env.home.load_dataset(name)?);
        manifest.input(&env.home.dataset_path(name))?;
    }
    let models = load_models(env, &args.models)?;
    manifest.input(&env.home.model_dir(&args.models).join("index.json"))?;
    if let Some(b) = &ec.baseline {
        if !models.iter().any(|m| &m.label() == b) {
            return Err(Failure::usage(format!("baseline {b:?} is not in model set {:?}", args.models)));
        }
    }
    let table = match &args.propensity {
        Some(p) if needs_propensity => {
            manifest.input(&env.home.propensity_path(p))?;
            Some(env.home.load_propensity(p)?)
        }
        _ => None,
    };

    let mut tests: Vec<&Dataset> = vec![&test];
    tests.extend(extra.iter());
    let ctx = EvalContext::new(&train, &tests);
    let view = TestView::new(&ctx, &test)?;
    let stratified = ec.methods.contains(&Method::Stratified);
    let strata = match (&table, stratified) {
        (Some(t), true) => ec
            .strata
            .iter()
            .map(|&k| Ok((k, catalog_strata(&ctx, &assign_strata(t, k, ec.strata_rule)?))))
            .collect::<Outcome<Vec<_>>>()?,
        _ => Vec::new(),
    };
    let ips_opts = IpsOptions { clip: ec.ips_clip, self_normalized: ec.ips_self_normalized };

    let mut reports: Vec<(String, Option<usize>, EvalReport)> = Vec::new();
    for model in &models {
        let label = model.label();
        let scorer = model.scorer(ctx.items());
        let rankings = Rankings::build(&ctx, &scorer);
        for &spec in &specs {
            for &method in &ec.methods {
                match method {
                    Method::Holdout => reports.push((label.clone(), None, holdout_eval(&rankings, &view, spec)?)),
                    Method::Ips => {
                        let t = table.as_ref().expect("checked above");
                        reports.push((label.clone(), None, ips_eval(&rankings, &view, &ctx, t, spec, ips_opts)?));
                    }
                    Method::Stratified => {
                        for (k, cat) in &strata {
                            let per = per_stratum_eval_with(&rankings, &view, &ctx, cat, *k, spec)?;
                            let weights = per.weights()?;
                            reports.push((label.clone(), Some(*k), stratified_eval(&per, &weights)?));
                        }
                    }
                }
            }
        }
    }

    let mut records = Vec::with_capacity(reports.len());
    for (label, k, rep) in &reports {
        let mut rec = EvalRecord {
            model: label.clone(),
            method: rep.method,
            metric: rep.spec.to_string(),
            strata_k: *k,
            value: rep.overall,
            users: rep.defined_users(),
            test: args.test.clone(),
            strata: rep.per_stratum.clone(),
            baseline: None,
            t: None,
            p: None,
            significant: false,
        };
        if let Some(b) = ec.baseline.as_ref().filter(|b| *b != label) {
            let base = reports
                .iter()
                .find(|(l, bk, r)| l == b && bk == k && r.method == rep.method && r.spec == rep.spec)
                .map(|(_, _, r)| r)
                .expect("baseline evaluated with the same settings");
            match paired_report_test(rep, base) {
                Ok(tt) => {
                    rec.t = Some(tt.t);
                    rec.p = Some(tt.p);
                    rec.significant = tt.p < ec.alpha;
                }
                Err(e) if e.is_numerical() => return Err(e.into()),
                Err(_) => {}
            }
            rec.baseline = Some(b.clone());
        }
        audit_stratified(&rec)?;
        records.push(rec);
    }

    let path = env.home.report_path(&args.name);
    let mut jsonl = String::new();
    for r in &records {
        jsonl.push_str(&serde_json::to_string(r)?);
        jsonl.push('\n');
    }
    write_file(&path, jsonl.as_bytes())?;
    manifest.artifact(&path)?;
    let tsv = records_tsv(&records);
    let tsv_path = env.home.report_dir().join(format!("{}.tsv", args.name));
    write_file(&tsv_path, tsv.as_bytes())?;
    manifest.artifact(&tsv_path)?;
    manifest.finish(&env.home.manifest_path("evaluate", &args.name))?;
    Ok(tsv)
}

fn records_tsv(records: &[EvalRecord]) -> String {
    let mut out = String::from("model\tmethod\tmetric\tstrata\tvalue\tusers\tt\tp\tsignificant\n");
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.6}\t{}\t{}\t{}\t{}",
            r.model,
            r.method,
            r.metric,
            r.strata_k.map_or_else(|| "-".to_string(), |k| k.to_string()),
            r.value,
            r.users,
            opt(r.t),
            opt(r.p),
            r.significant
        )
        .unwrap();
    }
    out
}

pub fn read_records(env: &Env, name: &str) -> Outcome<Vec<EvalRecord>> {
    let path = env.home.report_path(name);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Failure::data(format!("report {name:?} not found ({e}); run `strateval evaluate` first")))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Failure::data(format!("{} line {}: {e}", path.display(), n + 1)))
        })
        .collect()
}

/// One comparison of two closed-loop methods against the open-loop ordering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRecord {
    pub metric: String,
    pub baseline: String,
    pub candidate: String,
    pub models: Vec<String>,
    #[serde(flatten)]
    pub report: CorrelationReport,
}

fn method_label(method: Method, k: Option<usize>) -> String {
    match k {
        Some(k) => format!("{method}-k{k}"),
        None => method.to_string(),
    }
}

/// Values of `models` for one (method, metric, K), in that order.
fn column(records: &[EvalRecord], models: &[String], method: Method, metric: &str, k: Option<usize>) -> Option<Vec<f64>> {
    models
        .iter()
        .map(|m| {
            records
                .iter()
                .find(|r| &r.model == m && r.key() == (method, metric, k))
                .map(|r| r.value)
        })
        .collect()
}

fn candidate_k(method: Method, k: usize) -> Option<usize> {
    (method == Method::Stratified).then_some(k)
}

pub fn compare(env: &Env, args: &CompareArgs) -> Outcome<String> {
    let y_method: Method = args.baseline_method.parse()?;
    let z_method: Method = args.candidate_method.parse()?;
    let mut manifest = env.manifest("compare", &(&args.open, &args.closed, y_method, z_method, args.k))?;
    let open = read_records(env, &args.open)?;
    let closed = read_records(env, &args.closed)?;
    manifest.input(&env.home.report_path(&args.open))?;
    manifest.input(&env.home.report_path(&args.closed))?;

    let open_models: BTreeSet<&str> = open.iter().map(|r| r.model.as_str()).collect();
    let mut models: Vec<String> = Vec::new();
    for r in &closed {
        if open_models.contains(r.model.as_str()) && !models.contains(&r.model) {
            models.push(r.model.clone());
        }
    }
    if models.len() < 2 {
        return Err(Failure::data("the reports share fewer than two models"));
    }
    let mut metrics: Vec<String> = Vec::new();
    for r in &closed {
        if !metrics.contains(&r.metric) {
            metrics.push(r.metric.clone());
        }
    }

    let (yk, zk) = (candidate_k(y_method, args.k), candidate_k(z_method, args.k));
    let mut jsonl = String::new();
    let mut scatter = String::from("metric\tmethod\tmodel\topen\tclosed\n");
    let mut fits = String::from("metric\tmethod\tslope\tintercept\ttau\n");
    let mut sweep = String::from("metric\tstrata\ttau\tsteiger_z\tp\n");
    let mut summary = String::new();
    for metric in &metrics {
        let Some(x) = column(&open, &models, Method::Holdout, metric, None) else { continue };
        let (Some(y), Some(z)) = (
            column(&closed, &models, y_method, metric, yk),
            column(&closed, &models, z_method, metric, zk),
        ) else {
            continue;
        };
        let report = correlation_report(&x, &y, &z)?;
        let rec = CompareRecord {
            metric: metric.clone(),
            baseline: method_label(y_method, yk),
            candidate: method_label(z_method, zk),
            models: models.clone(),
            report: report.clone(),
        };
        jsonl.push_str(&serde_json::to_string(&rec)?);
        jsonl.push('\n');
        writeln!(
            summary,
            "{metric}\ttau({}) {:.4}\ttau({}) {:.4}\tsteiger p {}",
            rec.baseline,
            report.tau_xy,
            rec.candidate,
            report.tau_xz,
            report.p.map_or_else(|| "-".into(), |p| format!("{p:.4}"))
        )
        .unwrap();

        for (label, col) in [(&rec.baseline, &y), (&rec.candidate, &z)] {
            for (m, (a, b)) in models.iter().zip(x.iter().zip(col)) {
                writeln!(scatter, "{metric}\t{label}\t{m}\t{a:.6}\t{b:.6}").unwrap();
            }
            let tau = kendall_tau_b(&x, col)?.map_or_else(|| "-".into(), |t| format!("{t:.6}"));
            match linear_fit(&x, col) {
                Ok(f) => writeln!(fits, "{metric}\t{label}\t{:.6}\t{:.6}\t{tau}", f.slope, f.intercept).unwrap(),
                Err(_) => writeln!(fits, "{metric}\t{label}\t-\t-\t{tau}").unwrap(),
            }
        }

        // strata sweep against the K = 1 column (identical to holdout)
        let mut ks: Vec<usize> = closed
            .iter()
            .filter(|r| r.method == Method::Stratified && &r.metric == metric)
            .filter_map(|r| r.strata_k)
            .collect();
        ks.sort_unstable();
        ks.dedup();
        let reference = column(&closed, &models, Method::Stratified, metric, Some(1))
            .or_else(|| column(&closed, &models, Method::Holdout, metric, None));
        for k in ks {
            let Some(col) = column(&closed, &models, Method::Stratified, metric, Some(k)) else { continue };
            let tau = kendall_tau_b(&x, &col)?;
            let (sz, sp) = match (&reference, k) {
                (Some(r), k) if k > 1 => match correlation_report(&x, r, &col) {
                    Ok(c) => (c.steiger_z, c.p),
                    Err(_) => (None, None),
                },
                _ => (None, None),
            };
            let f = |v: Option<f64>| v.map_or_else(|| "-".into(), |v| format!("{v:.6}"));
            writeln!(sweep, "{metric}\t{k}\t{}\t{}\t{}", f(tau), f(sz), f(sp)).unwrap();
        }
    }
    if jsonl.is_empty() {
        return Err(Failure::data(format!(
            "no metric has {} and {} results for the shared models",
            method_label(y_method, yk),
            method_label(z_method, zk)
        )));
    }
    let dir = env.home.compare_dir();
    for (suffix, body) in [("jsonl", &jsonl), ("scatter.tsv", &scatter), ("fit.tsv", &fits), ("sweep.tsv", &sweep)] {
        let path = dir.join(format!("{}.{suffix}", args.name));
        write_file(&path, body.as_bytes())?;
        manifest.artifact(&path)?;
    }
    manifest.finish(&env.home.manifest_path("compare", &args.name))?;
    Ok(summary)
}

pub fn read_compare(env: &Env, name: &str) -> Outcome<Vec<CompareRecord>> {
    let path = env.home.compare_dir().join(format!("{name}.jsonl"));
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Failure::data(format!("comparison {name:?} not found ({e}); run `strateval compare` first")))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Failure::from))
        .collect()
}

pub fn report(env: &Env, args: &ReportArgs) -> Outcome<String> {
    let markdown = match args.format.as_str() {
        "markdown" | "md" => true,
        "tsv" => false,
        other => return Err(Failure::usage(format!("unknown format {other:?}"))),
    };
    let text = match (&args.eval, &args.compare) {
        (Some(name), _) => crate::tables::eval_table(&read_records(env, name)?, markdown),
        (None, Some(name)) => crate::tables::compare_table(&read_compare(env, name)?, markdown),
        (None, None) => return Err(Failure::usage("give --eval NAME or --compare NAME")),
    };
    if let Some(path) = &args.out {
        write_file(path, text.as_bytes())?;
        return Ok(String::new());
    }
    Ok(text)
}

/// Per-metric value lookup used by the table renderer.
pub(crate) fn metric_spec_order(records: &[EvalRecord]) -> Vec<String> {
    let mut metrics: Vec<String> = Vec::new();
    for r in records {
        if !metrics.contains(&r.metric) {
            metrics.push(r.metric.clone());
        }
    }
    metrics.sort_by_key(|m| m.parse::<MetricSpec>().map(|s| s.cutoff.unwrap_or(usize::MAX)).unwrap_or(usize::MAX));
    metrics
}
