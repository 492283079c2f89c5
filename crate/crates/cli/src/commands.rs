use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use staircase::baseline::{GrrScheme, HrScheme};
use staircase::config::{KeyValues, ENV_PREFIX};
use staircase::estimation::observe;
use staircase::experiment::{mean_l1, run_experiment_with, ExperimentConfig, EXPERIMENT_KEYS};
use staircase::io::{read_domain, read_scheme_table, write_domain, write_scheme_table};
use staircase::metrics::reports_csv;
use staircase::model::user_rng;
use staircase::nav::{
    format_scenario, parse_scenario, planned_route, route_deviation, run_fleet, synthetic_city, trip_time_deviation,
    CityGrid, DensityFeed, PerfectFeed,
};
use staircase::od::{simulate_od, synthetic_od_truth};
use staircase::service::{
    fleet_collector, serve as serve_collector, Collector, CollectorFeed, ServiceConfig, SERVICE_KEYS,
};
use staircase::srr::{precompute as precompute_table, precompute_with, PrecomputeOptions, SchemeTable};
use staircase::synth::{city_domain, histogram, sample_users, truth, CitySpec, TruthSpec};
use staircase::{Estimator, HadamardPlan, LocationDomain, PerturbationModel};

use crate::ingest::{self, read_points};
use crate::manifest::Manifest;
use crate::{BenchArgs, BuildDomainArgs, DomainSource, NavigateArgs, OdArgs, PrecomputeArgs, RunArgs, ServeArgs};

/// File, then `STAIRCASE_<KEY>` variables, then flags.
fn settings(config: Option<&Path>, keys: &[&str], flags: &[(&str, &Option<String>)]) -> Result<KeyValues> {
    let mut kv = match config {
        Some(p) => KeyValues::load(p).with_context(|| format!("config {}", p.display()))?,
        None => KeyValues::default(),
    };
    kv.apply_env(ENV_PREFIX, keys);
    for (k, v) in flags {
        if let Some(v) = v {
            kv.set(k, v.clone());
        }
    }
    Ok(kv)
}

fn record_settings(m: &mut Manifest, kv: &KeyValues) {
    for k in kv.keys() {
        m.setting(k, kv.get_str(k).unwrap_or_default());
    }
}

fn out_dir(kv: &KeyValues) -> Result<PathBuf> {
    let dir = PathBuf::from(kv.get_str("out_dir").unwrap_or("out"));
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn domain_flags(src: &DomainSource) -> [(&'static str, &Option<String>); 2] {
    [("domain", &src.domain), ("synthetic", &src.synthetic)]
}

/// The domain file named in `kv`, or a synthetic city of the requested size.
fn resolve_domain(kv: &KeyValues, seed: u64, m: &mut Manifest) -> Result<(LocationDomain, Option<PathBuf>)> {
    if let Some(p) = kv.get_str("domain") {
        let p = PathBuf::from(p);
        let d = read_domain(&p).with_context(|| format!("domain {}", p.display()))?;
        m.input(&p)?;
        return Ok((d, Some(p)));
    }
    if let Some(d) = kv.get::<usize>("synthetic")? {
        return Ok((city_domain(d, seed, &CitySpec::default())?, None));
    }
    bail!("no domain: pass --domain <file> or --synthetic <size>")
}

fn load_table(path: &str, domain: &LocationDomain, m: &mut Manifest) -> Result<SchemeTable> {
    let p = Path::new(path);
    let t = read_scheme_table(p, domain).with_context(|| format!("refusing scheme table {}", p.display()))?;
    m.input(p)?;
    Ok(t)
}

fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn build_domain(a: &BuildDomainArgs) -> Result<()> {
    let mut m = Manifest::new("build-domain");
    m.setting("level", a.level).setting("seed", a.seed);
    let rows = read_points(&a.input)?;
    m.input(&a.input)?;
    let built = ingest::build_domain(&rows, a.level)?;
    write_domain(&a.output, &built.domain)?;
    let prefix = ingest::write_prefix(&a.output, &built.prefix)?;
    m.output(&a.output)?.output(&prefix)?;
    m.note("rows", built.rows).note("d", built.domain.size()).note("bits", built.domain.bit_len());
    m.note("prefix_bits", built.prefix.len()).note("domain_hash", built.domain.hash());
    m.write(&manifest_path(&a.output))?;
    log::info!("{} rows -> {} locations of {} bits", built.rows, built.domain.size(), built.domain.bit_len());
    println!("{}", a.output.display());
    Ok(())
}

pub fn precompute(a: &PrecomputeArgs) -> Result<()> {
    let mut m = Manifest::new("precompute");
    m.setting("epsilon", a.epsilon).setting("seed", a.seed);
    if let Some(k) = a.m {
        m.setting("m", k);
    }
    let domain = read_domain(&a.domain).with_context(|| format!("domain {}", a.domain.display()))?;
    m.input(&a.domain)?;
    let mut opts = PrecomputeOptions { m: a.m, ..Default::default() };
    opts.anneal.seed = a.seed;
    log::info!("precomputing d = {} at epsilon {}", domain.size(), a.epsilon);
    let t0 = Instant::now();
    let table = precompute_with(&domain, a.epsilon, &opts)?;
    log::info!(
        "done in {:.2?}: m = {}, ln c = {:.6}, achieved epsilon {:.9}",
        t0.elapsed(),
        table.m,
        table.c.ln(),
        table.epsilon_achieved
    );
    write_scheme_table(&a.output, &table)?;
    m.output(&a.output)?;
    m.note("d", domain.size()).note("m", table.m).note("ln_c", table.c.ln());
    m.note("epsilon_achieved", table.epsilon_achieved).note("domain_hash", table.domain_hash.clone());
    m.write(&manifest_path(&a.output))?;
    println!("{}", a.output.display());
    Ok(())
}

const RUN_KEYS: [&str; 5] = ["domain", "synthetic", "dataset", "table", "out_dir"];

pub fn run(a: &RunArgs) -> Result<()> {
    let keys: Vec<&str> = RUN_KEYS.iter().chain(EXPERIMENT_KEYS.iter()).copied().collect();
    let [dom, syn] = domain_flags(&a.source);
    let flags = [
        dom,
        syn,
        ("dataset", &a.dataset),
        ("table", &a.table),
        ("mechanisms", &a.mechanisms),
        ("epsilons", &a.epsilons),
        ("n", &a.n),
        ("seed", &a.seed),
        ("trials", &a.trials),
        ("dist", &a.dist),
        ("knn", &a.knn),
        ("out_dir", &a.out_dir),
    ];
    let kv = settings(a.config.as_deref(), &keys, &flags)?;
    let cfg = ExperimentConfig::default().merge_kv(&kv)?;
    cfg.validate()?;
    let mut m = Manifest::new("run");
    record_settings(&mut m, &kv);
    let (domain, domain_path) = resolve_domain(&kv, cfg.seed, &mut m)?;
    let d = domain.size();
    let mut snapped = 0;
    let p = match kv.get_str("dataset") {
        Some(ds) => {
            let ds = Path::new(ds);
            let dp = domain_path.as_ref().ok_or_else(|| anyhow!("--dataset needs a --domain file with its prefix"))?;
            let prefix = ingest::read_prefix(dp)?;
            let rows = read_points(ds)?;
            m.input(ds)?;
            let (idx, s) = ingest::locate(&domain, &prefix, &rows)?;
            snapped = s;
            if s > 0 {
                log::warn!("{s} dataset points were outside the domain and got snapped");
            }
            histogram(&idx, d)
        }
        None => truth(d, cfg.dist, cfg.seed),
    };
    let tables = match kv.get_str("table") {
        Some(t) => {
            let t = load_table(t, &domain, &mut m)?;
            if !cfg.epsilons.contains(&t.epsilon_target) {
                log::warn!("table for epsilon {} is not used by this run", t.epsilon_target);
            }
            vec![t]
        }
        None => Vec::new(),
    };
    let dir = out_dir(&kv)?;
    let rows = run_experiment_with(&domain, &cfg, &p, &tables)?;
    for (mech, eps, l1) in mean_l1(&rows) {
        log::info!("{mech} epsilon {eps}: mean L1 {l1:.5}");
    }
    let out = dir.join("results.csv");
    fs::write(&out, reports_csv(&rows))?;
    m.output(&out)?;
    m.note("d", d).note("domain_hash", domain.hash()).note("rows", rows.len()).note("snapped", snapped);
    m.write(&dir.join("manifest.json"))?;
    println!("{}", out.display());
    Ok(())
}

const OD_KEYS: [&str; 9] = ["domain", "synthetic", "epsilon", "n", "pairs", "lambda", "seed", "trials", "out_dir"];

pub fn od(a: &OdArgs) -> Result<()> {
    let [dom, syn] = domain_flags(&a.source);
    let flags = [
        dom,
        syn,
        ("epsilon", &a.epsilon),
        ("n", &a.n),
        ("pairs", &a.pairs),
        ("lambda", &a.lambda),
        ("seed", &a.seed),
        ("trials", &a.trials),
        ("out_dir", &a.out_dir),
    ];
    let kv = settings(a.config.as_deref(), &OD_KEYS, &flags)?;
    let eps: f64 = kv.get("epsilon")?.unwrap_or(6.0);
    let n: usize = kv.get("n")?.unwrap_or(200_000);
    let pairs: usize = kv.get("pairs")?.unwrap_or(20);
    let lambda: Option<f64> = kv.get("lambda")?;
    let seed: u64 = kv.get("seed")?.unwrap_or(1);
    let trials: u64 = kv.get("trials")?.unwrap_or(1);
    if !(eps > 0.0) || n == 0 || trials == 0 {
        bail!("epsilon must be positive; n and trials at least 1");
    }
    let mut m = Manifest::new("od");
    record_settings(&mut m, &kv);
    let (domain, _) = resolve_domain(&kv, seed, &mut m)?;
    let d = domain.size();
    let table = precompute_table(&domain, eps / 2.0)?;
    let plan = HadamardPlan::new(d)?;
    let est = Estimator::new(&plan, &table)?;
    let truth = synthetic_od_truth(d, pairs, seed)?;
    let dir = out_dir(&kv)?;
    let mut metrics = String::from("epsilon,n,seed,lambda,converged,true_pairs,found_pairs,support_hits,l1\n");
    let mut first = None;
    for s in seed..seed + trials {
        let t = simulate_od(&truth, n, &table, &est, s, lambda)?;
        let hits = truth.iter().filter(|p| t.estimate.pairs.iter().any(|q| q.0 == p.0)).count();
        writeln!(
            metrics,
            "{eps},{n},{s},{},{},{},{},{hits},{}",
            t.estimate.lambda,
            t.estimate.converged,
            truth.len(),
            t.estimate.pairs.len(),
            t.l1
        )?;
        log::info!("seed {s}: {} pairs recovered, L1 {:.5}", t.estimate.pairs.len(), t.l1);
        first.get_or_insert(t);
    }
    let pairs_out = dir.join("od_pairs.csv");
    let first = first.expect("at least one trial");
    fs::write(
        &pairs_out,
        format!("origin,destination,frequency\n{}", staircase::od::format_od(&domain, &first.estimate)),
    )?;
    let metrics_out = dir.join("od_metrics.csv");
    fs::write(&metrics_out, metrics)?;
    m.output(&metrics_out)?.output(&pairs_out)?;
    m.note("d", d)
        .note("domain_hash", domain.hash())
        .note("m", table.m)
        .note("half_budget_achieved", table.epsilon_achieved);
    m.write(&dir.join("manifest.json"))?;
    println!("{}", metrics_out.display());
    Ok(())
}

const NAV_KEYS: [&str; 12] = [
    "scenario",
    "domain",
    "grid",
    "users",
    "theta",
    "epsilon",
    "sessions",
    "feed",
    "table",
    "seed",
    "out_dir",
    "save_scenario",
];

pub fn navigate(a: &NavigateArgs) -> Result<()> {
    let save = a.save_scenario.then(|| "true".to_string());
    let flags = [
        ("scenario", &a.scenario),
        ("domain", &a.domain),
        ("grid", &a.grid),
        ("users", &a.users),
        ("theta", &a.theta),
        ("epsilon", &a.epsilon),
        ("sessions", &a.sessions),
        ("feed", &a.feed),
        ("table", &a.table),
        ("seed", &a.seed),
        ("out_dir", &a.out_dir),
        ("save_scenario", &save),
    ];
    let kv = settings(a.config.as_deref(), &NAV_KEYS, &flags)?;
    let seed: u64 = kv.get("seed")?.unwrap_or(1);
    let mut m = Manifest::new("navigate");
    record_settings(&mut m, &kv);
    let (domain, mut sc) = match kv.get_str("scenario") {
        Some(sp) => {
            let dp = kv.get_str("domain").ok_or_else(|| anyhow!("--scenario needs --domain"))?;
            let domain = read_domain(Path::new(dp)).with_context(|| format!("domain {dp}"))?;
            m.input(Path::new(dp))?;
            let text = fs::read_to_string(sp).with_context(|| format!("cannot read {sp}"))?;
            m.input(Path::new(sp))?;
            let sc = parse_scenario(&text, &domain).with_context(|| format!("scenario {sp}"))?;
            (domain, sc)
        }
        None => {
            let grid = CityGrid {
                side: kv.get("grid")?.unwrap_or(CityGrid::default().side),
                users: kv.get("users")?.unwrap_or(CityGrid::default().users),
                ..Default::default()
            };
            let theta = kv.get("theta")?.unwrap_or(staircase::nav::DEFAULT_THETA);
            let eps = kv.get("epsilon")?.unwrap_or(1.0);
            synthetic_city(&grid, theta, eps, seed)?
        }
    };
    if let Some(t) = kv.get("theta")? {
        sc.theta = t;
    }
    if let Some(e) = kv.get("epsilon")? {
        sc.epsilon_per_update = e;
    }
    if sc.snapped > 0 {
        log::warn!("{} scenario waypoints were outside the domain and got snapped", sc.snapped);
    }
    let d = domain.size();
    let table = match kv.get_str("table") {
        Some(t) => load_table(t, &domain, &mut m)?,
        None => precompute_table(&domain, sc.epsilon_per_update)?,
    };
    let travel = sc.travel_model(d)?;
    let mut feed: Box<dyn DensityFeed> = match kv.get_str("feed").unwrap_or("collector") {
        "collector" => Box::new(CollectorFeed { collector: fleet_collector(&sc, &table, seed)? }),
        "perfect" => Box::new(PerfectFeed(sc.density_truth(d))),
        other => bail!("unknown feed `{other}` (expected collector or perfect)"),
    };
    let sessions = kv.get("sessions")?.unwrap_or(sc.trajectories.len().min(200));
    let report = run_fleet(&sc, &travel, &table, feed.as_mut(), sessions, seed)?;
    let dir = out_dir(&kv)?;
    let mut csv = String::from("user,lambda,spent,trip_time,recorded_time,route_deviation,time_deviation\n");
    for (tr, o) in sc.trajectories.iter().zip(&report.outcomes) {
        let planned = planned_route(&travel, tr)?;
        let recorded = tr.waypoints.last().unwrap().1 - tr.waypoints[0].1;
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            tr.user,
            o.lambda,
            o.spent,
            o.trip_time,
            recorded,
            route_deviation(&planned, &o.route)?,
            trip_time_deviation(recorded, o.trip_time)?
        )?;
    }
    let out = dir.join("nav.csv");
    fs::write(&out, csv)?;
    m.output(&out)?;
    if kv.get::<bool>("save_scenario")?.unwrap_or(false) {
        let sp = dir.join("scenario.txt");
        let dp = dir.join("scenario_domain.txt");
        fs::write(&sp, format_scenario(&sc, &domain))?;
        write_domain(&dp, &domain)?;
        m.output(&sp)?.output(&dp)?;
    }
    m.note("d", d).note("sessions", report.outcomes.len()).note("mean_lambda", report.mean_lambda);
    m.note("total_spent", report.total_spent).note("snapped", sc.snapped);
    m.write(&dir.join("manifest.json"))?;
    log::info!("{} trips, mean lambda {:.3}", report.outcomes.len(), report.mean_lambda);
    println!("{}", out.display());
    Ok(())
}

const BENCH_KEYS: [&str; 6] = ["domain", "synthetic", "epsilons", "n", "seed", "out_dir"];

fn time_client<M: PerturbationModel + ?Sized>(model: &M, users: &[usize], seed: u64) -> (Vec<usize>, f64) {
    let t0 = Instant::now();
    let out: Vec<usize> =
        users.iter().enumerate().map(|(u, &x)| model.sample(x, &mut user_rng(seed, u as u64))).collect();
    (out, t0.elapsed().as_secs_f64() / users.len().max(1) as f64)
}

/// Timing table. Unlike the other commands its numbers vary between runs.
pub fn bench(a: &BenchArgs) -> Result<()> {
    let [dom, syn] = domain_flags(&a.source);
    let flags = [dom, syn, ("epsilons", &a.epsilons), ("n", &a.n), ("seed", &a.seed), ("out_dir", &a.out_dir)];
    let kv = settings(a.config.as_deref(), &BENCH_KEYS, &flags)?;
    let epsilons: Vec<f64> = kv.get_list("epsilons")?.unwrap_or_else(|| vec![1.0, 3.0, 5.0]);
    let n: usize = kv.get("n")?.unwrap_or(10_000);
    let seed: u64 = kv.get("seed")?.unwrap_or(1);
    let mut m = Manifest::new("bench");
    record_settings(&mut m, &kv);
    let (domain, _) = resolve_domain(&kv, seed, &mut m)?;
    let d = domain.size();
    let plan = HadamardPlan::new(d)?;
    let users = sample_users(&truth(d, TruthSpec::Zipf(1.1), seed), n, &mut user_rng(seed, u64::MAX));
    let mut csv = String::from("mechanism,epsilon,d,n,setup_seconds,client_seconds_per_user,estimate_seconds\n");
    for &eps in &epsilons {
        let t0 = Instant::now();
        let table = precompute_table(&domain, eps)?;
        let est = Estimator::new(&plan, &table)?;
        let setup = t0.elapsed().as_secs_f64();
        let (reports, client) = time_client(&table, &users, seed);
        let t0 = Instant::now();
        est.estimate(&observe(&plan, &reports));
        writeln!(csv, "srr,{eps},{d},{n},{setup},{client},{}", t0.elapsed().as_secs_f64())?;

        let t0 = Instant::now();
        let grr = GrrScheme::new(d, eps)?;
        let setup = t0.elapsed().as_secs_f64();
        let (reports, client) = time_client(&grr, &users, seed);
        let t0 = Instant::now();
        grr.estimate(&reports);
        writeln!(csv, "grr,{eps},{d},{n},{setup},{client},{}", t0.elapsed().as_secs_f64())?;

        let t0 = Instant::now();
        let hr = HrScheme::new(&plan, eps)?;
        let est = Estimator::new(&plan, &hr)?;
        let setup = t0.elapsed().as_secs_f64();
        let (reports, client) = time_client(&hr, &users, seed);
        let t0 = Instant::now();
        est.estimate(&observe(&plan, &reports));
        writeln!(csv, "hr,{eps},{d},{n},{setup},{client},{}", t0.elapsed().as_secs_f64())?;
    }
    let dir = out_dir(&kv)?;
    let out = dir.join("bench.csv");
    fs::write(&out, csv)?;
    m.output(&out)?;
    m.note("d", d).note("unavailable", vec!["olh-h", "pldp"]);
    m.write(&dir.join("manifest.json"))?;
    println!("{}", out.display());
    Ok(())
}

pub fn serve(a: &ServeArgs) -> Result<()> {
    let flags =
        [("listen", &a.listen), ("domain", &a.domain), ("table", &a.table), ("epoch_seconds", &a.epoch_seconds)];
    let kv = settings(a.config.as_deref(), &SERVICE_KEYS, &flags)?;
    let cfg = ServiceConfig::from_kv(&kv)?;
    let domain = read_domain(&cfg.domain).with_context(|| format!("domain {}", cfg.domain.display()))?;
    let table = read_scheme_table(&cfg.table, &domain)
        .with_context(|| format!("refusing scheme table {}", cfg.table.display()))?;
    let collector = Arc::new(Collector::new(&table)?);
    let mut handle = serve_collector(&cfg.listen, collector)?;
    log::info!("serving d = {} at epsilon {}, {} s windows", domain.size(), table.epsilon_target, cfg.epoch_seconds);
    println!("listening on {}", handle.local_addr());
    std::io::stdout().flush()?;
    match a.duration {
        Some(s) => {
            std::thread::sleep(Duration::from_secs_f64(s.max(0.0)));
            handle.shutdown();
            Ok(())
        }
        None => loop {
            std::thread::park();
        },
    }
}
