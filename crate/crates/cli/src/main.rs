use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use txplace::geometry::Point2;
use txplace::metrics::{multi_height_report, rasters, MetricsReport, TransmitterSet};
use txplace::objective::Objective;
use txplace::optimizer::{ia_spa, PlacementProblem, PlacementResult, Termination};
use txplace::oracle::{
    brute_force_optimal, certify_bound, property_suite, random_baseline, BaselineResult,
    BoundCertificate, BruteForceResult, SuiteConfig, SuiteReport, DEFAULT_SUBSET_CAP,
};
use txplace::propagation::{export_field, fields_for_sites, write_raster_text, FieldCache};
use txplace::scenario::{Prepared, Scenario};
use txplace::scene::Site;
use txplace::VERSION;

mod pgm;

#[derive(Parser)]
#[command(
    name = "txplace",
    version,
    about = "Transmitter placement over a 2.5D urban scene"
)]
struct Cli {
    /// Worker threads for field computation and gain evaluation.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory for cached fields.
    #[arg(long, global = true, env = "TXPLACE_CACHE_DIR")]
    cache_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,

    /// Override a scenario value, e.g. `optimizer.seed=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Compute candidate fields and store them in the cache.
    BuildFields {
        #[command(flatten)]
        common: Common,
        /// Also write every field in the text exchange format.
        #[arg(long)]
        export: bool,
    },
    /// Run the greedy placement and write placement.json.
    Place {
        #[command(flatten)]
        common: Common,
    },
    /// Metrics and rasters for a transmitter list.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// placement.json or a text file with one `x y` pair per line.
        #[arg(long)]
        transmitters: PathBuf,
    },
    /// Side-by-side metrics of two transmitter lists with percentage change.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long = "new")]
        new: PathBuf,
    },
    /// Metrics averaged over uniformly drawn deployments.
    Baseline {
        #[command(flatten)]
        common: Common,
        /// Towers per draw; defaults to the scenario budget.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = 10)]
        draws: usize,
        /// Defaults to the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Property checks plus brute-force certification of the greedy result.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Diminishing-returns triples; nesting pairs are a fifth of this.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Largest number of subsets brute force may enumerate.
        #[arg(long, default_value_t = DEFAULT_SUBSET_CAP)]
        cap: u128,
    },
    /// Convert a raster to a binary PGM image with a min/max sidecar.
    Export {
        /// Raster in the text exchange format.
        #[arg(long)]
        raster: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let message = format!("{e:#}").replace('\n', " ");
            eprintln!("error[{}]: {message}", error_class(&e));
            ExitCode::FAILURE
        }
    }
}

fn error_class(e: &anyhow::Error) -> &'static str {
    if let Some(err) = e.chain().find_map(|c| c.downcast_ref::<txplace::Error>()) {
        return err.class();
    }
    if e.chain().any(|c| c.is::<std::io::Error>()) {
        return "io";
    }
    if e.chain().any(|c| c.is::<serde_json::Error>()) {
        return "parse";
    }
    "validation"
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    let cache_dir = cli.cache_dir;
    match cli.command {
        Command::BuildFields { common, export } => build_fields(&common, cache_dir, export),
        Command::Place { common } => place(&common, cache_dir),
        Command::Evaluate {
            common,
            transmitters,
        } => evaluate(&common, cache_dir, &transmitters),
        Command::Compare {
            common,
            reference,
            new,
        } => compare(&common, cache_dir, &reference, &new),
        Command::Baseline {
            common,
            count,
            draws,
            seed,
        } => baseline(&common, cache_dir, count, draws, seed),
        Command::Verify {
            common,
            trials,
            cap,
        } => verify(&common, cache_dir, trials, cap),
        Command::Export { raster, out } => {
            create_dir(&out)?;
            let (pgm, scale) = pgm::export(&raster, &out)?;
            println!("wrote {} and {}", pgm.display(), scale.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn load(common: &Common) -> anyhow::Result<Scenario> {
    Ok(Scenario::load_with_overrides(
        &common.scenario,
        &common.overrides,
    )?)
}

fn open_cache(dir: Option<PathBuf>) -> anyhow::Result<Option<FieldCache>> {
    Ok(dir.map(FieldCache::open).transpose()?)
}

fn prepare(scenario: &Scenario, cache_dir: Option<PathBuf>) -> anyhow::Result<Prepared> {
    let cache = open_cache(cache_dir)?;
    Ok(scenario.prepare(cache.as_ref())?)
}

fn scenario_json(scenario: &Scenario) -> anyhow::Result<serde_json::Value> {
    Ok(serde_json::to_value(&scenario.document)?)
}

#[derive(Serialize)]
struct CandidateEntry {
    index: usize,
    x: f64,
    y: f64,
    height: f64,
}

#[derive(Serialize)]
struct CandidatesArtifact {
    version: &'static str,
    scenario: serde_json::Value,
    grid: txplace::scene::ReceiverGrid,
    candidates: Vec<CandidateEntry>,
}

fn build_fields(
    common: &Common,
    cache_dir: Option<PathBuf>,
    export: bool,
) -> anyhow::Result<ExitCode> {
    let scenario = load(common)?;
    create_dir(&common.out)?;
    let cache = FieldCache::open(cache_dir.unwrap_or_else(|| common.out.join("cache")))?;
    let prepared = scenario.prepare(Some(&cache))?;
    let stats = cache.stats();
    eprintln!(
        "cache {}: {} hits, {} misses",
        cache.dir().display(),
        stats.hits,
        stats.misses
    );
    if export {
        let dir = common.out.join("fields");
        create_dir(&dir)?;
        for (i, f) in prepared.problem.fields.iter().enumerate() {
            export_field(dir.join(format!("candidate_{i:03}.txt")), f)?;
        }
    }
    let candidates = prepared
        .candidates
        .sites
        .iter()
        .enumerate()
        .map(|(index, s)| CandidateEntry {
            index,
            x: s.position.x,
            y: s.position.y,
            height: s.height,
        })
        .collect();
    write_json(
        &common.out.join("candidates.json"),
        &CandidatesArtifact {
            version: VERSION,
            scenario: scenario_json(&scenario)?,
            grid: prepared.grid.clone(),
            candidates,
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize, Deserialize)]
struct PlacementArtifact {
    version: String,
    scenario: serde_json::Value,
    seed: u64,
    epsilon: f64,
    problem_fingerprint: String,
    /// Existing sites, then the chosen sites in selection order.
    fixed_sites: Vec<Point2>,
    selected_sites: Vec<Point2>,
    result: PlacementResult,
}

fn positions(prepared: &Prepared, indices: &[usize]) -> Vec<Point2> {
    indices
        .iter()
        .map(|&i| prepared.candidates.sites[i].position)
        .collect()
}

fn place(common: &Common, cache_dir: Option<PathBuf>) -> anyhow::Result<ExitCode> {
    let scenario = load(common)?;
    let prepared = prepare(&scenario, cache_dir)?;
    create_dir(&common.out)?;
    let result = ia_spa(&prepared.problem, &prepared.config)?;
    for (i, r) in result.trajectory.iter().enumerate() {
        let p = prepared.candidates.sites[r.chosen].position;
        println!(
            "step {:>2}: site {:>3} at ({}, {})  gain {:.6e}  S {:.6}",
            i + 1,
            r.chosen,
            p.x,
            p.y,
            r.chosen_gain,
            r.value_after
        );
    }
    write_json(
        &common.out.join("placement.json"),
        &PlacementArtifact {
            version: VERSION.to_string(),
            scenario: scenario_json(&scenario)?,
            seed: prepared.config.seed,
            epsilon: prepared.config.epsilon,
            problem_fingerprint: prepared.problem.fingerprint(),
            fixed_sites: positions(&prepared, &result.selection.fixed),
            selected_sites: positions(&prepared, &result.selection.selected),
            result,
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

/// Transmitter list: fixed sites first, then the rest in order.
struct SiteList {
    fixed: Vec<Point2>,
    selected: Vec<Point2>,
}

fn read_site_list(path: &Path) -> anyhow::Result<SiteList> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim_start().starts_with('{') {
        let p: PlacementArtifact = serde_json::from_str(&text)
            .with_context(|| format!("parsing placement {}", path.display()))?;
        return Ok(SiteList {
            fixed: p.fixed_sites,
            selected: p.selected_sites,
        });
    }
    let mut selected = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| txplace::Error::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: expected `x y`", n + 1),
            })?;
        let [x, y] = nums[..] else {
            return Err(txplace::Error::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: expected `x y`", n + 1),
            }
            .into());
        };
        selected.push(Point2::new(x, y));
    }
    Ok(SiteList {
        fixed: Vec::new(),
        selected,
    })
}

/// Rejects sites outside the domain or inside an exclusion zone. Runs before
/// any field is computed.
fn validate_sites(scenario: &Scenario, list: &SiteList) -> anyhow::Result<()> {
    if list.fixed.is_empty() && list.selected.is_empty() {
        return Err(txplace::Error::EmptyTransmitterSet.into());
    }
    for p in list.fixed.iter().chain(&list.selected) {
        if !scenario.scene.bounds.contains(*p) {
            return Err(txplace::Error::Validation(format!(
                "site ({}, {}) lies outside the domain",
                p.x, p.y
            ))
            .into());
        }
        if scenario
            .candidates
            .exclusions
            .iter()
            .any(|z| z.contains(*p))
        {
            return Err(txplace::Error::Validation(format!(
                "site ({}, {}) lies inside an exclusion zone",
                p.x, p.y
            ))
            .into());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Evaluation {
    fixed_sites: Vec<Point2>,
    selected_sites: Vec<Point2>,
    objective_value: f64,
    report: MetricsReport,
    /// Averaged over the scenario's receiver heights, when listed.
    multi_height: Option<MetricsReport>,
}

/// Evaluates a site list. Sites matching a candidate reuse its field, so a
/// placement evaluates to exactly the value it reported.
fn evaluate_list(
    scenario: &Scenario,
    prepared: &Prepared,
    list: SiteList,
    cache: Option<&FieldCache>,
) -> anyhow::Result<Evaluation> {
    let tol = 0.5 * scenario.scene.grid_spacing;
    let mut fields = prepared.problem.fields.clone();
    let mut extra = Vec::new();
    let mut index_of = |p: &Point2| match prepared.candidates.find(*p, tol) {
        Some(i) => i,
        None => {
            extra.push(Site {
                position: *p,
                height: scenario.candidates.mount_height,
            });
            prepared.candidates.len() + extra.len() - 1
        }
    };
    let set = TransmitterSet::new(
        list.selected.iter().map(&mut index_of).collect(),
        list.fixed.iter().map(&mut index_of).collect(),
    );
    fields.extend(fields_for_sites(
        &extra,
        &scenario.scene,
        &prepared.grid,
        &scenario.radio,
        cache,
    )?);
    set.validate(fields.len())?;
    let objective = Objective::new(
        scenario.objective.aggregation,
        scenario.objective.weight.clone(),
        scenario.density(&prepared.grid)?,
        &fields,
    )?;
    let problem = PlacementProblem::new(fields, objective)?;
    let (rate, interf) = rasters(
        &set,
        &problem.fields,
        &scenario.radio,
        scenario.objective.aggregation,
    )?;
    let multi_height = if scenario.grid.heights.is_empty() {
        None
    } else {
        let sites: Vec<Site> = set.all().map(|i| problem.fields[i].site).collect();
        Some(multi_height_report(
            &scenario.grid.heights,
            &scenario.scene,
            &sites,
            &scenario.radio,
            scenario.objective.aggregation,
        )?)
    };
    Ok(Evaluation {
        fixed_sites: list.fixed,
        selected_sites: list.selected,
        objective_value: problem.s_eval(&set),
        report: MetricsReport::from_rasters(rate, interf)?,
        multi_height,
    })
}

#[derive(Serialize)]
struct EvaluationArtifact<'a> {
    version: &'static str,
    scenario: serde_json::Value,
    rate_raster: &'a str,
    interference_raster: Option<&'a str>,
    evaluation: &'a Evaluation,
}

fn evaluate(
    common: &Common,
    cache_dir: Option<PathBuf>,
    transmitters: &Path,
) -> anyhow::Result<ExitCode> {
    let scenario = load(common)?;
    let list = read_site_list(transmitters)?;
    validate_sites(&scenario, &list)?;
    let cache = open_cache(cache_dir)?;
    let prepared = scenario.prepare(cache.as_ref())?;
    let eval = evaluate_list(&scenario, &prepared, list, cache.as_ref())?;
    create_dir(&common.out)?;
    write_raster_text(
        common.out.join("rate.txt"),
        &prepared.grid,
        &eval.report.rate_raster,
    )?;
    if let Some(r) = &eval.report.interference_raster {
        write_raster_text(common.out.join("interference.txt"), &prepared.grid, r)?;
    }
    println!("S = {}", eval.objective_value);
    print_report("", &eval.report);
    write_json(
        &common.out.join("report.json"),
        &EvaluationArtifact {
            version: VERSION,
            scenario: scenario_json(&scenario)?,
            rate_raster: "rate.txt",
            interference_raster: eval
                .report
                .interference_raster
                .as_ref()
                .map(|_| "interference.txt"),
            evaluation: &eval,
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

fn print_report(label: &str, r: &MetricsReport) {
    println!(
        "{label}mean rate {:.4} Mbit/s  edge rate {:.4} Mbit/s  max rate {:.4} Mbit/s",
        r.mean_rate / 1e6,
        r.edge_rate_p5 / 1e6,
        r.max_rate / 1e6
    );
    if let Some(i) = &r.interference {
        println!(
            "{label}interference mean {:.4e} nW  std {:.4e} nW  max {:.4e} nW",
            i.mean_nw, i.std_nw, i.max_nw
        );
    }
}

/// `100 (new − ref) / ref`; zero when equal, absent when `ref` is zero.
fn percent_change(reference: f64, new: f64) -> Option<f64> {
    if new == reference {
        Some(0.0)
    } else if reference == 0.0 {
        None
    } else {
        Some(100.0 * (new - reference) / reference)
    }
}

fn statistics(e: &Evaluation) -> BTreeMap<&'static str, f64> {
    let r = &e.report;
    let mut m = BTreeMap::from([
        ("objective_value", e.objective_value),
        ("mean_rate", r.mean_rate),
        ("std_rate", r.std_rate),
        ("max_rate", r.max_rate),
        ("edge_rate_p5", r.edge_rate_p5),
    ]);
    if let Some(i) = &r.interference {
        m.insert("interference_mean_nw", i.mean_nw);
        m.insert("interference_std_nw", i.std_nw);
        m.insert("interference_max_nw", i.max_nw);
    }
    m
}

#[derive(Serialize)]
struct CompareArtifact<'a> {
    version: &'static str,
    scenario: serde_json::Value,
    reference: &'a Evaluation,
    new: &'a Evaluation,
    change_percent: BTreeMap<&'static str, Option<f64>>,
}

fn compare(
    common: &Common,
    cache_dir: Option<PathBuf>,
    reference: &Path,
    new: &Path,
) -> anyhow::Result<ExitCode> {
    let scenario = load(common)?;
    let (ref_list, new_list) = (read_site_list(reference)?, read_site_list(new)?);
    validate_sites(&scenario, &ref_list)?;
    validate_sites(&scenario, &new_list)?;
    let cache = open_cache(cache_dir)?;
    let prepared = scenario.prepare(cache.as_ref())?;
    let a = evaluate_list(&scenario, &prepared, ref_list, cache.as_ref())?;
    let b = evaluate_list(&scenario, &prepared, new_list, cache.as_ref())?;
    let (sa, sb) = (statistics(&a), statistics(&b));
    let change: BTreeMap<&'static str, Option<f64>> = sa
        .iter()
        .map(|(k, &v)| (*k, sb.get(k).and_then(|&w| percent_change(v, w))))
        .collect();
    println!(
        "{:<22} {:>14} {:>14} {:>10}",
        "statistic", "reference", "new", "change"
    );
    for (k, v) in &sa {
        let w = sb.get(k).copied().unwrap_or(f64::NAN);
        let c = change[k].map_or("n/a".to_string(), |c| format!("{c:+.2}%"));
        println!("{k:<22} {v:>14.6e} {w:>14.6e} {c:>10}");
    }
    create_dir(&common.out)?;
    write_json(
        &common.out.join("compare.json"),
        &CompareArtifact {
            version: VERSION,
            scenario: scenario_json(&scenario)?,
            reference: &a,
            new: &b,
            change_percent: change,
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct BaselineArtifact {
    version: &'static str,
    scenario: serde_json::Value,
    count: usize,
    seed: u64,
    baseline: BaselineResult,
}

fn baseline(
    common: &Common,
    cache_dir: Option<PathBuf>,
    count: Option<usize>,
    draws: usize,
    seed: Option<u64>,
) -> anyhow::Result<ExitCode> {
    let scenario = load(common)?;
    let prepared = prepare(&scenario, cache_dir)?;
    let count = match (count, scenario.termination()) {
        (Some(c), _) => c,
        (None, Termination::Budget(k)) => k,
        (None, Termination::Coverage(_)) => bail!("--count is required with a coverage target"),
    };
    let seed = seed.unwrap_or(scenario.optimizer.seed);
    let result = random_baseline(&prepared.problem, &scenario.radio, count, draws, seed)?;
    print_report("average: ", &result.averaged);
    create_dir(&common.out)?;
    write_json(
        &common.out.join("baseline.json"),
        &BaselineArtifact {
            version: VERSION,
            scenario: scenario_json(&scenario)?,
            count,
            seed,
            baseline: result,
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct VerifyArtifact {
    version: &'static str,
    scenario: serde_json::Value,
    suite: SuiteReport,
    greedy: PlacementResult,
    brute_force: Option<BruteForceResult>,
    certificate: Option<BoundCertificate>,
}

fn verify(
    common: &Common,
    cache_dir: Option<PathBuf>,
    trials: usize,
    cap: u128,
) -> anyhow::Result<ExitCode> {
    let scenario = load(common)?;
    let prepared = prepare(&scenario, cache_dir)?;
    let problem = &prepared.problem;
    let suite = property_suite(
        problem,
        &SuiteConfig::from_trials(trials, scenario.optimizer.seed),
    );
    for c in &suite.checks {
        let status = match (&c.skipped, c.pass) {
            (Some(why), _) => format!("skipped ({why})"),
            (None, true) => "pass".to_string(),
            (None, false) => format!("FAIL ({} counterexamples)", c.counterexamples.len()),
        };
        println!("{:<24} {:>6} trials  {status}", c.name, c.trials);
    }
    for w in &suite.warnings {
        println!("warning: {w}");
    }
    let greedy = ia_spa(problem, &prepared.config)?;
    let (brute, cert) = match prepared.config.termination {
        Termination::Budget(k) => {
            let brute = brute_force_optimal(problem, k, &prepared.config.fixed, cap)?;
            let cert = certify_bound(problem, &greedy, &brute, prepared.config.epsilon)?;
            println!(
                "bound ratio {:.4} (constant {:.4}, margin {:+.4})  {}",
                cert.ratio,
                cert.bound_constant,
                cert.margin,
                if cert.pass { "pass" } else { "FAIL" }
            );
            (Some(brute), Some(cert))
        }
        Termination::Coverage(_) => {
            println!("bound certification skipped: coverage-target runs have no fixed k");
            (None, None)
        }
    };
    let ok = suite.pass() && cert.as_ref().is_none_or(|c| c.pass);
    create_dir(&common.out)?;
    write_json(
        &common.out.join("verify.json"),
        &VerifyArtifact {
            version: VERSION,
            scenario: scenario_json(&scenario)?,
            suite,
            greedy,
            brute_force: brute,
            certificate: cert,
        },
    )?;
    if ok {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(anyhow!("verification failed, see verify.json"))
    }
}
