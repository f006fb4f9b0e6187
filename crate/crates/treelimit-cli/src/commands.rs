use crate::{Command, Common, FileConfig};
use anyhow::{bail, Context, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};
use treelimit::clt::{bst_mixture_experiment, clt_experiment, convergence_trace};
use treelimit::growth::{uniform_split_experiment, GrowthModel};
use treelimit::increments::increment_experiment;
use treelimit::measure::Measure;
use treelimit::report;
use treelimit::word::Word;

/// Resolved run settings after merging flags, config file, environment and
/// defaults (in that order of precedence).
struct Settings {
    seed: u64,
    workers: usize,
    out: PathBuf,
    file: FileConfig,
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn required<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T> {
    flag.or(file).with_context(|| format!("missing required option --{name}"))
}

fn settings(common: &Common) -> Result<Settings> {
    let file: FileConfig = match &common.config {
        Some(path) => serde_json::from_str(
            &std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?,
        )
        .with_context(|| format!("parsing config {}", path.display()))?,
        None => FileConfig::default(),
    };
    let env_seed = std::env::var("TREELIMIT_SEED")
        .ok()
        .map(|s| s.parse::<u64>().context("parsing TREELIMIT_SEED"))
        .transpose()?;
    let seed = common.seed.or(file.seed).or(env_seed).unwrap_or(0);
    let workers = pick(
        common.workers,
        file.workers,
        std::thread::available_parallelism().map_or(1, |p| p.get()),
    );
    if workers == 0 {
        bail!("--workers must be at least 1");
    }
    let out = pick(common.out.clone(), file.out.clone(), PathBuf::from("."));
    Ok(Settings { seed, workers, out, file })
}

/// Runs `f` on a dedicated pool with the requested worker count.
fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building worker pool")?;
    Ok(pool.install(f))
}

/// Parses a comma-separated node list; an empty token or `root` denotes the
/// root word.
fn parse_nodes(spec: &str) -> Result<Vec<Word>> {
    spec.split(',')
        .map(|tok| {
            let tok = tok.trim();
            if tok.is_empty() || tok == "root" {
                Ok(Word::root())
            } else {
                Ok(tok.parse::<Word>()?)
            }
        })
        .collect()
}

fn parse_checkpoints(spec: &str) -> Result<Vec<u64>> {
    spec.split(',')
        .map(|tok| tok.trim().parse::<u64>().context("parsing checkpoint size"))
        .collect()
}

fn parse_model(name: &str, measure: Option<&str>) -> Result<GrowthModel> {
    match name {
        "dst" => {
            let spec = measure.context("--model dst needs --measure")?;
            Ok(GrowthModel::Dst(Measure::parse_spec(spec)?))
        }
        "bst" => Ok(GrowthModel::Bst),
        "remy" => Ok(GrowthModel::Remy),
        "catalan" => Ok(GrowthModel::CatalanDirect),
        other => bail!("unknown model {other:?} (expected dst | bst | remy | catalan)"),
    }
}

fn write_report(
    out: &Path,
    stem: &str,
    json: &impl Serialize,
    csv: Option<(&str, String)>,
) -> Result<()> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let json_path = out.join(format!("{stem}.json"));
    std::fs::write(&json_path, serde_json::to_string_pretty(json)?)?;
    println!("wrote {}", json_path.display());
    if let Some((suffix, body)) = csv {
        let csv_path = out.join(format!("{stem}{suffix}.csv"));
        std::fs::write(&csv_path, body)?;
        println!("wrote {}", csv_path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct GrowSummary {
    model: String,
    measure: Option<String>,
    n: usize,
    seed: u64,
    height: usize,
    trajectory_file: String,
}

pub fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Grow { common, model, measure, n } => {
            let s = settings(&common)?;
            let model_name = pick(model, s.file.model.clone(), "dst".into());
            let measure_spec = measure.or(s.file.measure.clone());
            let model = parse_model(&model_name, measure_spec.as_deref())?;
            let n = pick(n, s.file.n, 1000);
            let tr = model.grow(n, s.seed)?;
            std::fs::create_dir_all(&s.out)?;
            let path = s.out.join("trajectory.txt");
            std::fs::write(&path, tr.to_text())?;
            let summary = GrowSummary {
                model: model_name,
                measure: measure_spec,
                n,
                seed: s.seed,
                height: tr.final_tree().height(),
                trajectory_file: path.display().to_string(),
            };
            write_report(&s.out, "grow", &summary, None)?;
            println!("grew n={n} height={}", summary.height);
            Ok(true)
        }
        Command::Uniform { common, n, reps } => {
            let s = settings(&common)?;
            let n = pick(n, s.file.n, 100);
            let reps = pick(reps, s.file.reps.map(|r| r as u64), 10_000);
            let rep = uniform_split_experiment(n, reps, s.seed);
            let csv = report::split_histogram_csv(&rep.histogram);
            write_report(&s.out, "uniform", &rep, Some(("", csv)))?;
            println!("p_mid = {:.4} at n={n} over {reps} samples", rep.p_mid);
            Ok(true)
        }
        Command::Clt { common, measure, n, reps, nodes } => {
            let s = settings(&common)?;
            let mu = Measure::parse_spec(&required(measure, s.file.measure.clone(), "measure")?)?;
            let n = pick(n, s.file.n, 10_000);
            let reps = pick(reps, s.file.reps, 10_000);
            let nodes = parse_nodes(&pick(nodes, s.file.nodes.clone(), "0,1,00".into()))?;
            let rep = with_pool(s.workers, || clt_experiment(&mu, n, reps, &nodes, s.seed))??;
            let csv = report::covariance_csv(&rep);
            write_report(&s.out, "clt", &rep, Some(("", csv)))?;
            println!(
                "covariance: {:.1}% of entries within {} SE{}",
                100.0 * rep.pass_fraction,
                treelimit::clt::COV_SIGMAS,
                if rep.low_power { " (low power)" } else { "" }
            );
            Ok(rep.passed)
        }
        Command::BstMixture { common, n, reps, nodes, shape_depth, shape_reps } => {
            let s = settings(&common)?;
            let n = pick(n, s.file.n, 10_000);
            let reps = pick(reps, s.file.reps, 2_000);
            let nodes = parse_nodes(&pick(nodes, s.file.nodes.clone(), "0,1,00".into()))?;
            let shape_depth = pick(shape_depth, s.file.shape_depth, 3);
            let shape_reps = pick(shape_reps, s.file.shape_reps, 100_000);
            let rep = with_pool(s.workers, || {
                bst_mixture_experiment(n, reps, &nodes, shape_depth, shape_reps, s.seed)
            })??;
            let csv = report::covariance_csv(&rep.conditional);
            write_report(&s.out, "bst_mixture", &rep, Some(("", csv)))?;
            let shapes_csv = report::shapes_csv(&rep.shapes);
            std::fs::write(s.out.join("bst_mixture_shapes.csv"), shapes_csv)?;
            println!(
                "shape agreement p = {:.4}; conditional covariance {:.1}% in band",
                rep.shapes.chi_square.p_value,
                100.0 * rep.conditional.pass_fraction
            );
            Ok(rep.passed)
        }
        Command::Increments { common, measure, nodes, horizon, block_len, shuffles, dump_series } => {
            let s = settings(&common)?;
            let mu = Measure::parse_spec(&required(measure, s.file.measure.clone(), "measure")?)?;
            let nodes = parse_nodes(&pick(nodes, s.file.nodes.clone(), "root,0,1".into()))?;
            let horizon = pick(horizon, s.file.horizon, 10_000);
            let block_len = pick(block_len, s.file.block_len, 2);
            let shuffles = pick(shuffles, s.file.shuffles, 199);
            let rep = increment_experiment(&mu, &nodes, horizon, block_len, shuffles, s.seed)?;
            write_report(&s.out, "increments", &rep, None)?;
            if dump_series {
                // Re-extract the series for the CSV dumps.
                let model = GrowthModel::Dst(mu.clone());
                let tr = model.grow(rep.n, s.seed)?;
                for node in &nodes {
                    let proc = treelimit::increments::extract_increments(&tr, node, horizon)?;
                    let name = if node.is_empty() { "root".into() } else { node.to_string() };
                    let path = s.out.join(format!("increments_{name}.csv"));
                    std::fs::write(&path, report::increments_csv(&proc))?;
                    println!("wrote {}", path.display());
                }
            }
            for node in &rep.nodes {
                println!(
                    "node {:?}: pmf_ok={} reconstruction_ok={} p={:.4}",
                    node.node.to_string(),
                    node.pmf_ok,
                    node.reconstruction_ok,
                    node.p_value
                );
            }
            Ok(rep.passed)
        }
        Command::Trace { common, model, measure, node, checkpoints } => {
            let s = settings(&common)?;
            let model_name = pick(model, s.file.model.clone(), "dst".into());
            let measure_spec = measure.or(s.file.measure.clone());
            let model = parse_model(&model_name, measure_spec.as_deref())?;
            let node_spec = pick(node, s.file.node.clone(), "0".into());
            let node = parse_nodes(&node_spec)?
                .into_iter()
                .next()
                .context("empty node spec")?;
            let checkpoints = parse_checkpoints(&pick(
                checkpoints,
                s.file.checkpoints.clone(),
                "10,100,1000,10000".into(),
            ))?;
            let rep = convergence_trace(&model, &node, &checkpoints, s.seed)?;
            let csv = report::trace_csv(&rep);
            write_report(&s.out, "trace", &rep, Some(("", csv)))?;
            if let Some(last) = rep.rows.last() {
                println!("final t = {:.6} at n = {}", last.t, last.n);
            }
            Ok(rep.bounds_ok)
        }
        Command::Embed { common, model, measure, n, depth } => {
            let s = settings(&common)?;
            let model_name = pick(model, s.file.model.clone(), "dst".into());
            let measure_spec = measure.or(s.file.measure.clone());
            let model = parse_model(&model_name, measure_spec.as_deref())?;
            let n = pick(n, s.file.n, 10_000);
            let depth = pick(depth, s.file.depth, 6);
            let tree = model.grow_tree(n, s.seed)?;
            let target = match &model {
                GrowthModel::Dst(mu) => Some(mu.clone()),
                _ => None,
            };
            let rep = report::embed_report(&tree, target.as_ref(), depth)?;
            let csv = report::embed_csv(&rep);
            write_report(&s.out, "embed", &rep, Some(("", csv)))?;
            if let Some(tv) = rep.tv_to_target {
                println!("depth-{depth} total variation to target: {tv:.6}");
            }
            println!("bounds_ok = {}, mass sum = {:.12}", rep.bounds_ok, rep.mass_sum);
            Ok(rep.bounds_ok && (rep.mass_sum - 1.0).abs() < 1e-9)
        }
        Command::Selftest { common, table } => {
            let s = settings(&common)?;
            crate::selftest::run(s.seed, table.as_deref())
        }
    }
}
