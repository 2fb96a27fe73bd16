//! Command line driver: ground truth, index building, search, recall
//! evaluation, ablation grids and numerical analyses, all emitting
//! deterministic files or CSV.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use lodmsq::baselines::{build_baseline, search_baseline_batch, BaselineKind};
use lodmsq::data::{load_fvecs, save_fvecs, save_ivecs, Dataset};
use lodmsq::eval::{bitrate_per_entry, cached_ground_truth, recall_n_at_k, run_grid, GridSpec};
use lodmsq::format::{read_index, write_index};
use lodmsq::index::{IndexConfig, ProjDirMode};
use lodmsq::quant::{assign_vq, train_vq};
use lodmsq::theory;

const USAGE: &str = "\
lodmsq — maximum inner product search over quantized vectors

USAGE:
    lodmsq <COMMAND> [OPTIONS]

COMMANDS:
    gt       Exact brute-force ground truth (cached by content hash)
    build    Train and serialize an index
    search   Batch queries against an index file
    eval     Recall of result files against ground truth
    ablate   Recall grid over kinds × budgets × seeds, CSV out
    analyze  Numerical analyses (profile | bounds | moment), CSV out

COMMON OPTIONS:
    --config FILE        flat key=value file; command line overrides it
    --threads N          worker threads (default: all cores)
    --out PATH           output file or prefix (default: stdout for CSV)

INDEX PARAMETERS (build/ablate):
    --m M                partitions in the inverted file
    --n-b N_B            PQ codebooks per vector
    --n-w N_W            codewords per PQ codebook (default 16)
    --l-uq L_UQ          bits per uniform-quantizer code (default 8)
    --l-sq L_SQ          bits per scale code (default 4)
    --kind KIND          pq | opq | l2_opq | msq | lod_opq | lod_msq
    --seed S             required for build-type commands
    --kmeans-iters N     Lloyd iterations (default 10)
    --opq-iters N        rotation alternations (default 20)
    --clip LO,HI         uniform-quantizer clip quantiles (default 0.01,0.99)
    --proj-dir MODE      center | query_pca (default center)
    --pca-queries FILE   query fvecs for query_pca mode

SEARCH PARAMETERS:
    --m-adc M_ADC        partitions to scan (default: m/10, at least 1)
    --k K                results per query
    --n N                ground-truth depth for recall (default 1)
    --ks LIST            comma-separated k values for eval/ablate

gt:      lodmsq gt --data base.fvecs --queries q.fvecs --depth 10 --out gt_prefix
build:   lodmsq build --data base.fvecs --kind lod_msq --m 20 --n-b 23 --seed 1 --out idx.bin
search:  lodmsq search --index idx.bin --queries q.fvecs --k 10 --out res_prefix
eval:    lodmsq eval --results res_prefix --gt gt_prefix --n 1 --ks 1,10
ablate:  lodmsq ablate --data base.fvecs --queries q.fvecs --kinds opq,lod_msq \\
             --budgets 100 --ks 1,10 --seeds 1,2,3 --m 20 --m-adc 2 --seed 1
analyze: lodmsq analyze bounds --ms 100,1000 --ds 8,32 --deltas 0.1,0.5
         lodmsq analyze moment --dims 4,200 --samples 1000000
         lodmsq analyze profile --data base.fvecs --queries q.fvecs --m 20

EXIT CODES: 0 success, 1 runtime error, 2 usage or configuration error.
";

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
    fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

type CliResult<T> = Result<T, CliError>;

/// Flat key=value options merged from a config file and the command
/// line, command line winning.
struct Options {
    values: BTreeMap<String, String>,
}

impl Options {
    fn parse(args: &[String]) -> CliResult<Options> {
        let mut cli = BTreeMap::new();
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            let key = arg
                .strip_prefix("--")
                .ok_or_else(|| CliError::usage(format!("unexpected argument '{arg}'")))?;
            let value = args
                .get(i + 1)
                .ok_or_else(|| CliError::usage(format!("flag --{key} needs a value")))?;
            cli.insert(key.replace('-', "_"), value.clone());
            i += 2;
        }
        let mut values = BTreeMap::new();
        if let Some(path) = cli.get("config") {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read config {path}: {e}")))?;
            for (ln, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    CliError::usage(format!("{path}:{}: expected key=value", ln + 1))
                })?;
                values.insert(k.trim().replace('-', "_"), v.trim().to_string());
            }
        }
        values.extend(cli);
        Ok(Options { values })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    fn require(&self, key: &str) -> CliResult<&str> {
        self.get(key).ok_or_else(|| {
            CliError::usage(format!("missing required option --{}", key.replace('_', "-")))
        })
    }

    fn parse_num<T: std::str::FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                CliError::usage(format!(
                    "option --{} has invalid value '{raw}'",
                    key.replace('_', "-")
                ))
            }),
        }
    }

    fn num_or<T: std::str::FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        Ok(self.parse_num(key)?.unwrap_or(default))
    }

    fn require_num<T: std::str::FromStr>(&self, key: &str) -> CliResult<T> {
        self.require(key)?;
        Ok(self.parse_num(key)?.unwrap())
    }

    fn list_of<T: std::str::FromStr>(&self, key: &str) -> CliResult<Option<Vec<T>>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|p| {
                    p.trim().parse::<T>().map_err(|_| {
                        CliError::usage(format!(
                            "option --{} has invalid element '{p}'",
                            key.replace('_', "-")
                        ))
                    })
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        }
    }
}

fn load_dataset(opts: &Options, key: &str) -> CliResult<Dataset> {
    let path = opts.require(key)?;
    if !Path::new(path).exists() {
        return Err(CliError::usage(format!("{key} path '{path}' does not exist")));
    }
    load_fvecs(path).map_err(|e| CliError::runtime(format!("loading {path}: {e}")))
}

fn output_writer(opts: &Options, contents: &str) -> CliResult<()> {
    match opts.get("out") {
        Some(path) => std::fs::write(path, contents)
            .map_err(|e| CliError::runtime(format!("writing {path}: {e}"))),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn index_config(opts: &Options, data: &Dataset) -> CliResult<IndexConfig> {
    let m = opts.require_num::<usize>("m")?;
    let n_b = opts.require_num::<usize>("n_b")?;
    let mut config = IndexConfig::new(
        m,
        n_b,
        opts.num_or("n_w", 16usize)?,
        opts.num_or("l_uq", 8u8)?,
        opts.num_or("l_sq", 4u8)?,
    );
    config.kmeans_iters = opts.num_or("kmeans_iters", 10usize)?;
    config.opq_iters = opts.num_or("opq_iters", 20usize)?;
    if let Some(clip) = opts.list_of::<f64>("clip")? {
        if clip.len() != 2 {
            return Err(CliError::usage("--clip expects LO,HI".to_string()));
        }
        config.clip_quantiles = (clip[0], clip[1]);
    }
    config
        .validate(data.dim(), data.len())
        .map_err(|e| CliError::usage(e.to_string()))?;
    Ok(config)
}

/// m_ADC defaults to a tenth of the partitions.
fn default_m_adc(m: usize) -> usize {
    (m / 10).max(1)
}

fn cmd_gt(opts: &Options) -> CliResult<()> {
    let data = load_dataset(opts, "data")?;
    let queries = load_dataset(opts, "queries")?;
    let depth = opts.require_num::<usize>("depth")?;
    if depth == 0 || depth > data.len() {
        return Err(CliError::usage(format!(
            "depth {depth} out of range for {} rows",
            data.len()
        )));
    }
    let prefix = PathBuf::from(opts.require("out")?);
    let (_, cached) = cached_ground_truth(&data, &queries, depth, &prefix)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    eprintln!(
        "ground truth for {} queries at depth {depth}: {}",
        queries.len(),
        if cached { "cache hit" } else { "computed" }
    );
    Ok(())
}

fn cmd_build(opts: &Options) -> CliResult<()> {
    let data = load_dataset(opts, "data")?;
    let config = index_config(opts, &data)?;
    let kind: BaselineKind = opts
        .require("kind")?
        .parse()
        .map_err(|e: String| CliError::usage(e))?;
    let seed = opts.require_num::<u64>("seed")?;
    let out = opts.require("out")?;

    let pca_queries;
    let mode = match opts.get("proj_dir").unwrap_or("center") {
        "center" => ProjDirMode::Center,
        "query_pca" => {
            pca_queries = load_dataset(opts, "pca_queries")?;
            ProjDirMode::QueryPca(&pca_queries)
        }
        other => {
            return Err(CliError::usage(format!(
                "unknown --proj-dir '{other}' (expected center or query_pca)"
            )))
        }
    };

    let index = build_baseline(kind, &data, config, mode, seed)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    write_index(&index, out).map_err(|e| CliError::runtime(e.to_string()))?;
    let bits = bitrate_per_entry(&config, kind);
    eprintln!(
        "built {kind} index over {} rows: {} bits/entry at the comparison budget, {} stored",
        data.len(),
        bits.budget,
        bits.stored
    );
    Ok(())
}

fn cmd_search(opts: &Options) -> CliResult<()> {
    let index_path = opts.require("index")?;
    if !Path::new(index_path).exists() {
        return Err(CliError::usage(format!(
            "index path '{index_path}' does not exist"
        )));
    }
    let index = read_index(index_path).map_err(|e| CliError::runtime(e.to_string()))?;
    let queries = load_dataset(opts, "queries")?;
    let k = opts.require_num::<usize>("k")?;
    let m = index.partition_count();
    let m_adc = opts.num_or("m_adc", default_m_adc(m))?;
    if k == 0 || m_adc == 0 || m_adc > m {
        return Err(CliError::usage(format!(
            "need 1 ≤ m_adc ≤ {m} and k ≥ 1, got m_adc={m_adc}, k={k}"
        )));
    }
    let prefix = PathBuf::from(opts.require("out")?);

    let results = search_baseline_batch(&index, &queries, k, m_adc)
        .map_err(|e| CliError::runtime(e.to_string()))?;

    let ids: Vec<Vec<i32>> = results
        .iter()
        .map(|r| r.iter().map(|(id, _)| *id as i32).collect())
        .collect();
    save_ivecs(&ids, prefix.with_extension("ids.ivecs"))
        .map_err(|e| CliError::runtime(e.to_string()))?;
    // Score rows are padded to k so the fvecs file stays rectangular.
    let mut flat = Vec::with_capacity(results.len() * k);
    for r in &results {
        for (_, s) in r {
            flat.push(*s as f32);
        }
        flat.resize(flat.len() + (k - r.len()), f32::MIN);
    }
    let scores = Dataset::from_flat(k, flat)
        .map_err(|e| CliError::runtime(format!("assembling scores: {e}")))?;
    save_fvecs(&scores, prefix.with_extension("scores.fvecs"))
        .map_err(|e| CliError::runtime(e.to_string()))?;

    if let lodmsq::baselines::AnyIndex::LodMsq(inner) = &index {
        let cost = lodmsq::search::search_cost_bits(inner, m_adc);
        eprintln!(
            "scanned ≤ {} payload bits/query ({} with scale codes) at m_adc={m_adc}",
            cost.payload, cost.with_scales
        );
    }
    eprintln!("searched {} queries, k={k}", queries.len());
    Ok(())
}

fn cmd_eval(opts: &Options) -> CliResult<()> {
    let results_prefix = PathBuf::from(opts.require("results")?);
    let gt_prefix = PathBuf::from(opts.require("gt")?);
    let ids_path = results_prefix.with_extension("ids.ivecs");
    let gt_ids_path = gt_prefix.with_extension("ids.ivecs");
    for p in [&ids_path, &gt_ids_path] {
        if !p.exists() {
            return Err(CliError::usage(format!("'{}' does not exist", p.display())));
        }
    }
    let retrieved: Vec<Vec<u32>> = lodmsq::data::load_ivecs(&ids_path)
        .map_err(|e| CliError::runtime(e.to_string()))?
        .into_iter()
        .map(|row| row.into_iter().map(|v| v as u32).collect())
        .collect();
    let gt_ids: Vec<Vec<u32>> = lodmsq::data::load_ivecs(&gt_ids_path)
        .map_err(|e| CliError::runtime(e.to_string()))?
        .into_iter()
        .map(|row| row.into_iter().map(|v| v as u32).collect())
        .collect();
    let gt = lodmsq::data::GroundTruth {
        scores: gt_ids.iter().map(|r| vec![0.0; r.len()]).collect(),
        ids: gt_ids,
    };
    let n = opts.num_or("n", 1usize)?;
    let ks = opts
        .list_of::<usize>("ks")?
        .ok_or_else(|| CliError::usage("missing required option --ks"))?;
    let mut csv = String::from("n,k,recall\n");
    for k in ks {
        let recall =
            recall_n_at_k(&retrieved, &gt, n, k).map_err(|e| CliError::usage(e.to_string()))?;
        csv.push_str(&format!("{n},{k},{recall:.6}\n"));
    }
    output_writer(opts, &csv)
}

fn cmd_ablate(opts: &Options) -> CliResult<()> {
    let data = load_dataset(opts, "data")?;
    let queries = load_dataset(opts, "queries")?;
    let seed = opts.require_num::<u64>("seed")?; // base seed; --seeds overrides
    let mut spec = GridSpec::new(
        opts.get("dataset_name").unwrap_or("data").to_string(),
        &data,
        &queries,
    );
    if let Some(kinds) = opts.list_of::<BaselineKind>("kinds")? {
        spec.kinds = kinds;
    }
    if let Some(budgets) = opts.list_of::<u32>("budgets")? {
        spec.budgets = budgets;
    }
    if let Some(ks) = opts.list_of::<usize>("ks")? {
        spec.ks = ks;
    }
    spec.seeds = opts.list_of::<u64>("seeds")?.unwrap_or_else(|| vec![seed]);
    spec.partitions = opts.require_num::<usize>("m")?;
    spec.m_adc = opts.num_or("m_adc", default_m_adc(spec.partitions))?;
    spec.codewords = opts.num_or("n_w", 16usize)?;
    spec.uq_bits = opts.num_or("l_uq", 8u8)?;
    spec.sq_bits = opts.num_or("l_sq", 4u8)?;
    spec.recall_n = opts.num_or("n", 1usize)?;
    spec.kmeans_iters = opts.num_or("kmeans_iters", 10usize)?;
    spec.opq_iters = opts.num_or("opq_iters", 8usize)?;
    if let Some(clip) = opts.list_of::<f64>("clip")? {
        if clip.len() != 2 {
            return Err(CliError::usage("--clip expects LO,HI".to_string()));
        }
        spec.clip_quantiles = (clip[0], clip[1]);
    }
    let out = run_grid(&spec).map_err(|e| match e {
        lodmsq::eval::EvalError::BadParams(_) | lodmsq::eval::EvalError::MixedBudgets { .. } => {
            CliError::usage(e.to_string())
        }
        other => CliError::runtime(other.to_string()),
    })?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    output_writer(opts, &out.csv)
}

fn cmd_analyze(sub: &str, opts: &Options) -> CliResult<()> {
    match sub {
        "bounds" => {
            let ms = opts
                .list_of::<usize>("ms")?
                .unwrap_or_else(|| vec![100, 1000, 10000]);
            let ds = opts
                .list_of::<usize>("ds")?
                .unwrap_or_else(|| vec![8, 32, 128]);
            let deltas = opts
                .list_of::<f64>("deltas")?
                .unwrap_or_else(|| vec![0.1, 0.5]);
            let trials = opts.num_or("trials", 2000usize)?;
            let seed = opts.num_or("seed", 42u64)?;
            let mut sweep = Vec::new();
            for &m in &ms {
                for &d in &ds {
                    for &delta in &deltas {
                        sweep.push((m, d, delta));
                    }
                }
            }
            let constant =
                theory::calibrate_bound_constant(&sweep).map_err(|e| CliError::runtime(e.to_string()))?;
            eprintln!("calibrated constant = {constant:.6}");
            let mut csv = String::from("m,d,delta,L1,L1_weak,exact,empirical\n");
            for &(m, d, delta) in &sweep {
                let exact = theory::max_cos_quantile_exact(m, d, delta)
                    .map_err(|e| CliError::runtime(e.to_string()))?;
                let (l1, _) = theory::unit_center_cos_bound(m, d, delta, constant);
                let weak = theory::unit_center_cos_bound_weak(m, d, delta, constant);
                let emp = theory::empirical_max_cos(m, d, delta, trials, seed);
                csv.push_str(&format!(
                    "{m},{d},{delta},{l1:.8},{weak:.8},{exact:.8},{emp:.8}\n"
                ));
            }
            output_writer(opts, &csv)
        }
        "moment" => {
            let dims = opts
                .list_of::<usize>("dims")?
                .unwrap_or_else(|| vec![4, 200]);
            let samples = opts.num_or("samples", 1_000_000usize)?;
            let seed = opts.num_or("seed", 42u64)?;
            let mut csv = String::from("d,estimate,stderr\n");
            for d in dims {
                let est = theory::ip_second_moment_mc(d, samples, seed);
                csv.push_str(&format!("{d},{:.8},{:.8}\n", est.mean, est.std_err));
            }
            output_writer(opts, &csv)
        }
        "profile" => {
            let data = load_dataset(opts, "data")?;
            let queries = load_dataset(opts, "queries")?;
            let m = opts.require_num::<usize>("m")?;
            let seed = opts.num_or("seed", 42u64)?;
            let n_v = opts.num_or("n_v", 1000usize)?;
            let kmeans_iters = opts.num_or("kmeans_iters", 10usize)?;
            let query_row = opts.num_or("query_row", 0usize)?;
            if query_row >= queries.len() {
                return Err(CliError::usage(format!(
                    "query_row {query_row} out of range for {} queries",
                    queries.len()
                )));
            }
            let coarse = train_vq(&data, m, kmeans_iters, seed)
                .map_err(|e| CliError::runtime(e.to_string()))?;
            // The profiled partition is the best one for the chosen query.
            let q = queries.row(query_row);
            let (mut best, mut best_ip) = (0usize, f64::NEG_INFINITY);
            for p in 0..m {
                let ip = lodmsq::linalg::dot(q, coarse.center(p));
                if ip > best_ip {
                    best_ip = ip;
                    best = p;
                }
            }
            let center = coarse.center(best);
            let mut residual_rows = Vec::new();
            for i in 0..data.len() {
                if assign_vq(&coarse, data.row(i)).expect("dims match") == best {
                    residual_rows.push(
                        data.row(i)
                            .iter()
                            .zip(center.iter())
                            .map(|(x, c)| x - c)
                            .collect::<Vec<f32>>(),
                    );
                }
            }
            let residuals = Dataset::from_rows(&residual_rows)
                .map_err(|e| CliError::runtime(format!("partition {best} residuals: {e}")))?;
            let fixed_query = Dataset::from_rows(&[q.to_vec()])
                .map_err(|e| CliError::runtime(e.to_string()))?;
            let query_set = if opts.get("all_queries").is_some() {
                &queries
            } else {
                &fixed_query
            };
            let profile = theory::variance_profile(&residuals, query_set, center, n_v, seed)
                .map_err(|e| CliError::runtime(e.to_string()))?;
            let mut csv = String::from("angle,x,y,var\n");
            for ((angle, var), (x, y)) in profile
                .angles
                .iter()
                .zip(profile.variances.iter())
                .zip(profile.points())
            {
                csv.push_str(&format!("{angle:.8},{x:.8},{y:.8},{var:.8}\n"));
            }
            output_writer(opts, &csv)
        }
        other => Err(CliError::usage(format!(
            "unknown analyze mode '{other}' (expected profile, bounds or moment)"
        ))),
    }
}

fn run() -> CliResult<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let command = match args.first().map(|s| s.as_str()) {
        None | Some("--help") | Some("-h") | Some("help") => {
            print!("{USAGE}");
            return Ok(());
        }
        Some(c) => c,
    };
    // `analyze` takes a positional mode before the flags.
    let (sub, flag_start) = if command == "analyze" {
        match args.get(1).map(|s| s.as_str()) {
            Some(s) if !s.starts_with("--") => (Some(s.to_string()), 2),
            _ => (None, 1),
        }
    } else {
        (None, 1)
    };
    let opts = Options::parse(&args[flag_start..])?;

    if let Some(threads) = opts.parse_num::<usize>("threads")? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::runtime(format!("thread pool: {e}")))?;
    }

    match command {
        "gt" => cmd_gt(&opts),
        "build" => cmd_build(&opts),
        "search" => cmd_search(&opts),
        "eval" => cmd_eval(&opts),
        "ablate" => cmd_ablate(&opts),
        "analyze" => {
            let sub = sub
                .ok_or_else(|| CliError::usage("analyze needs a mode: profile, bounds or moment"))?;
            cmd_analyze(&sub, &opts)
        }
        other => Err(CliError::usage(format!("unknown command '{other}'"))),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\nrun 'lodmsq --help' for usage");
            ExitCode::from(2)
        }
    }
}
