//! Recall measurement, bitrate accounting and the experiment grid.

use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::baselines::{build_baseline, search_baseline_batch, BaselineKind};
use crate::data::{
    brute_force_ground_truth, load_fvecs, load_ivecs, save_fvecs, save_ivecs, DataError, Dataset,
    GroundTruth,
};
use crate::index::{IndexConfig, IndexError, ProjDirMode};

#[derive(Debug)]
pub enum EvalError {
    BadParams(String),
    /// Comparison across unequal per-entry bit budgets.
    MixedBudgets { expected: u32, found: u32, kind: BaselineKind },
    Index(IndexError),
    Data(DataError),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::BadParams(msg) => write!(f, "{msg}"),
            EvalError::MixedBudgets {
                expected,
                found,
                kind,
            } => write!(
                f,
                "kind {kind} spends {found} bits per entry, expected {expected}; \
                 refusing a mixed-budget comparison"
            ),
            EvalError::Index(e) => write!(f, "{e}"),
            EvalError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for EvalError {}

impl From<IndexError> for EvalError {
    fn from(e: IndexError) -> Self {
        EvalError::Index(e)
    }
}

impl From<DataError> for EvalError {
    fn from(e: DataError) -> Self {
        EvalError::Data(e)
    }
}

/// Fraction of the true top-n ids found among the first k retrieved,
/// averaged over queries.
pub fn recall_n_at_k(
    retrieved: &[Vec<u32>],
    gt: &GroundTruth,
    n: usize,
    k: usize,
) -> Result<f64, EvalError> {
    if n == 0 || n > k {
        return Err(EvalError::BadParams(format!("need 1 ≤ n ≤ k, got n={n} k={k}")));
    }
    if gt.depth() < n {
        return Err(EvalError::BadParams(format!(
            "ground truth depth {} is shallower than n={n}",
            gt.depth()
        )));
    }
    if retrieved.len() != gt.ids.len() {
        return Err(EvalError::BadParams(format!(
            "{} result lists for {} queries",
            retrieved.len(),
            gt.ids.len()
        )));
    }
    let mut total = 0.0f64;
    for (got, truth) in retrieved.iter().zip(gt.ids.iter()) {
        let top = &got[..k.min(got.len())];
        let hits = truth[..n].iter().filter(|id| top.contains(id)).count();
        total += hits as f64 / n as f64;
    }
    Ok(total / retrieved.len() as f64)
}

/// Bits spent per stored entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntryBits {
    /// The budget the comparisons are pinned to: PQ codes plus the
    /// uniform-quantizer code where the kind stores one.
    pub budget: u32,
    /// Budget plus the scale code for kinds that store scales
    /// explicitly rather than via run-sorted reordering.
    pub stored: u32,
}

pub fn bitrate_per_entry(config: &IndexConfig, kind: BaselineKind) -> EntryBits {
    let pq_bits = config.subspaces as u32 * config.code_bits();
    let uq = if kind.uses_uq() { config.uq_bits as u32 } else { 0 };
    let sq = if kind.uses_sq() { config.sq_bits as u32 } else { 0 };
    EntryBits {
        budget: pq_bits + uq,
        stored: pq_bits + uq + sq,
    }
}

/// Refuses comparisons whose kinds disagree on the per-entry budget.
pub fn ensure_equal_budgets(items: &[(BaselineKind, IndexConfig)]) -> Result<u32, EvalError> {
    let mut expected = None;
    for (kind, config) in items {
        let bits = bitrate_per_entry(config, *kind).budget;
        match expected {
            None => expected = Some(bits),
            Some(e) if e != bits => {
                return Err(EvalError::MixedBudgets {
                    expected: e,
                    found: bits,
                    kind: *kind,
                })
            }
            _ => {}
        }
    }
    expected.ok_or_else(|| EvalError::BadParams("no configurations given".into()))
}

/// Subspace count that realizes a bit budget for a kind: kinds with a
/// uniform-quantized component spend `l_UQ` of the budget on it, the
/// rest store PQ codes only.
pub fn subspaces_for_budget(
    kind: BaselineKind,
    budget: u32,
    codewords: usize,
    uq_bits: u8,
) -> Result<usize, EvalError> {
    let code_bits = (codewords as f64).log2().ceil() as u32;
    let pq_budget = if kind.uses_uq() {
        budget
            .checked_sub(uq_bits as u32)
            .ok_or_else(|| EvalError::BadParams(format!("budget {budget} < l_UQ {uq_bits}")))?
    } else {
        budget
    };
    if pq_budget == 0 || pq_budget % code_bits != 0 {
        return Err(EvalError::BadParams(format!(
            "budget {budget} does not split into {code_bits}-bit codes for kind {kind}"
        )));
    }
    Ok((pq_budget / code_bits) as usize)
}

/// One experiment grid: indexes are built once per (kind, budget, seed)
/// and evaluated at every k.
pub struct GridSpec<'a> {
    pub dataset_name: String,
    pub data: &'a Dataset,
    pub queries: &'a Dataset,
    pub kinds: Vec<BaselineKind>,
    pub budgets: Vec<u32>,
    pub ks: Vec<usize>,
    pub seeds: Vec<u64>,
    pub partitions: usize,
    pub m_adc: usize,
    pub codewords: usize,
    pub uq_bits: u8,
    pub sq_bits: u8,
    pub recall_n: usize,
    pub kmeans_iters: usize,
    pub opq_iters: usize,
    pub clip_quantiles: (f64, f64),
}

impl<'a> GridSpec<'a> {
    pub fn new(
        dataset_name: impl Into<String>,
        data: &'a Dataset,
        queries: &'a Dataset,
    ) -> Self {
        GridSpec {
            dataset_name: dataset_name.into(),
            data,
            queries,
            kinds: vec![BaselineKind::MipsLodMsq],
            budgets: vec![100],
            ks: vec![1, 10],
            seeds: vec![0],
            partitions: 16,
            m_adc: 2,
            codewords: 16,
            uq_bits: 8,
            sq_bits: 4,
            recall_n: 1,
            kmeans_iters: 10,
            opq_iters: 8,
            clip_quantiles: (0.01, 0.99),
        }
    }

    fn config_for(&self, kind: BaselineKind, budget: u32) -> Result<IndexConfig, EvalError> {
        let subspaces = subspaces_for_budget(kind, budget, self.codewords, self.uq_bits)?;
        let mut config = IndexConfig::new(
            self.partitions,
            subspaces,
            self.codewords,
            self.uq_bits,
            self.sq_bits,
        );
        config.kmeans_iters = self.kmeans_iters;
        config.opq_iters = self.opq_iters;
        config.clip_quantiles = self.clip_quantiles;
        Ok(config)
    }
}

pub const GRID_CSV_HEADER: &str = "dataset,kind,bits,m,m_ADC,n_B,n_W,l_UQ,l_SQ,seed,n,k,recall";

pub struct GridOutput {
    pub csv: String,
    pub warnings: Vec<String>,
}

pub fn run_grid(spec: &GridSpec<'_>) -> Result<GridOutput, EvalError> {
    if spec.m_adc > spec.partitions {
        return Err(EvalError::BadParams(format!(
            "m_ADC {} exceeds m {}",
            spec.m_adc, spec.partitions
        )));
    }
    if spec.ks.is_empty() || spec.kinds.is_empty() || spec.budgets.is_empty() || spec.seeds.is_empty()
    {
        return Err(EvalError::BadParams("empty grid axis".into()));
    }
    let max_k = *spec.ks.iter().max().unwrap();
    if spec.recall_n > max_k {
        return Err(EvalError::BadParams(format!(
            "recall n {} exceeds max k {max_k}",
            spec.recall_n
        )));
    }

    let mut warnings = Vec::new();
    let avg_partition = spec.data.len() as f64 / spec.partitions as f64;
    if !(250.0..=4000.0).contains(&avg_partition) {
        warnings.push(format!(
            "average partition size {avg_partition:.0} is far from the usual ~1000; \
             recall/cost trade-off may be skewed"
        ));
    }

    // Budget parity across kinds is enforced per budget point.
    for &budget in &spec.budgets {
        let items: Vec<(BaselineKind, IndexConfig)> = spec
            .kinds
            .iter()
            .map(|k| spec.config_for(*k, budget).map(|c| (*k, c)))
            .collect::<Result<_, _>>()?;
        ensure_equal_budgets(&items)?;
    }

    let gt = brute_force_ground_truth(spec.data, spec.queries, spec.recall_n)?;

    let mut csv = String::from(GRID_CSV_HEADER);
    csv.push('\n');
    for &kind in &spec.kinds {
        for &budget in &spec.budgets {
            let config = spec.config_for(kind, budget)?;
            for &seed in &spec.seeds {
                let index = build_baseline(kind, spec.data, config, ProjDirMode::Center, seed)?;
                let results = search_baseline_batch(&index, spec.queries, max_k, spec.m_adc)?;
                let ids: Vec<Vec<u32>> = results
                    .iter()
                    .map(|r| r.iter().map(|(id, _)| *id).collect())
                    .collect();
                for &k in &spec.ks {
                    let recall = recall_n_at_k(&ids, &gt, spec.recall_n, k.max(spec.recall_n))?;
                    csv.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{},{},{},{},{:.6}\n",
                        spec.dataset_name,
                        kind,
                        budget,
                        spec.partitions,
                        spec.m_adc,
                        config.subspaces,
                        config.codewords,
                        config.uq_bits,
                        config.sq_bits,
                        seed,
                        spec.recall_n,
                        k,
                        recall
                    ));
                }
            }
        }
    }
    Ok(GridOutput { csv, warnings })
}

fn gt_meta(data: &Dataset, queries: &Dataset, depth: usize) -> String {
    format!(
        "dataset_hash={:016x}\nqueries_hash={:016x}\ndepth={depth}\n",
        data.content_hash(),
        queries.content_hash()
    )
}

/// Brute-force ground truth cached as ivecs + fvecs next to a metadata
/// key; reruns with identical inputs reuse the files untouched.
pub fn cached_ground_truth(
    data: &Dataset,
    queries: &Dataset,
    depth: usize,
    prefix: &Path,
) -> Result<(GroundTruth, bool), EvalError> {
    let ids_path = prefix.with_extension("ids.ivecs");
    let scores_path = prefix.with_extension("scores.fvecs");
    let meta_path = prefix.with_extension("gt.meta");
    let meta = gt_meta(data, queries, depth);

    if let Ok(existing) = std::fs::read_to_string(&meta_path) {
        if existing == meta && ids_path.exists() && scores_path.exists() {
            let ids_raw = load_ivecs(&ids_path)?;
            let scores_raw = load_fvecs(&scores_path)?;
            let ids: Vec<Vec<u32>> = ids_raw
                .iter()
                .map(|row| row.iter().map(|v| *v as u32).collect())
                .collect();
            let scores: Vec<Vec<f64>> = (0..scores_raw.len())
                .map(|i| scores_raw.row(i).iter().map(|v| *v as f64).collect())
                .collect();
            return Ok((GroundTruth { ids, scores }, true));
        }
    }

    let gt = brute_force_ground_truth(data, queries, depth)?;
    let ids_i32: Vec<Vec<i32>> = gt
        .ids
        .iter()
        .map(|row| row.iter().map(|v| *v as i32).collect())
        .collect();
    save_ivecs(&ids_i32, &ids_path)?;
    let flat: Vec<f32> = gt
        .scores
        .iter()
        .flat_map(|row| row.iter().map(|v| *v as f32))
        .collect();
    let scores = Dataset::from_flat(depth, flat)?;
    save_fvecs(&scores, &scores_path)?;
    let mut f = std::fs::File::create(&meta_path)
        .map_err(|e| EvalError::BadParams(format!("cannot write cache meta: {e}")))?;
    f.write_all(meta.as_bytes())
        .map_err(|e| EvalError::BadParams(format!("cannot write cache meta: {e}")))?;
    Ok((gt, false))
}
