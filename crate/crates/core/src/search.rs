//! Query-time search: partition selection by center inner product,
//! per-query lookup tables, per-entry score assembly and top-k
//! aggregation. All score arithmetic is in f64.

use rayon::prelude::*;

use crate::data::DataError;
use crate::index::{LodMsqIndex, Partition};
use crate::linalg;
use crate::quant::{decode_uq, PqCodebook};
use crate::topk::TopK;

/// Per-query table of inner products between the rotated query and every
/// codeword: `table[b][j] = q_r^{(b)} · codeword_j`.
#[derive(Debug, Clone)]
pub struct LookupTables {
    codewords: usize,
    values: Vec<f64>,
}

impl LookupTables {
    pub(crate) fn from_values(codewords: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len() % codewords, 0);
        LookupTables { codewords, values }
    }

    pub fn subspaces(&self) -> usize {
        self.values.len() / self.codewords
    }

    pub fn entry(&self, subspace: usize, code: usize) -> f64 {
        self.values[subspace * self.codewords + code]
    }
}

/// Exact subspace inner products of an already-rotated query.
pub fn build_adc_tables(q_rotated: &[f64], pq: &PqCodebook) -> LookupTables {
    let n_w = pq.codewords();
    let mut values = Vec::with_capacity(pq.subspaces() * n_w);
    for b in 0..pq.subspaces() {
        let range = pq.subspace_range(b);
        let q_sub = &q_rotated[range];
        for j in 0..n_w {
            let mut acc = 0.0f64;
            for (qv, cv) in q_sub.iter().zip(pq.codeword(b, j).iter()) {
                acc += qv * *cv as f64;
            }
            values.push(acc);
        }
    }
    LookupTables {
        codewords: n_w,
        values,
    }
}

/// Sum of one table lookup per subspace.
#[inline]
pub fn adc_ip(tables: &LookupTables, codes: &[u16]) -> f64 {
    let mut acc = 0.0f64;
    for (b, &c) in codes.iter().enumerate() {
        acc += self_entry(tables, b, c);
    }
    acc
}

#[inline]
fn self_entry(tables: &LookupTables, b: usize, c: u16) -> f64 {
    tables.values[b * tables.codewords + c as usize]
}

/// Top `m_adc` partitions by center inner product, descending; ties go
/// to the smaller partition index.
pub fn select_partitions(
    q: &[f32],
    index: &LodMsqIndex,
    m_adc: usize,
) -> Result<Vec<(f64, usize)>, DataError> {
    if q.len() != index.dim {
        return Err(DataError::BadDim {
            query: q.len(),
            dataset: index.dim,
        });
    }
    if m_adc > index.partitions.len() {
        return Err(DataError::BadK {
            k: m_adc,
            n: index.partitions.len(),
        });
    }
    let mut scored: Vec<(f64, usize)> = index
        .partitions
        .iter()
        .enumerate()
        .map(|(i, p)| (linalg::dot(q, &p.center), i))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    scored.truncate(m_adc);
    Ok(scored)
}

/// Approximate residual inner product of one stored entry:
/// scale level × table sum, plus the decoded projected component times
/// (q·v). The partition inner product p_i is *not* included.
pub fn score_entry(
    q: &[f32],
    partition: &Partition,
    subspaces: usize,
    entry: usize,
    tables: &LookupTables,
) -> f64 {
    let codes = partition.pq_codes_of(entry, subspaces);
    let level = partition.sq.level(partition.sq_codes[entry] as usize);
    let q_dot_v = linalg::dot(q, partition.direction.as_slice());
    let z = decode_uq(&partition.uq, partition.uq_codes[entry]);
    level * adc_ip(tables, codes) + q_dot_v * z
}

/// Search results as (row id, approximate score), best first.
pub type SearchResult = Vec<(u32, f64)>;

/// Top-k approximate inner products for one query, scanning the `m_adc`
/// best partitions. Returns fewer than k results only when fewer
/// candidates were scored.
pub fn search(
    index: &LodMsqIndex,
    q: &[f32],
    k: usize,
    m_adc: usize,
) -> Result<SearchResult, DataError> {
    if k == 0 {
        return Err(DataError::BadK { k, n: index.len() });
    }
    let selected = select_partitions(q, index, m_adc)?;
    let q_rotated = index.rotation.apply_t(q);
    let tables = build_adc_tables(&q_rotated, &index.pq);

    let mut top = TopK::new(k);
    let subspaces = index.config.subspaces;
    for (p_ip, pi) in selected {
        let p = &index.partitions[pi];
        let q_dot_v = linalg::dot(q, p.direction.as_slice());
        // Per-partition constants: the projected term becomes one
        // multiply-add on the stored integer code.
        let step = q_dot_v * p.uq.step as f64;
        let base = q_dot_v * p.uq.offset as f64 + p_ip;
        for e in 0..p.len() {
            let codes = p.pq_codes_of(e, subspaces);
            let level = p.sq.level(p.sq_codes[e] as usize);
            let score = level * adc_ip(&tables, codes) + step * p.uq_codes[e] as f64 + base;
            top.push(score, p.row_ids[e]);
        }
    }
    Ok(top.into_sorted())
}

/// Batch search, parallel over queries; result order matches query order.
pub fn search_batch(
    index: &LodMsqIndex,
    queries: &crate::data::Dataset,
    k: usize,
    m_adc: usize,
) -> Result<Vec<SearchResult>, DataError> {
    if queries.dim() != index.dim {
        return Err(DataError::BadDim {
            query: queries.dim(),
            dataset: index.dim,
        });
    }
    if k == 0 || m_adc > index.partitions.len() {
        return Err(DataError::BadK {
            k: k.min(m_adc),
            n: index.partitions.len(),
        });
    }
    (0..queries.len())
        .into_par_iter()
        .map(|i| search(index, queries.row(i), k, m_adc))
        .collect()
}

/// Bits read from the entry payload when scanning the selected
/// partitions, with and without the scale codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostBits {
    /// l_UQ + n_B·⌈log₂ n_W⌉ per entry.
    pub payload: u64,
    /// Payload plus l_SQ per entry.
    pub with_scales: u64,
}

/// Read cost for scanning the `m_adc` largest partitions, the
/// selection-independent upper bound on any query's scan.
pub fn search_cost_bits(index: &LodMsqIndex, m_adc: usize) -> CostBits {
    let mut sizes: Vec<usize> = index.partitions.iter().map(|p| p.len()).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    let entries: u64 = sizes.iter().take(m_adc).map(|s| *s as u64).sum();
    cost_for_entries(&index.config, entries)
}

/// Read cost for an actual partition selection.
pub fn search_cost_bits_for(index: &LodMsqIndex, selected: &[usize]) -> CostBits {
    let entries: u64 = selected
        .iter()
        .map(|&p| index.partitions[p].len() as u64)
        .sum();
    cost_for_entries(&index.config, entries)
}

fn cost_for_entries(config: &crate::index::IndexConfig, entries: u64) -> CostBits {
    let per_entry = config.uq_bits as u64 + config.subspaces as u64 * config.code_bits() as u64;
    CostBits {
        payload: entries * per_entry,
        with_scales: entries * (per_entry + config.sq_bits as u64),
    }
}
