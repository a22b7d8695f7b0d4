//! Attention-weight statistics of trained WD-TCN models, binned by T60.

use std::fmt::Write as _;

use crate::dsp::ReverbSample;
use crate::error::{Error, Result};
use crate::model::{Model, Variant};

/// Default T60 bin edges: six equal-width bins over [0.1, 1.0] s.
pub const DEFAULT_T60_EDGES: [f64; 7] = [0.1, 0.25, 0.4, 0.55, 0.7, 0.85, 1.0];

/// Attention weights of one block for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub utterance_id: usize,
    pub t60: f64,
    pub block_index: usize,
    pub a: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct T60BinSummary {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub mean_a: Vec<f64>,
    /// Utterances averaged into this bin.
    pub count: usize,
}

/// Result of [`bin_by_t60`]: populated bins plus records outside every bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Binning {
    pub bins: Vec<T60BinSummary>,
    pub spill: Vec<AttentionRecord>,
}

/// One record per (utterance, block), in corpus then block order.
pub fn collect_attention(model: &Model, corpus: &[ReverbSample]) -> Result<Vec<AttentionRecord>> {
    if model.config().variant != Variant::WdTcn {
        return Err(Error::UnsupportedVariant("attention analysis"));
    }
    let mut records = Vec::with_capacity(corpus.len() * model.config().num_blocks());
    for (id, sample) in corpus.iter().enumerate() {
        let (_, trace) = model.forward(&sample.input)?;
        for (block_index, a) in trace.attention.into_iter().enumerate() {
            records.push(AttentionRecord {
                utterance_id: id,
                t60: sample.t60,
                block_index,
                a,
            });
        }
    }
    Ok(records)
}

fn validate_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::Config("need at least two T60 bin edges".into()));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "T60 bin edges must be strictly increasing: {edges:?}"
        )));
    }
    Ok(())
}

/// Index of the bin holding `t60`; bins are `[lo, hi)` except the last,
/// which also includes its upper edge.
fn bin_of(edges: &[f64], t60: f64) -> Option<usize> {
    let last = edges.len() - 2;
    (0..=last).find(|&i| t60 >= edges[i] && (t60 < edges[i + 1] || (i == last && t60 == edges[i + 1])))
}

/// Averages attention over blocks within each utterance, then over the
/// utterances in each T60 bin. Empty bins are omitted.
pub fn bin_by_t60(records: &[AttentionRecord], edges: &[f64]) -> Result<Binning> {
    validate_edges(edges)?;
    let q = records.first().map_or(0, |r| r.a.len());
    if records.iter().any(|r| r.a.len() != q) {
        return Err(Error::dim("bin_by_t60", "records have differing weight counts"));
    }

    // Per-utterance means, keyed in first-seen order.
    let mut utterances: Vec<(usize, f64, Vec<f64>, usize)> = Vec::new();
    let mut spill = Vec::new();
    for r in records {
        if bin_of(edges, r.t60).is_none() {
            spill.push(r.clone());
            continue;
        }
        match utterances.iter_mut().find(|u| u.0 == r.utterance_id) {
            Some(u) => {
                u.2.iter_mut().zip(&r.a).for_each(|(s, a)| *s += a);
                u.3 += 1;
            }
            None => utterances.push((r.utterance_id, r.t60, r.a.clone(), 1)),
        }
    }

    let mut sums = vec![(vec![0.0; q], 0usize); edges.len() - 1];
    for (_, t60, sum, blocks) in &utterances {
        let bin = bin_of(edges, *t60).expect("spilled records were removed");
        let (acc, n) = &mut sums[bin];
        acc.iter_mut().zip(sum).for_each(|(a, s)| *a += s / *blocks as f64);
        *n += 1;
    }
    let bins = sums
        .into_iter()
        .enumerate()
        .filter(|(_, (_, n))| *n > 0)
        .map(|(i, (acc, n))| T60BinSummary {
            bin_lo: edges[i],
            bin_hi: edges[i + 1],
            mean_a: acc.into_iter().map(|s| s / n as f64).collect(),
            count: n,
        })
        .collect();
    Ok(Binning { bins, spill })
}

/// Unweighted mean of per-model summaries over bins present for every model.
pub fn average_models(per_model: &[Vec<T60BinSummary>]) -> Vec<T60BinSummary> {
    let Some(first) = per_model.first() else {
        return Vec::new();
    };
    let m = per_model.len() as f64;
    first
        .iter()
        .filter_map(|b| {
            let matching: Vec<&T60BinSummary> = per_model
                .iter()
                .filter_map(|s| s.iter().find(|o| o.bin_lo == b.bin_lo && o.bin_hi == b.bin_hi))
                .collect();
            if matching.len() != per_model.len() {
                return None;
            }
            let mut mean_a = vec![0.0; b.mean_a.len()];
            for s in &matching {
                mean_a.iter_mut().zip(&s.mean_a).for_each(|(a, v)| *a += v / m);
            }
            Some(T60BinSummary {
                bin_lo: b.bin_lo,
                bin_hi: b.bin_hi,
                mean_a,
                count: matching.iter().map(|s| s.count).sum(),
            })
        })
        .collect()
}

/// `bin_lo,bin_hi,count,mean_a1,...,mean_aQ` with round-trip float formatting.
pub fn bins_csv(bins: &[T60BinSummary]) -> String {
    let q = bins.first().map_or(2, |b| b.mean_a.len());
    let mut out = String::from("bin_lo,bin_hi,count");
    for i in 1..=q {
        let _ = write!(out, ",mean_a{i}");
    }
    out.push('\n');
    for b in bins {
        let _ = write!(out, "{:?},{:?},{}", b.bin_lo, b.bin_hi, b.count);
        for a in &b.mean_a {
            let _ = write!(out, ",{a:?}");
        }
        out.push('\n');
    }
    out
}

/// Parses a comma-separated list of bin edges such as `0.1,0.4,1.0`.
pub fn parse_edges(list: &str) -> Result<Vec<f64>> {
    let edges = list
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad T60 edge `{s}`: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    validate_edges(&edges)?;
    Ok(edges)
}
