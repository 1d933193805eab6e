//! Answer-length importance weights `w(f) = p_t(f) / p_s(f)`, estimated
//! with histograms over shared bin edges and capped.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::stats::{self, answer_length_words, auto_bin_edges, bin_index};

pub const DEFAULT_CAP: f64 = 10.0;

/// Probability mass per bin (not density per unit width).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityHistogram {
    pub bin_edges: Vec<f64>,
    pub p: Vec<f64>,
}

impl DensityHistogram {
    pub fn from_samples(samples: &[f64], edges: Vec<f64>) -> Result<Self> {
        let h = stats::LengthHistogram::from_samples(samples, edges)?;
        Ok(DensityHistogram {
            bin_edges: h.bin_edges,
            p: h.probabilities,
        })
    }
}

/// Source and target histograms over edges computed from the pooled sample.
pub fn shared_density_pair(
    source_lengths: &[f64],
    target_lengths: &[f64],
) -> Result<(DensityHistogram, DensityHistogram)> {
    if source_lengths.len() < 2 || target_lengths.len() < 2 {
        return Err(Error::DegenerateSample("each domain needs at least two samples".into()));
    }
    let pooled: Vec<f64> = source_lengths.iter().chain(target_lengths).copied().collect();
    let edges = auto_bin_edges(&pooled)?;
    Ok((
        DensityHistogram::from_samples(source_lengths, edges.clone())?,
        DensityHistogram::from_samples(target_lengths, edges)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub bin_edges: Vec<f64>,
    pub weights: Vec<f64>,
    pub cap: f64,
}

impl WeightTable {
    pub fn weight_for(&self, length: f64) -> f64 {
        self.weights[bin_index(&self.bin_edges, length)]
    }

    /// A table of ones over `edges`.
    pub fn identity(edges: Vec<f64>) -> Self {
        let weights = vec![1.0; edges.len() - 1];
        WeightTable {
            bin_edges: edges,
            weights,
            cap: DEFAULT_CAP,
        }
    }
}

/// Per-bin `min(cap, p_t / p_s)`; an empty source bin gets `cap` when the
/// target has mass there and 1 when neither does.
pub fn weight_table(p_s: &DensityHistogram, p_t: &DensityHistogram, cap: f64) -> Result<WeightTable> {
    if !(cap > 0.0) || !cap.is_finite() {
        return Err(Error::InvalidCap(cap));
    }
    if p_s.bin_edges != p_t.bin_edges || p_s.p.len() != p_t.p.len() {
        return Err(Error::EdgeMismatch);
    }
    let weights = p_s
        .p
        .iter()
        .zip(&p_t.p)
        .map(|(&s, &t)| match (s > 0.0, t > 0.0) {
            (true, _) => (t / s).min(cap),
            (false, true) => cap,
            (false, false) => 1.0,
        })
        .collect();
    Ok(WeightTable {
        bin_edges: p_s.bin_edges.clone(),
        weights,
        cap,
    })
}

/// Weight of each source pair by its answer length, in corpus order.
pub fn weigh_corpus(source: &Corpus, table: &WeightTable) -> Vec<f64> {
    source
        .iter()
        .map(|p| table.weight_for(answer_length_words(p) as f64))
        .collect()
}

/// Convenience: full pipeline from two corpora.
pub fn weights_for_corpora(source: &Corpus, target: &Corpus, cap: f64) -> Result<WeightReport> {
    let (p_s, p_t) = shared_density_pair(&stats::answer_lengths(source), &stats::answer_lengths(target))?;
    let table = weight_table(&p_s, &p_t, cap)?;
    Ok(WeightReport { p_s, p_t, table })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    pub p_s: DensityHistogram,
    pub p_t: DensityHistogram,
    pub table: WeightTable,
}

impl WeightReport {
    /// CSV with header `bin_lo,bin_hi,p_source,p_target,weight`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_lo", "bin_hi", "p_source", "p_target", "weight"])?;
        let e = &self.table.bin_edges;
        for i in 0..self.table.weights.len() {
            w.serialize((e[i], e[i + 1], self.p_s.p[i], self.p_t.p[i], self.table.weights[i]))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[derive(Deserialize)]
struct WeightRow {
    bin_lo: f64,
    bin_hi: f64,
    weight: f64,
}

/// Reads a table written by [`WeightReport::write_csv`]. The cap becomes the
/// larger of the default cap and the largest weight present.
pub fn load_weight_table_csv(path: impl AsRef<Path>) -> Result<WeightTable> {
    let path = path.as_ref();
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(raw.as_slice());
    let rows: Vec<WeightRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
    if rows.is_empty() {
        return Err(Error::InvalidEdges(format!("{}: no bins", path.display())));
    }
    let mut edges: Vec<f64> = rows.iter().map(|r| r.bin_lo).collect();
    edges.push(rows[rows.len() - 1].bin_hi);
    if rows.windows(2).any(|w| w[0].bin_hi != w[1].bin_lo) {
        return Err(Error::InvalidEdges("bins are not contiguous".into()));
    }
    stats::validate_edges(&edges)?;
    let weights: Vec<f64> = rows.iter().map(|r| r.weight).collect();
    if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidWeight { index, value });
    }
    let cap = weights.iter().copied().fold(DEFAULT_CAP, f64::max);
    Ok(WeightTable {
        bin_edges: edges,
        weights,
        cap,
    })
}
