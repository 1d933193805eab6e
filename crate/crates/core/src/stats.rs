//! Domain-divergence statistics: answer-length histograms, length bands and
//! initial question phrases.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, QaPair};
use crate::error::{Error, Result};
use crate::text::tokenize;

/// Answer length in shared-tokenization words, at least 1.
pub fn answer_length_words(pair: &QaPair) -> usize {
    tokenize(&pair.answer_text).len().max(1)
}

pub fn answer_lengths(corpus: &Corpus) -> Vec<f64> {
    corpus.iter().map(|p| answer_length_words(p) as f64).collect()
}

/// `ceil(log2 n) + 1`, computed on integers.
pub fn sturges_bins(n: usize) -> usize {
    debug_assert!(n >= 2);
    (n - 1).ilog2() as usize + 2
}

/// Percentile with linear interpolation between closest ranks.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * t
}

/// Bin count from the Freedman–Diaconis width `2 IQR n^(-1/3)`, or `None`
/// when the interquartile range is zero.
pub fn freedman_diaconis_bins(sorted: &[f64]) -> Option<usize> {
    let n = sorted.len();
    let iqr = percentile(sorted, 75.0) - percentile(sorted, 25.0);
    if iqr <= 0.0 {
        return None;
    }
    let width = 2.0 * iqr * (n as f64).powf(-1.0 / 3.0);
    let range = sorted[n - 1] - sorted[0];
    Some(((range / width).ceil() as usize).max(1))
}

/// `count + 1` evenly spaced edges from `lo` to `hi`, last edge exact.
pub fn linspace_edges(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let step = (hi - lo) / count as f64;
    let mut edges: Vec<f64> = (0..=count).map(|i| lo + i as f64 * step).collect();
    edges[count] = hi;
    edges
}

/// Equal-width edges over `[min, max]` with `max(Sturges, FD)` bins.
pub fn auto_bin_edges(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::DegenerateSample(format!("{} samples", samples.len())));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateSample("non-finite sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if hi <= lo {
        return Err(Error::DegenerateSample("zero range".into()));
    }
    let bins = sturges_bins(sorted.len()).max(freedman_diaconis_bins(&sorted).unwrap_or(0));
    Ok(linspace_edges(lo, hi, bins))
}

pub fn validate_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::InvalidEdges("need at least two edges".into()));
    }
    if edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidEdges("non-finite edge".into()));
    }
    if edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidEdges("edges not strictly increasing".into()));
    }
    Ok(())
}

/// Bin of `x`: half-open bins except the last, which is closed. Values
/// outside the edges clamp into the first or last bin.
pub fn bin_index(edges: &[f64], x: f64) -> usize {
    let bins = edges.len() - 1;
    if x < edges[0] {
        return 0;
    }
    if x >= edges[bins] {
        return bins - 1;
    }
    edges.partition_point(|&e| e <= x) - 1
}

pub fn bin_counts(edges: &[f64], samples: &[f64]) -> Vec<usize> {
    let mut counts = vec![0usize; edges.len() - 1];
    for &x in samples {
        counts[bin_index(edges, x)] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub probabilities: Vec<f64>,
    pub n_samples: usize,
}

impl LengthHistogram {
    /// Mass per bin over fixed `edges`.
    pub fn from_samples(samples: &[f64], edges: Vec<f64>) -> Result<Self> {
        validate_edges(&edges)?;
        if samples.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let counts = bin_counts(&edges, samples);
        let n = samples.len();
        let probabilities = counts.iter().map(|&c| c as f64 / n as f64).collect();
        Ok(LengthHistogram {
            bin_edges: edges,
            counts,
            probabilities,
            n_samples: n,
        })
    }

    pub fn bins(&self) -> usize {
        self.probabilities.len()
    }

    /// CSV with header `bin_lo,bin_hi,probability`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_lo", "bin_hi", "probability"])?;
        for (i, p) in self.probabilities.iter().enumerate() {
            w.serialize((self.bin_edges[i], self.bin_edges[i + 1], p))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Answer-length histogram of `corpus`. Without `edges`, automatic edges
/// are used; a corpus whose answers all share one length gets a single
/// unit-width bin centred on it.
pub fn length_histogram(corpus: &Corpus, edges: Option<&[f64]>) -> Result<LengthHistogram> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let lengths = answer_lengths(corpus);
    let edges = match edges {
        Some(e) => e.to_vec(),
        None => match auto_bin_edges(&lengths) {
            Ok(e) => e,
            Err(Error::DegenerateSample(_)) => vec![lengths[0] - 0.5, lengths[0] + 0.5],
            Err(e) => return Err(e),
        },
    };
    LengthHistogram::from_samples(&lengths, edges)
}

/// Word-count bands: `<= short_max`, middle, `> long_above`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthBands {
    pub short_max: usize,
    pub long_above: usize,
}

impl Default for LengthBands {
    fn default() -> Self {
        LengthBands {
            short_max: 5,
            long_above: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthShares {
    pub short: f64,
    pub medium: f64,
    pub long: f64,
}

pub fn length_shares(corpus: &Corpus, bands: LengthBands) -> Result<LengthShares> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let (mut short, mut medium, mut long) = (0usize, 0usize, 0usize);
    for p in corpus {
        match answer_length_words(p) {
            l if l <= bands.short_max => short += 1,
            l if l > bands.long_above => long += 1,
            _ => medium += 1,
        }
    }
    let n = corpus.len() as f64;
    Ok(LengthShares {
        short: short as f64 / n,
        medium: medium as f64 / n,
        long: long as f64 / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixEntry {
    pub phrase: String,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixDistribution {
    pub n_words: usize,
    /// Descending count, ties in lexicographic order.
    pub entries: Vec<PrefixEntry>,
}

impl PrefixDistribution {
    pub fn fraction(&self, phrase: &str) -> f64 {
        self.entries
            .iter()
            .find(|e| e.phrase == phrase)
            .map_or(0.0, |e| e.fraction)
    }

    /// CSV with header `phrase,count,fraction`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["phrase", "count", "fraction"])?;
        for e in &self.entries {
            w.serialize((&e.phrase, e.count, e.fraction))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// First `n_words` tokens of each question. Shorter questions contribute
/// all of their tokens.
pub fn prefix_distribution(corpus: &Corpus, n_words: usize) -> Result<PrefixDistribution> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for p in corpus {
        let tokens = tokenize(&p.question);
        let phrase = tokens[..n_words.min(tokens.len())].join(" ");
        *counts.entry(phrase).or_default() += 1;
    }
    let n = corpus.len() as f64;
    let mut entries: Vec<PrefixEntry> = counts
        .into_iter()
        .map(|(phrase, count)| PrefixEntry {
            phrase,
            count,
            fraction: count as f64 / n,
        })
        .collect();
    entries.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.phrase.cmp(&b.phrase)));
    Ok(PrefixDistribution { n_words, entries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastEntry {
    pub phrase: String,
    pub source_fraction: f64,
    pub target_fraction: f64,
    /// Ranking key: the fraction gap in the list's own direction.
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastivePrefixes {
    /// Over-represented in the target.
    pub target_heavy: Vec<ContrastEntry>,
    /// Over-represented in the source.
    pub source_heavy: Vec<ContrastEntry>,
}

/// Top-`k` phrases by fraction difference in each direction.
pub fn contrastive_prefixes(
    source: &PrefixDistribution,
    target: &PrefixDistribution,
    k: usize,
) -> Result<ContrastivePrefixes> {
    if source.n_words != target.n_words {
        return Err(Error::PrefixWidthMismatch(source.n_words, target.n_words));
    }
    let phrases: BTreeSet<&str> = source
        .entries
        .iter()
        .chain(&target.entries)
        .map(|e| e.phrase.as_str())
        .collect();
    let ranked = |target_minus_source: bool| {
        let mut list: Vec<ContrastEntry> = phrases
            .iter()
            .map(|&phrase| {
                let s = source.fraction(phrase);
                let t = target.fraction(phrase);
                ContrastEntry {
                    phrase: phrase.to_string(),
                    source_fraction: s,
                    target_fraction: t,
                    difference: if target_minus_source { t - s } else { s - t },
                }
            })
            .collect();
        list.sort_by(|a, b| b.difference.total_cmp(&a.difference).then_with(|| a.phrase.cmp(&b.phrase)));
        list.truncate(k);
        list
    };
    Ok(ContrastivePrefixes {
        target_heavy: ranked(true),
        source_heavy: ranked(false),
    })
}
