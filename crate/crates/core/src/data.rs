//! Methylation data model: beta matrices, M-value transform, window
//! partitioning, imputation and group summaries.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// One measured CpG site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Site {
    pub chrom: String,
    pub pos: u64,
    pub cpg_id: String,
}

/// Beta-value matrix with its site manifest and sample-to-group labels.
///
/// Rows are sites, columns are samples. Entries may be missing. Group
/// indices are assigned to labels in first-appearance order.
#[derive(Debug, Clone)]
pub struct MethylationDataset {
    pub sites: Vec<Site>,
    pub beta: Vec<Vec<Option<f64>>>,
    pub samples: Vec<String>,
    /// Group index per sample, 0-based.
    pub group_of: Vec<usize>,
    pub group_labels: Vec<String>,
}

impl MethylationDataset {
    pub fn new(
        sites: Vec<Site>,
        beta: Vec<Vec<Option<f64>>>,
        samples: Vec<String>,
        labels: Vec<String>,
    ) -> Result<Self> {
        if beta.len() != sites.len() {
            return Err(Error::Domain(format!(
                "beta has {} rows but manifest lists {} sites",
                beta.len(),
                sites.len()
            )));
        }
        if labels.len() != samples.len() {
            return Err(Error::Domain(format!(
                "{} samples but {} group labels",
                samples.len(),
                labels.len()
            )));
        }
        let unique: BTreeSet<&String> = samples.iter().collect();
        if unique.len() != samples.len() {
            return Err(Error::Domain("duplicate sample ids".into()));
        }
        for (i, row) in beta.iter().enumerate() {
            if row.len() != samples.len() {
                return Err(Error::Domain(format!(
                    "row {} has {} entries for {} samples",
                    i,
                    row.len(),
                    samples.len()
                )));
            }
            for v in row.iter().flatten() {
                if !(0.0..=1.0).contains(v) {
                    return Err(Error::Domain(format!(
                        "beta value {v} at site {} outside [0, 1]",
                        sites[i].cpg_id
                    )));
                }
            }
        }
        let mut seen_chroms: BTreeSet<String> = BTreeSet::new();
        for w in sites.windows(2) {
            if w[0].chrom == w[1].chrom {
                if w[1].pos <= w[0].pos {
                    return Err(Error::Domain(format!(
                        "sites not strictly increasing: {}:{} then {}:{}",
                        w[0].chrom, w[0].pos, w[1].chrom, w[1].pos
                    )));
                }
            } else {
                seen_chroms.insert(w[0].chrom.clone());
                if seen_chroms.contains(&w[1].chrom) {
                    return Err(Error::Domain(format!(
                        "chromosome {} appears in non-contiguous blocks",
                        w[1].chrom
                    )));
                }
            }
        }
        let mut group_labels: Vec<String> = Vec::new();
        let mut group_of = Vec::with_capacity(labels.len());
        for label in &labels {
            let k = match group_labels.iter().position(|l| l == label) {
                Some(k) => k,
                None => {
                    group_labels.push(label.clone());
                    group_labels.len() - 1
                }
            };
            group_of.push(k);
        }
        Ok(MethylationDataset {
            sites,
            beta,
            samples,
            group_of,
            group_labels,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn n_groups(&self) -> usize {
        self.group_labels.len()
    }

    /// Group assignment that pools every sample into a single group.
    pub fn pooled_groups(&self) -> Vec<usize> {
        vec![0; self.samples.len()]
    }
}

/// The logit-with-offset transform from methylation rate to M-value.
pub fn m_transform(beta: f64, c: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Domain(format!("beta {beta} outside [0, 1]")));
    }
    if !c.is_finite() || c < 0.0 {
        return Err(Error::Domain(format!("offset {c} must be >= 0")));
    }
    let m = ((beta + c) / (1.0 - beta + c)).ln();
    if !m.is_finite() {
        return Err(Error::Domain(format!(
            "m-value not finite for beta={beta}, c={c}"
        )));
    }
    Ok(m)
}

/// How a chromosome's sites are cut into analysis windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowRule {
    /// Consecutive blocks of this many sites.
    FixedCount(usize),
    /// Start a new window when neighboring positions differ by more than
    /// this many base pairs.
    MaxGap(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowPolicy {
    pub rule: WindowRule,
    pub min_size: usize,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy {
            rule: WindowRule::FixedCount(100),
            min_size: 10,
        }
    }
}

/// One analysis window: a consecutive block of sites with its M-value
/// sub-matrix. Design points are the ordinal positions `1..=n`, not the
/// genomic coordinates.
#[derive(Debug, Clone)]
pub struct Window {
    /// Zero-based window index across the whole series.
    pub index: usize,
    pub chrom: String,
    pub start_pos: u64,
    pub end_pos: u64,
    /// Offset of the first site in the dataset manifest.
    pub site_offset: usize,
    /// M-values, rows = sites (n), cols = samples; `None` until imputed.
    pub m: Vec<Vec<Option<f64>>>,
}

impl Window {
    pub fn n_sites(&self) -> usize {
        self.m.len()
    }

    pub fn has_missing(&self) -> bool {
        self.m.iter().any(|row| row.iter().any(|v| v.is_none()))
    }

    /// M-values as a dense matrix; errors if anything is still missing.
    pub fn dense_m(&self) -> Result<Vec<Vec<f64>>> {
        self.m
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .map(|v| {
                        v.ok_or(Error::MissingValue {
                            site: self.site_offset + i,
                            window: self.index,
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct WindowSeries {
    pub windows: Vec<Window>,
}

impl WindowSeries {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Partition the dataset's sites into analysis windows and transform the
/// beta values to M-values with offset `c`.
///
/// Windows never span chromosomes. A window shorter than the policy minimum
/// is merged into its predecessor (or into its successor at a chromosome
/// start); a chromosome with fewer sites than the minimum yields a single
/// short window.
pub fn partition_windows(
    dataset: &MethylationDataset,
    policy: &WindowPolicy,
    c: f64,
) -> Result<WindowSeries> {
    if let WindowRule::FixedCount(k) = policy.rule {
        if k < policy.min_size || k == 0 {
            return Err(Error::Config(format!(
                "window size {k} below the minimum window size {}",
                policy.min_size
            )));
        }
    }
    let mut ranges: Vec<(usize, usize)> = Vec::new();
    let mut chrom_start = 0;
    let n = dataset.sites.len();
    for i in 0..=n {
        let chrom_end = i == n || (i > 0 && dataset.sites[i].chrom != dataset.sites[i - 1].chrom);
        if !chrom_end {
            continue;
        }
        ranges.extend(split_chromosome(dataset, chrom_start, i, policy));
        chrom_start = i;
    }

    let mut windows = Vec::with_capacity(ranges.len());
    for (index, &(start, end)) in ranges.iter().enumerate() {
        let m: Vec<Vec<Option<f64>>> = (start..end)
            .map(|i| {
                dataset.beta[i]
                    .iter()
                    .map(|v| v.map(|b| m_transform(b, c)).transpose())
                    .collect::<Result<Vec<Option<f64>>>>()
            })
            .collect::<Result<_>>()?;
        windows.push(Window {
            index,
            chrom: dataset.sites[start].chrom.clone(),
            start_pos: dataset.sites[start].pos,
            end_pos: dataset.sites[end - 1].pos,
            site_offset: start,
            m,
        });
    }
    Ok(WindowSeries { windows })
}

fn split_chromosome(
    dataset: &MethylationDataset,
    start: usize,
    end: usize,
    policy: &WindowPolicy,
) -> Vec<(usize, usize)> {
    if start == end {
        return Vec::new();
    }
    let mut raw: Vec<(usize, usize)> = Vec::new();
    match policy.rule {
        WindowRule::FixedCount(k) => {
            let mut i = start;
            while i < end {
                let j = (i + k).min(end);
                raw.push((i, j));
                i = j;
            }
        }
        WindowRule::MaxGap(gap) => {
            let mut ws = start;
            for i in start + 1..end {
                if dataset.sites[i].pos - dataset.sites[i - 1].pos > gap {
                    raw.push((ws, i));
                    ws = i;
                }
            }
            raw.push((ws, end));
        }
    }
    // fold undersized windows into their predecessor, then fix a short head
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for r in raw {
        if r.1 - r.0 < policy.min_size {
            if let Some(last) = merged.last_mut() {
                last.1 = r.1;
                continue;
            }
        }
        merged.push(r);
    }
    if merged.len() > 1 && merged[0].1 - merged[0].0 < policy.min_size {
        merged[1].0 = merged[0].0;
        merged.remove(0);
    }
    merged
}

/// Replace missing M-values by linear interpolation on the design index
/// within each sample; boundary gaps take the nearest observed value.
pub fn impute_missing(window: &Window) -> Result<Window> {
    if !window.has_missing() {
        return Ok(window.clone());
    }
    let n = window.n_sites();
    let n_samples = window.m[0].len();
    let mut out = window.clone();
    for j in 0..n_samples {
        let observed: Vec<(usize, f64)> = (0..n)
            .filter_map(|i| window.m[i][j].map(|v| (i, v)))
            .collect();
        if observed.len() == n {
            continue;
        }
        if observed.len() < 2 {
            return Err(Error::TooFewObserved {
                sample: format!("column {j}"),
                window: window.index,
            });
        }
        for i in 0..n {
            if window.m[i][j].is_some() {
                continue;
            }
            let value = match (
                observed.iter().rev().find(|&&(oi, _)| oi < i),
                observed.iter().find(|&&(oi, _)| oi > i),
            ) {
                (Some(&(lo, vlo)), Some(&(hi, vhi))) => {
                    let t = (i - lo) as f64 / (hi - lo) as f64;
                    vlo + t * (vhi - vlo)
                }
                (None, Some(&(_, v))) => v,
                (Some(&(_, v)), None) => v,
                (None, None) => unreachable!("observed.len() >= 2"),
            };
            out.m[i][j] = Some(value);
        }
    }
    Ok(out)
}

/// Per-site mean M-value over the samples of group `k`.
pub fn group_means(window: &Window, group_of: &[usize], k: usize) -> Result<Vec<f64>> {
    let members: Vec<usize> = (0..group_of.len()).filter(|&j| group_of[j] == k).collect();
    if members.is_empty() {
        return Err(Error::Domain(format!("group {k} has no samples")));
    }
    let mut means = Vec::with_capacity(window.n_sites());
    for (i, row) in window.m.iter().enumerate() {
        let mut sum = 0.0;
        for &j in &members {
            sum += row[j].ok_or(Error::MissingValue {
                site: window.site_offset + i,
                window: window.index,
            })?;
        }
        means.push(sum / members.len() as f64);
    }
    Ok(means)
}
