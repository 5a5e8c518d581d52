//! Summaries of learned AdaFM scales and shifts.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::Gan;
use crate::params::{Net, ParamKind};

/// Five-number summary; quartiles interpolate linearly between order
/// statistics at position `q·(n−1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Analysis("no values to summarize".into()));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |q: f64| {
            let pos = q * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Ok(Self { min: v[0], q1: at(0.25), median: at(0.5), q3: at(0.75), max: v[v.len() - 1] })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub group: usize,
    pub gamma: Quartiles,
    pub beta: Quartiles,
}

/// Per-group boxplot statistics of the generator's modulation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaFmReport {
    pub groups: Vec<GroupStats>,
}

impl AdaFmReport {
    /// CSV with header `group,param,min,q1,median,q3,max`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("group,param,min,q1,median,q3,max\n");
        for g in &self.groups {
            for (name, q) in [("gamma", g.gamma), ("beta", g.beta)] {
                s.push_str(&format!("{},{name},{},{},{},{},{}\n", g.group, q.min, q.q1, q.median, q.q3, q.max));
            }
        }
        s
    }
}

pub fn adafm_stats(gan: &Gan) -> Result<AdaFmReport> {
    let mut per_group: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (_, e) in gan.store.entries() {
        if e.net != Net::Gen || !e.is_modulation() {
            continue;
        }
        let slot = per_group.entry(e.group.unwrap_or(0)).or_default();
        let target = if e.kind == ParamKind::Gamma { &mut slot.0 } else { &mut slot.1 };
        target.extend(e.data.iter().map(|&v| v as f64));
    }
    if per_group.is_empty() {
        return Err(Error::Analysis("model has no AdaFM parameters".into()));
    }
    let groups = per_group
        .into_iter()
        .map(|(group, (g, b))| Ok(GroupStats { group, gamma: Quartiles::of(&g)?, beta: Quartiles::of(&b)? }))
        .collect::<Result<_>>()?;
    Ok(AdaFmReport { groups })
}

/// Every generator γ value, flattened in registry order. One row of the
/// sorted γ matrix.
pub fn gamma_vector(gan: &Gan) -> Vec<f64> {
    gan.store
        .entries()
        .filter(|(_, e)| e.net == Net::Gen && e.kind == ParamKind::Gamma)
        .flat_map(|(_, e)| e.data.iter().map(|&v| v as f64))
        .collect()
}

/// Column-sorted comparison of flattened γ matrices, one row per dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedGamma {
    /// Clipped, rescaled, column-permuted matrix (rows × cols).
    pub matrix: Vec<Vec<f64>>,
    /// `matrix[r][c] = rescaled[r][permutation[c]]`.
    pub permutation: Vec<usize>,
    /// Columns each row dominates, in display order.
    pub dominant: Vec<Vec<usize>>,
}

impl SortedGamma {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("row");
        for c in &self.permutation {
            s.push_str(&format!(",col{c}"));
        }
        s.push('\n');
        for (r, row) in self.matrix.iter().enumerate() {
            s.push_str(&r.to_string());
            for v in row {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

pub const GAMMA_CLIP: (f64, f64) = (0.9, 1.1);
pub const DOMINANCE_MARGIN: f64 = 0.03;

/// Stacks the rows, clips to [0.9, 1.1] and min-max rescales globally to
/// [0, 1]. Columns are then ordered by dominance: for each row `i` in turn,
/// the columns where it exceeds every other row by more than 0.03, by
/// descending value; the remaining columns follow in index order.
pub fn sorted_gamma_matrix(rows: &[Vec<f64>]) -> Result<SortedGamma> {
    let width = rows.first().map_or(0, Vec::len);
    if width == 0 {
        return Err(Error::Analysis("sorted γ matrix needs at least one non-empty row".into()));
    }
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Analysis("γ rows have different lengths".into()));
    }
    let clipped: Vec<Vec<f64>> =
        rows.iter().map(|r| r.iter().map(|v| v.clamp(GAMMA_CLIP.0, GAMMA_CLIP.1)).collect()).collect();
    let lo = clipped.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = clipped.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let m: Vec<Vec<f64>> = clipped
        .iter()
        .map(|r| r.iter().map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 }).collect())
        .collect();

    let mut taken = vec![false; width];
    let mut dominant = Vec::with_capacity(m.len());
    for (i, row) in m.iter().enumerate() {
        let mut set: Vec<usize> = (0..width)
            .filter(|&j| m.iter().enumerate().all(|(k, other)| k == i || row[j] - other[j] > DOMINANCE_MARGIN))
            .collect();
        set.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        for &j in &set {
            taken[j] = true;
        }
        dominant.push(set);
    }
    let mut permutation: Vec<usize> = dominant.iter().flatten().copied().collect();
    permutation.extend((0..width).filter(|&j| !taken[j]));
    let matrix = m.iter().map(|row| permutation.iter().map(|&j| row[j]).collect()).collect();
    Ok(SortedGamma { matrix, permutation, dominant })
}
