//! Clustering accuracy, normalised mutual information and purity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth classes paired with predicted clusters.
#[derive(Debug, Clone, Copy)]
pub struct LabelPair<'a> {
    y_true: &'a [usize],
    y_pred: &'a [usize],
}

impl<'a> LabelPair<'a> {
    pub fn new(y_true: &'a [usize], y_pred: &'a [usize]) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(Error::Validation(format!(
                "label length mismatch: {} true labels, {} predicted",
                y_true.len(),
                y_pred.len()
            )));
        }
        if y_true.is_empty() {
            return Err(Error::Validation("no samples to evaluate".into()));
        }
        Ok(Self { y_true, y_pred })
    }

    pub fn len(&self) -> usize {
        self.y_true.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_true.is_empty()
    }

    /// Contingency table over the distinct ids actually present, rows are
    /// classes and columns clusters.
    pub fn contingency(&self) -> Vec<Vec<u64>> {
        let classes = compact(self.y_true);
        let clusters = compact(self.y_pred);
        let rows = classes.iter().max().map_or(0, |m| m + 1);
        let cols = clusters.iter().max().map_or(0, |m| m + 1);
        let mut table = vec![vec![0u64; cols]; rows];
        for (&a, &b) in classes.iter().zip(&clusters) {
            table[a][b] += 1;
        }
        table
    }
}

fn compact(ids: &[usize]) -> Vec<usize> {
    let mut sorted: Vec<usize> = ids.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    ids.iter()
        .map(|id| sorted.binary_search(id).expect("present"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub acc: f64,
    pub nmi: f64,
    pub pur: f64,
}

pub fn evaluate(y_true: &[usize], y_pred: &[usize]) -> Result<Scores> {
    let pair = LabelPair::new(y_true, y_pred)?;
    let table = pair.contingency();
    Ok(Scores {
        acc: accuracy_from_table(&table, pair.len()),
        nmi: nmi_from_pair(&pair, &table),
        pur: purity_from_table(&table, pair.len()),
    })
}

/// Fraction of samples matched under the best one-to-one mapping of
/// clusters onto classes.
pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let pair = LabelPair::new(y_true, y_pred)?;
    Ok(accuracy_from_table(&pair.contingency(), pair.len()))
}

fn accuracy_from_table(table: &[Vec<u64>], n: usize) -> f64 {
    let rows = table.len();
    let cols = table.first().map_or(0, Vec::len);
    let size = rows.max(cols);
    let top = table.iter().flatten().copied().max().unwrap_or(0) as i64;
    // maximise matches == minimise (top - matches) on the padded square
    let mut cost = vec![vec![top; size]; size];
    for (i, row) in table.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            cost[i][j] = top - v as i64;
        }
    }
    let assignment = hungarian(&cost);
    let matched: u64 = assignment
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < rows && j < cols)
        .map(|(i, &j)| table[i][j])
        .sum();
    matched as f64 / n as f64
}

/// Minimum-cost perfect matching on a square integer matrix. Returns the
/// column assigned to each row.
pub fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // potentials formulation, 1-based with a virtual column 0
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

fn entropy(counts: impl Iterator<Item = u64>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalised by the geometric mean of the two
/// entropies. When either entropy vanishes the score is 1 for identical
/// partitions and 0 otherwise.
pub fn nmi(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let pair = LabelPair::new(y_true, y_pred)?;
    let table = pair.contingency();
    Ok(nmi_from_pair(&pair, &table))
}

fn nmi_from_pair(pair: &LabelPair<'_>, table: &[Vec<u64>]) -> f64 {
    let n = pair.len() as f64;
    let cols = table.first().map_or(0, Vec::len);
    let row_sums: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..cols)
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    let h_true = entropy(row_sums.iter().copied(), n);
    let h_pred = entropy(col_sums.iter().copied(), n);
    if h_true <= 0.0 || h_pred <= 0.0 {
        return if same_partition(table) { 1.0 } else { 0.0 };
    }
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (row_sums[i] as f64 * col_sums[j] as f64)).ln();
            }
        }
    }
    (mi / (h_true * h_pred).sqrt()).clamp(0.0, 1.0)
}

// each class meets exactly one cluster and vice versa
fn same_partition(table: &[Vec<u64>]) -> bool {
    let cols = table.first().map_or(0, Vec::len);
    table.len() == cols
        && table
            .iter()
            .all(|r| r.iter().filter(|&&v| v > 0).count() == 1)
        && (0..cols).all(|j| table.iter().filter(|r| r[j] > 0).count() == 1)
}

/// Share of samples belonging to the majority class of their cluster.
pub fn purity(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let pair = LabelPair::new(y_true, y_pred)?;
    Ok(purity_from_table(&pair.contingency(), pair.len()))
}

fn purity_from_table(table: &[Vec<u64>], n: usize) -> f64 {
    let cols = table.first().map_or(0, Vec::len);
    let hit: u64 = (0..cols)
        .map(|j| table.iter().map(|r| r[j]).max().unwrap_or(0))
        .sum();
    hit as f64 / n as f64
}
