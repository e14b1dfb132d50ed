//! Clustering accuracy under optimal label matching, and normalized mutual
//! information.

use crate::error::{Error, Result};

/// Co-occurrence counts: `counts[t][p]` samples have true label `t` and
/// predicted label `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<usize>>,
    pub total: usize,
}

impl ContingencyTable {
    pub fn new(truth: &[usize], pred: &[usize]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::InvalidInput(format!(
                "label lengths differ: {} vs {}",
                truth.len(),
                pred.len()
            )));
        }
        if truth.is_empty() {
            return Err(Error::InvalidInput("empty label vectors".into()));
        }
        let rows = truth.iter().max().map_or(0, |m| m + 1);
        let cols = pred.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![vec![0; cols]; rows];
        for (&t, &p) in truth.iter().zip(pred) {
            counts[t][p] += 1;
        }
        Ok(Self {
            counts,
            total: truth.len(),
        })
    }

    fn row_totals(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_totals(&self) -> Vec<usize> {
        let cols = self.counts.first().map_or(0, Vec::len);
        (0..cols)
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }
}

/// Minimum-cost perfect assignment on a square cost matrix (Kuhn–Munkres with
/// potentials). Returns `assignment[row] = column`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-indexed potentials and matching, column 0 is a sentinel
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0;
        let mut min_v = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < min_v[j] {
                        min_v[j] = cur;
                        way[j] = j0;
                    }
                    if min_v[j] < delta {
                        delta = min_v[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if matched_row[j] > 0 {
            assignment[matched_row[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Fraction of samples correctly labeled under the best one-to-one mapping of
/// predicted to true labels. The table is padded square with zeros when the
/// label counts differ.
pub fn accuracy(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(truth, pred)?;
    let size = table
        .counts
        .len()
        .max(table.counts.first().map_or(0, Vec::len));
    let count_at = |t: usize, p: usize| -> usize {
        table.counts.get(t).and_then(|r| r.get(p)).copied().unwrap_or(0)
    };
    let cost: Vec<Vec<f64>> = (0..size)
        .map(|p| (0..size).map(|t| -(count_at(t, p) as f64)).collect())
        .collect();
    let assignment = hungarian(&cost);
    let matched: usize = assignment
        .iter()
        .enumerate()
        .map(|(p, &t)| count_at(t, p))
        .sum();
    Ok(matched as f64 / table.total as f64)
}

fn entropy(totals: &[usize], n: f64) -> f64 {
    totals
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `I(T; P) / sqrt(H(T) · H(P))` in nats. Two single-cluster partitions score
/// 1; otherwise a zero entropy scores 0.
pub fn nmi(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(truth, pred)?;
    let n = table.total as f64;
    let rows = table.row_totals();
    let cols = table.col_totals();
    let h_truth = entropy(&rows, n);
    let h_pred = entropy(&cols, n);
    if h_truth == 0.0 || h_pred == 0.0 {
        return Ok(if h_truth == 0.0 && h_pred == 0.0 { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for (t, row) in table.counts.iter().enumerate() {
        for (p, &c) in row.iter().enumerate() {
            if c > 0 {
                let joint = c as f64 / n;
                mi += joint * (c as f64 * n / (rows[t] as f64 * cols[p] as f64)).ln();
            }
        }
    }
    Ok((mi / (h_truth * h_pred).sqrt()).max(0.0))
}
