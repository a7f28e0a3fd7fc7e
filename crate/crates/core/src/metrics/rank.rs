use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherIsBetter,
    LowerIsBetter,
}

/// Fractional ranks of one metric column: rank 1 is best, tied values share
/// the mean of the ranks they span.
pub fn rank_column(values: &[f64], dir: Direction) -> Result<Vec<f64>> {
    ensure!(
        values.iter().all(|v| v.is_finite()),
        InvalidArgument,
        "metric column has a missing or non-finite cell"
    );
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (values[a], values[b]);
        match dir {
            Direction::HigherIsBetter => y.total_cmp(&x),
            Direction::LowerIsBetter => x.total_cmp(&y),
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    Ok(ranks)
}

/// `table[method][metric]`; returns each method's mean rank over metrics.
pub fn average_rank(table: &[Vec<f64>], dirs: &[Direction]) -> Result<Vec<f64>> {
    ensure!(!table.is_empty(), InvalidArgument, "rank table is empty");
    ensure!(
        table.iter().all(|row| row.len() == dirs.len()),
        Shape,
        "every method needs exactly {} metric values",
        dirs.len()
    );
    let mut avg = vec![0.0; table.len()];
    for (m, &dir) in dirs.iter().enumerate() {
        let col: Vec<f64> = table.iter().map(|row| row[m]).collect();
        for (a, r) in avg.iter_mut().zip(rank_column(&col, dir)?) {
            *a += r / dirs.len() as f64;
        }
    }
    Ok(avg)
}
