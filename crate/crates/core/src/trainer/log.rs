use std::io::Write;

use serde::{Deserialize, Serialize};

/// Summary of one completed epoch. Losses are averaged over the epoch's
/// batches, weighted by batch size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_head: f64,
    pub loss_gnn: f64,
    /// Unweighted sum over layers.
    pub loss_purifier: f64,
    /// Thresholds after this epoch's update, `[layer][relation]`.
    pub p: Vec<Vec<f64>>,
    /// Average fraud-neighbor distance measured at the end of the epoch.
    pub dbar: Vec<Vec<f64>>,
    pub seconds: f64,
}

fn cell_names<'a>(prefix: &'a str, cells: &'a [Vec<f64>]) -> impl Iterator<Item = String> + 'a {
    cells.iter().enumerate().flat_map(move |(l, row)| {
        (0..row.len()).map(move |r| format!("{prefix}_{}_{}", l + 1, r + 1))
    })
}

/// Column names for logs shaped like `sample`.
pub fn epoch_csv_header(sample: &EpochLog) -> String {
    let mut cols: Vec<String> = ["epoch", "loss_total", "loss_head", "loss_gnn", "loss_purifier"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(cell_names("p", &sample.p));
    cols.extend(cell_names("dbar", &sample.dbar));
    cols.push("seconds".into());
    cols.join(",")
}

pub fn epoch_csv_row(log: &EpochLog) -> String {
    let mut cols = vec![
        log.epoch.to_string(),
        log.loss_total.to_string(),
        log.loss_head.to_string(),
        log.loss_gnn.to_string(),
        log.loss_purifier.to_string(),
    ];
    cols.extend(log.p.iter().flatten().map(f64::to_string));
    cols.extend(log.dbar.iter().flatten().map(f64::to_string));
    cols.push(log.seconds.to_string());
    cols.join(",")
}

/// Header plus one row per log. Writes nothing for an empty slice.
pub fn write_epoch_csv<W: Write>(mut out: W, logs: &[EpochLog]) -> std::io::Result<()> {
    if let Some(first) = logs.first() {
        writeln!(out, "{}", epoch_csv_header(first))?;
    }
    for log in logs {
        writeln!(out, "{}", epoch_csv_row(log))?;
    }
    Ok(())
}
