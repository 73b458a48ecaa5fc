use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::mse::{MseReport, MseRow, SlopeFit};
use crate::error::{Error, Result};

pub const REPORT_HEADER: [&str; 6] = ["filter", "epsilon", "mse", "stderr", "n_trials", "excluded"];

/// `report.csv` → `report.meta.toml`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.toml")
}

#[derive(Serialize, Deserialize)]
struct Meta {
    slopes: Vec<SlopeEntry>,
    config: ExperimentConfig,
}

#[derive(Serialize, Deserialize)]
struct SlopeEntry {
    filter: String,
    #[serde(flatten)]
    fit: SlopeFit,
}

/// Floats use the shortest representation that reads back exactly.
pub fn write_report_csv<W: Write>(report: &MseReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in &report.rows {
        w.write_record(&[
            r.filter.clone(),
            format!("{}", r.epsilon),
            format!("{}", r.mse),
            format!("{}", r.stderr),
            r.n_trials.to_string(),
            r.excluded.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report_csv<R: Read>(input: R) -> Result<Vec<MseRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != REPORT_HEADER {
        return Err(Error::Parse(format!("unexpected report header {header:?}")));
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let bad = |field: &str| Error::Parse(format!("report row {}: bad {field}", i + 2));
            Ok(MseRow {
                filter: rec[0].to_string(),
                epsilon: rec[1].parse().map_err(|_| bad("epsilon"))?,
                mse: rec[2].parse().map_err(|_| bad("mse"))?,
                stderr: rec[3].parse().map_err(|_| bad("stderr"))?,
                n_trials: rec[4].parse().map_err(|_| bad("n_trials"))?,
                excluded: rec[5].parse().map_err(|_| bad("excluded"))?,
            })
        })
        .collect()
}

pub fn meta_toml(report: &MseReport) -> String {
    let meta = Meta {
        slopes: report.slopes.iter().map(|(f, fit)| SlopeEntry { filter: f.clone(), fit: *fit }).collect(),
        config: report.config.clone(),
    };
    toml::to_string(&meta).expect("report metadata is serializable")
}

/// Writes the CSV to `path` and the slopes plus config echo (which carries
/// the seed) to the `.meta.toml` sidecar.
pub fn write_report(report: &MseReport, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_report_csv(report, &mut out)?;
    out.flush()?;
    std::fs::write(sidecar_path(path), meta_toml(report))?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<MseReport> {
    let rows = read_report_csv(File::open(path)?)?;
    let text = std::fs::read_to_string(sidecar_path(path))?;
    let meta: Meta = toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(MseReport { rows, slopes: meta.slopes.into_iter().map(|s| (s.filter, s.fit)).collect(), config: meta.config })
}
