use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::experiments::report::ExperimentReport;
use crate::experiments::run::RunOutput;

/// Files written by [`write_outputs`].
#[derive(Clone, Debug, PartialEq)]
pub struct WrittenFiles {
    pub report: PathBuf,
    pub series: PathBuf,
    pub trajectories: PathBuf,
    pub snapshots: Option<PathBuf>,
}

/// Writes `report.json`, `series.csv`, `trajectories.csv` and, when
/// requested, `snapshots.csv` into `dir`.
pub fn write_outputs(run: &RunOutput, dir: &Path, export_snapshots: bool) -> Result<WrittenFiles> {
    fs::create_dir_all(dir)?;
    let report = dir.join("report.json");
    let mut out = BufWriter::new(File::create(&report)?);
    serde_json::to_writer_pretty(&mut out, &run.report).map_err(std::io::Error::from)?;
    writeln!(out)?;
    out.flush()?;

    let series = dir.join("series.csv");
    write_series(&run.report, BufWriter::new(File::create(&series)?))?;

    let trajectories = dir.join("trajectories.csv");
    let mut out = BufWriter::new(File::create(&trajectories)?);
    run.ensemble.write_csv(&mut out)?;
    out.flush()?;

    let snapshots = if export_snapshots {
        let path = dir.join("snapshots.csv");
        let mut out = BufWriter::new(File::create(&path)?);
        run.simulation.store.write_csv(&mut out)?;
        out.flush()?;
        Some(path)
    } else {
        None
    };
    Ok(WrittenFiles { report, series, trajectories, snapshots })
}

/// One row per snapshot: `t` followed by one probability column per domain
/// (`P_<label>`) or per diffraction order (`P_n<order>`).
pub fn write_series(report: &ExperimentReport, mut out: impl Write) -> Result<()> {
    let mut header = vec!["t".to_string()];
    let mut columns: Vec<&[f64]> = Vec::new();
    for d in &report.domains {
        header.push(format!("P_{}", d.label));
        columns.push(&d.values);
    }
    if let Some(g) = &report.grating {
        for s in &g.fraunhofer_series {
            header.push(format!("P_n{}", s.order));
            columns.push(&s.values);
        }
    }
    writeln!(out, "{}", header.join(","))?;
    for (k, t) in report.times.iter().enumerate() {
        write!(out, "{t}")?;
        for c in &columns {
            write!(out, ",{:e}", c[k])?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
