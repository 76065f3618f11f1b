//! Seeded, resumable replication runner.
//!
//! Replication units are dealt to a worker pool through an atomic
//! counter; each unit writes its rows to a per-unit part file (tmp +
//! rename, so interrupted writes never count as complete). The final CSV
//! is the header plus all part files concatenated in unit order, which
//! makes the output independent of worker count and of which units a
//! resumed run skipped.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use crate::HarnessError;

/// An experiment expressed as independent, deterministic units.
pub trait Experiment: Sync {
    /// File-stem of the produced CSV (`<name>.csv`).
    fn name(&self) -> &'static str;
    fn header(&self) -> String;
    fn unit_count(&self) -> u64;
    /// CSV rows (no header, no trailing newline per row) for one unit.
    fn run_unit(&self, unit: u64) -> Result<Vec<String>, HarnessError>;
    /// Builds summary artifacts from the merged rows.
    fn finalize(&self, rows: &[String], out_dir: &Path) -> Result<(), HarnessError>;
}

pub struct RunOptions {
    pub workers: usize,
    pub resume: bool,
}

fn part_path(parts_dir: &Path, unit: u64) -> PathBuf {
    parts_dir.join(format!("unit_{unit:06}.csv"))
}

/// Runs all units, merges the parts into `<out_dir>/<name>.csv` and calls
/// `finalize`. Returns the CSV path.
pub fn run_experiment(
    exp: &dyn Experiment,
    out_dir: &Path,
    options: &RunOptions,
) -> Result<PathBuf, HarnessError> {
    let parts_dir = out_dir.join("parts").join(exp.name());
    std::fs::create_dir_all(&parts_dir)?;

    let total = exp.unit_count();
    let next = AtomicU64::new(0);
    let failure: Mutex<Option<HarnessError>> = Mutex::new(None);
    let done = AtomicU64::new(0);

    std::thread::scope(|scope| {
        for _ in 0..options.workers.max(1) {
            scope.spawn(|| loop {
                if failure.lock().unwrap().is_some() {
                    return;
                }
                let unit = next.fetch_add(1, Ordering::Relaxed);
                if unit >= total {
                    return;
                }
                let path = part_path(&parts_dir, unit);
                if options.resume && path.exists() {
                    done.fetch_add(1, Ordering::Relaxed);
                    continue;
                }
                match exp.run_unit(unit) {
                    Ok(rows) => {
                        let tmp = path.with_extension("csv.tmp");
                        let body = if rows.is_empty() {
                            String::new()
                        } else {
                            format!("{}\n", rows.join("\n"))
                        };
                        if let Err(e) =
                            std::fs::write(&tmp, body).and_then(|_| std::fs::rename(&tmp, &path))
                        {
                            *failure.lock().unwrap() = Some(HarnessError::Io(e));
                            return;
                        }
                        let finished = done.fetch_add(1, Ordering::Relaxed) + 1;
                        if finished % 50 == 0 || finished == total {
                            eprintln!("[{}] {finished}/{total} units", exp.name());
                        }
                    }
                    Err(e) => {
                        *failure.lock().unwrap() = Some(e);
                        return;
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }

    // merge in unit order
    let mut merged = String::new();
    merged.push_str(&exp.header());
    merged.push('\n');
    let mut rows = Vec::new();
    for unit in 0..total {
        let text = std::fs::read_to_string(part_path(&parts_dir, unit))?;
        for line in text.lines() {
            rows.push(line.to_string());
            merged.push_str(line);
            merged.push('\n');
        }
    }
    let csv_path = out_dir.join(format!("{}.csv", exp.name()));
    std::fs::write(&csv_path, merged)?;
    exp.finalize(&rows, out_dir)?;
    Ok(csv_path)
}

/// Serializes a summary struct as pretty JSON next to the CSV.
pub fn write_summary<T: serde::Serialize>(
    out_dir: &Path,
    name: &str,
    summary: &T,
) -> Result<(), HarnessError> {
    let path = out_dir.join(format!("{name}_summary.json"));
    let json = serde_json::to_string_pretty(summary)
        .map_err(|e| HarnessError::Numerical(format!("summary serialization: {e}")))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}
