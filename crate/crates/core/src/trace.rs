//! Trace and curve files, written atomically.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::learn::TraceRecord;

/// Writes `bytes` to a temporary sibling, syncs it and renames it over `path`,
/// so readers see either the old file or the complete new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| Error::Io(e.error.to_string()))?;
    if let Ok(d) = std::fs::File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}

/// Like [`write_atomic`] for several files: nothing is renamed into place
/// until every temporary file has been written and synced.
pub fn write_all_atomic(files: &[(std::path::PathBuf, Vec<u8>)]) -> Result<()> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, bytes) in files {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        staged.push((tmp, path));
    }
    for (tmp, path) in staged {
        tmp.persist(path)
            .map_err(|e| Error::Io(e.error.to_string()))?;
    }
    Ok(())
}

pub const TRACE_COLUMNS: [&str; 9] = [
    "iteration",
    "mode",
    "query",
    "situation",
    "attributes",
    "outcome",
    "model_error",
    "kl_to_truth",
    "promoted_vars",
];

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn trace_csv(records: &[TraceRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_COLUMNS).map_err(csv_error)?;
    for r in records {
        w.write_record([
            r.iteration.to_string(),
            r.mode.to_string(),
            r.query.to_string(),
            r.situation.to_string(),
            r.attributes.to_string(),
            r.outcome.to_string(),
            r.model_error.to_string(),
            r.kl_to_truth.map(|k| k.to_string()).unwrap_or_default(),
            r.promoted_vars.join(";"),
        ])
        .map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub fn trace_jsonl(records: &[TraceRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// Per-iteration mean and population standard deviation of a set of series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub kl_mean: f64,
    pub kl_sd: f64,
    pub model_error_mean: f64,
    pub model_error_sd: f64,
}

fn mean_sd(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Summarizes equal-length series, one per seed.
pub fn curve(kl: &[Vec<f64>], model_error: &[Vec<f64>]) -> Result<Vec<CurvePoint>> {
    let len = kl.first().map(Vec::len).unwrap_or(0);
    if kl.is_empty()
        || kl.len() != model_error.len()
        || kl.iter().chain(model_error).any(|s| s.len() != len)
    {
        return Err(Error::InvalidConfig(
            "curves need equal, non-empty series".into(),
        ));
    }
    Ok((0..len)
        .map(|i| {
            let (kl_mean, kl_sd) = mean_sd(kl.iter().map(|s| s[i]));
            let (model_error_mean, model_error_sd) = mean_sd(model_error.iter().map(|s| s[i]));
            CurvePoint {
                iteration: i,
                kl_mean,
                kl_sd,
                model_error_mean,
                model_error_sd,
            }
        })
        .collect())
}

pub fn curve_csv(points: &[CurvePoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(p).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bn::Instantiation;
    use crate::learn::Mode;

    fn record(kl: Option<f64>) -> TraceRecord {
        TraceRecord {
            iteration: 1,
            mode: Mode::Active,
            query: Instantiation::from_pairs([("Position", "Middle"), ("KDc", "Left")]),
            situation: Instantiation::from_pairs([("Position", "Middle"), ("KDc", "Left")]),
            attributes: Instantiation::from_pairs([("BallSize", "Small")]),
            outcome: Instantiation::from_pairs([("KDo", "Left")]),
            model_error: 0.25,
            kl_to_truth: kl,
            promoted_vars: vec!["BallSize".into()],
        }
    }

    #[test]
    fn csv_layout() {
        let text = trace_csv(&[record(None), record(Some(0.5))]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRACE_COLUMNS.join(","));
        assert_eq!(
            lines[1],
            "1,active,Position=Middle;KDc=Left,Position=Middle;KDc=Left,BallSize=Small,KDo=Left,0.25,,BallSize"
        );
        assert!(lines[2].contains(",0.5,"));
        assert_eq!(trace_csv(&[]).unwrap().lines().count(), 1);
    }

    #[test]
    fn jsonl_round_trips() {
        let text = trace_jsonl(&[record(Some(0.1))]).unwrap();
        let back: TraceRecord = serde_json::from_str(text.trim_end()).unwrap();
        assert_eq!(back, record(Some(0.1)));
    }

    #[test]
    fn single_series_has_zero_sd() {
        let c = curve(&[vec![1.0, 2.0]], &[vec![0.3, 0.2]]).unwrap();
        assert!(c.iter().all(|p| p.kl_sd == 0.0 && p.model_error_sd == 0.0));
        let c = curve(&[vec![1.0], vec![3.0]], &[vec![0.0], vec![0.0]]).unwrap();
        assert_eq!((c[0].kl_mean, c[0].kl_sd), (2.0, 1.0));
        assert!(curve(&[vec![1.0], vec![]], &[vec![0.0], vec![]]).is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
