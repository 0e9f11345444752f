use std::path::{Path, PathBuf};

use super::sweep::{ResultRow, SweepResult};
use crate::error::Result;

/// Column order of the result CSV.
pub const CSV_HEADER: &str = "receiver,axis,user,metric,value,bound,trials,seed";

pub fn to_csv(result: &SweepResult) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &result.rows {
        w.serialize(row)?;
    }
    if result.rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Path of the JSON mirror written next to a CSV.
pub fn json_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes the CSV to `path` and the same rows as JSON to [`json_path`].
pub fn write_results(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_csv(result)?)?;
    let json = serde_json::to_vec_pretty(&result.rows)?;
    std::fs::write(json_path(path), json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(bound: Option<f64>) -> ResultRow {
        ResultRow {
            receiver: "mcmc_sage".into(),
            axis: 0.1,
            user: 3,
            metric: "var_a".into(),
            value: 0.02,
            bound,
            trials: 100,
            seed: 1,
        }
    }

    #[test]
    fn header_and_empty_bound() {
        let res = SweepResult {
            rows: vec![row(Some(0.0125)), row(None)],
            convergence: vec![],
        };
        let text = String::from_utf8(to_csv(&res).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "mcmc_sage,0.1,3,var_a,0.02,0.0125,100,1");
        assert_eq!(lines[2], "mcmc_sage,0.1,3,var_a,0.02,,100,1");
    }

    #[test]
    fn write_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let res = SweepResult {
            rows: vec![row(Some(0.5)), row(None)],
            convergence: vec![],
        };
        write_results(&res, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), res.rows);
        let json: Vec<ResultRow> = serde_json::from_slice(&std::fs::read(json_path(&path)).unwrap()).unwrap();
        assert_eq!(json, res.rows);
    }

    #[test]
    fn empty_result_still_has_header() {
        let text = String::from_utf8(to_csv(&SweepResult::default()).unwrap()).unwrap();
        assert_eq!(text.trim_end(), CSV_HEADER);
    }
}
