//! Small CSV writers for time series and tables; floats are written in the
//! shortest round-trip form.

use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::state_space::{ControlSignal, Trajectory};

pub fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                write!(out, ",")?;
            }
            write!(out, "{v}")?;
            first = false;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// One row per time node: t followed by the state coordinates.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let n = traj.states.first().map(|s| s.len()).unwrap_or(0);
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("y{i}")));
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    write_csv(
        path,
        &header_refs,
        traj.times.iter().zip(traj.states.iter()).map(|(&t, y)| {
            let mut row = Vec::with_capacity(n + 1);
            row.push(t);
            row.extend(y.iter().copied());
            row
        }),
    )
}

/// One row per control interval: left node time followed by the values.
pub fn write_control(path: &Path, g: &ControlSignal) -> Result<()> {
    let m = g.values.first().map(|v| v.len()).unwrap_or(0);
    let mut header = vec!["t".to_string()];
    header.extend((0..m).map(|i| format!("g{i}")));
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    write_csv(
        path,
        &header_refs,
        g.values.iter().enumerate().map(|(k, v)| {
            let mut row = Vec::with_capacity(m + 1);
            row.push(g.times[k]);
            row.extend(v.iter().copied());
            row
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_floats_round_trip() {
        let dir = std::env::temp_dir().join("fsilq-csv-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("series.csv");
        let value = 0.1 + 0.2;
        write_csv(&path, &["t", "v"], vec![vec![0.0, value]]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let field = text.lines().nth(1).unwrap().split(',').nth(1).unwrap();
        assert_eq!(field.parse::<f64>().unwrap(), value);
    }
}
