//! Coordinate-format Matrix Market files for dense operator export; the
//! reader inverts the writer exactly (shortest round-trip float formatting).

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Storage layout of the written file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmLayout {
    General,
    /// Store the lower triangle only; the matrix must be symmetric.
    Symmetric,
}

/// Writes a dense matrix in coordinate format, skipping exact zeros.
pub fn write_matrix_market(m: &DMatrix<f64>, path: &Path, layout: MmLayout) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "matrix written to {} has non-finite entries",
            path.display()
        )));
    }
    if layout == MmLayout::Symmetric {
        let dev = (m - m.transpose()).norm();
        if dev > 0.0 {
            return Err(Error::InvalidParameter(format!(
                "symmetric layout requested but the matrix deviates by {dev:.3e}"
            )));
        }
    }
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if layout == MmLayout::Symmetric && j > i {
                continue;
            }
            let v = m[(i, j)];
            if v != 0.0 {
                entries.push((i + 1, j + 1, v));
            }
        }
    }
    entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let kind = match layout {
        MmLayout::General => "general",
        MmLayout::Symmetric => "symmetric",
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "%%MatrixMarket matrix coordinate real {kind}")?;
    writeln!(out, "{} {} {}", m.nrows(), m.ncols(), entries.len())?;
    for (i, j, v) in entries {
        writeln!(out, "{i} {j} {v}")?;
    }
    Ok(())
}

/// Reads a coordinate-format real matrix; symmetric files are rehydrated to
/// full storage.
pub fn read_matrix_market(path: &Path) -> Result<DMatrix<f64>> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines.next().ok_or(Error::MatrixMarket {
        line: 1,
        msg: "empty file".into(),
    })?;
    let header = header?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() < 5
        || tokens[0] != "%%MatrixMarket"
        || tokens[1] != "matrix"
        || tokens[2] != "coordinate"
        || tokens[3] != "real"
    {
        return Err(Error::MatrixMarket {
            line: 1,
            msg: format!("malformed header `{header}`"),
        });
    }
    let symmetric = match tokens[4] {
        "general" => false,
        "symmetric" => true,
        other => {
            return Err(Error::MatrixMarket {
                line: 1,
                msg: format!("unsupported symmetry `{other}`"),
            })
        }
    };

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut matrix: Option<DMatrix<f64>> = None;
    let mut seen = 0usize;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match dims {
            None => {
                if fields.len() != 3 {
                    return Err(Error::MatrixMarket {
                        line: line_no,
                        msg: "size line must have three fields".into(),
                    });
                }
                let parse = |s: &str| -> Result<usize> {
                    s.parse().map_err(|_| Error::MatrixMarket {
                        line: line_no,
                        msg: format!("cannot parse `{s}` as a dimension"),
                    })
                };
                let (r, c, nnz) = (parse(fields[0])?, parse(fields[1])?, parse(fields[2])?);
                dims = Some((r, c, nnz));
                matrix = Some(DMatrix::zeros(r, c));
            }
            Some((r, c, nnz)) => {
                if fields.len() != 3 {
                    return Err(Error::MatrixMarket {
                        line: line_no,
                        msg: "entry line must have three fields".into(),
                    });
                }
                let i: usize = fields[0].parse().map_err(|_| Error::MatrixMarket {
                    line: line_no,
                    msg: format!("bad row index `{}`", fields[0]),
                })?;
                let j: usize = fields[1].parse().map_err(|_| Error::MatrixMarket {
                    line: line_no,
                    msg: format!("bad column index `{}`", fields[1]),
                })?;
                let v: f64 = fields[2].parse().map_err(|_| Error::MatrixMarket {
                    line: line_no,
                    msg: format!("bad value `{}`", fields[2]),
                })?;
                if i < 1 || i > r || j < 1 || j > c {
                    return Err(Error::MatrixMarket {
                        line: line_no,
                        msg: format!("index ({i}, {j}) out of bounds for {r}x{c}"),
                    });
                }
                if symmetric && j > i {
                    return Err(Error::MatrixMarket {
                        line: line_no,
                        msg: "symmetric file stores the lower triangle only".into(),
                    });
                }
                seen += 1;
                if seen > nnz {
                    return Err(Error::MatrixMarket {
                        line: line_no,
                        msg: format!("more than the declared {nnz} entries"),
                    });
                }
                let m = matrix.as_mut().expect("allocated with dims");
                m[(i - 1, j - 1)] = v;
                if symmetric && i != j {
                    m[(j - 1, i - 1)] = v;
                }
            }
        }
    }
    let (_, _, nnz) = dims.ok_or(Error::MatrixMarket {
        line: 1,
        msg: "missing size line".into(),
    })?;
    if seen != nnz {
        return Err(Error::MatrixMarket {
            line: 0,
            msg: format!("declared {nnz} entries, found {seen}"),
        });
    }
    Ok(matrix.expect("allocated with dims"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("fsilq-mm-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn random_sparse_round_trip_is_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut m = DMatrix::<f64>::zeros(10, 10);
        for _ in 0..30 {
            let (i, j) = (rng.gen_range(0..10), rng.gen_range(0..10));
            m[(i, j)] = rng.gen::<f64>() * 1e3 - 500.0;
        }
        let path = tmp("roundtrip.mtx");
        write_matrix_market(&m, &path, MmLayout::General).unwrap();
        let back = read_matrix_market(&path).unwrap();
        assert_eq!(m.as_slice(), back.as_slice(), "bitwise round trip");
    }

    #[test]
    fn symmetric_layout_stores_lower_triangle_and_rehydrates() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let a = DMatrix::<f64>::from_fn(6, 6, |_, _| rng.gen::<f64>() - 0.5);
        let m = &a + a.transpose();
        let path = tmp("symmetric.mtx");
        write_matrix_market(&m, &path, MmLayout::Symmetric).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real symmetric"));
        for line in text.lines().skip(2) {
            let f: Vec<usize> = line
                .split_whitespace()
                .take(2)
                .map(|s| s.parse().unwrap())
                .collect();
            assert!(f[0] >= f[1], "upper-triangle entry leaked: {line}");
        }
        let back = read_matrix_market(&path).unwrap();
        assert_eq!(m.as_slice(), back.as_slice());
    }

    #[test]
    fn empty_matrix_round_trips() {
        let m = DMatrix::<f64>::zeros(0, 0);
        let path = tmp("empty.mtx");
        write_matrix_market(&m, &path, MmLayout::General).unwrap();
        let back = read_matrix_market(&path).unwrap();
        assert_eq!(back.nrows(), 0);
        assert_eq!(back.ncols(), 0);
    }

    #[test]
    fn malformed_header_is_rejected() {
        let path = tmp("bad_header.mtx");
        std::fs::write(&path, "%%NotMatrixMarket\n1 1 0\n").unwrap();
        assert!(matches!(
            read_matrix_market(&path).unwrap_err(),
            Error::MatrixMarket { line: 1, .. }
        ));
    }

    #[test]
    fn out_of_bounds_index_is_rejected() {
        let path = tmp("oob.mtx");
        std::fs::write(
            &path,
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n",
        )
        .unwrap();
        let err = read_matrix_market(&path).unwrap_err();
        assert!(matches!(err, Error::MatrixMarket { .. }));
        assert!(err.to_string().contains("out of bounds"));
    }

    #[test]
    fn rejects_non_finite_entries() {
        let mut m = DMatrix::<f64>::zeros(2, 2);
        m[(0, 0)] = f64::NAN;
        let path = tmp("nan.mtx");
        assert!(write_matrix_market(&m, &path, MmLayout::General).is_err());
    }
}
