//! Text checkpoint format for named parameter tensors.
//!
//! Layout: a version line, optional `meta,<key>,<value>` lines, then for each
//! tensor a `tensor,<name>,<rows>,<cols>,f64` header followed by `rows` lines
//! of comma-separated values. Values use Rust's shortest round-trip float
//! formatting, so save/load is lossless.

use super::matrix::Matrix;
use super::NumericsError;

const VERSION_LINE: &str = "# asbench checkpoint v1";

/// Named tensors plus free-form metadata (e.g. encoder kind and dims).
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Matrix)>,
}

pub fn write_checkpoint(checkpoint: &Checkpoint) -> String {
    let mut out = String::from(VERSION_LINE);
    out.push('\n');
    for (key, value) in &checkpoint.meta {
        out.push_str(&format!("meta,{key},{value}\n"));
    }
    for (name, tensor) in &checkpoint.tensors {
        out.push_str(&format!(
            "tensor,{name},{},{},f64\n",
            tensor.rows(),
            tensor.cols()
        ));
        for r in 0..tensor.rows() {
            let line: Vec<String> = tensor.row(r).iter().map(|v| format!("{v}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
    }
    out
}

pub fn read_checkpoint(text: &str) -> Result<Checkpoint, NumericsError> {
    let mut lines = text.lines().enumerate();
    let mut checkpoint = Checkpoint::default();
    match lines.next() {
        Some((_, line)) if line == VERSION_LINE => {}
        Some((n, line)) => {
            return Err(NumericsError::Checkpoint {
                line: n + 1,
                message: format!("unexpected header {line:?}"),
            })
        }
        None => {
            return Err(NumericsError::Checkpoint {
                line: 1,
                message: "empty checkpoint".into(),
            })
        }
    }
    while let Some((n, line)) = lines.next() {
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("meta,") {
            let (key, value) = rest.split_once(',').ok_or(NumericsError::Checkpoint {
                line: n + 1,
                message: "meta line needs key and value".into(),
            })?;
            checkpoint.meta.push((key.to_string(), value.to_string()));
        } else if let Some(rest) = line.strip_prefix("tensor,") {
            let parts: Vec<&str> = rest.split(',').collect();
            let bad = |message: String| NumericsError::Checkpoint {
                line: n + 1,
                message,
            };
            if parts.len() != 4 || parts[3] != "f64" {
                return Err(bad(format!("malformed tensor header {line:?}")));
            }
            let rows: usize = parts[1].parse().map_err(|_| bad("bad row count".into()))?;
            let cols: usize = parts[2].parse().map_err(|_| bad("bad col count".into()))?;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (rn, row_line) = lines.next().ok_or_else(|| NumericsError::Checkpoint {
                    line: n + 1,
                    message: "truncated tensor body".into(),
                })?;
                for field in row_line.split(',') {
                    data.push(field.parse::<f64>().map_err(|_| NumericsError::Checkpoint {
                        line: rn + 1,
                        message: format!("bad float {field:?}"),
                    })?);
                }
            }
            if data.len() != rows * cols {
                return Err(bad(format!(
                    "tensor body holds {} values, expected {}",
                    data.len(),
                    rows * cols
                )));
            }
            checkpoint
                .tensors
                .push((parts[0].to_string(), Matrix::from_vec(rows, cols, data)));
        } else {
            return Err(NumericsError::Checkpoint {
                line: n + 1,
                message: format!("unrecognized line {line:?}"),
            });
        }
    }
    Ok(checkpoint)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let checkpoint = Checkpoint {
            meta: vec![
                ("encoder".into(), "gcn".into()),
                ("hidden_dim".into(), "32".into()),
            ],
            tensors: vec![
                (
                    "layer1.weight".into(),
                    Matrix::from_rows(&[vec![0.1, -2.5e-17], vec![f64::MIN_POSITIVE, 3.0]]),
                ),
                ("head.bias".into(), Matrix::from_vec(1, 3, vec![0.0, -0.0, 1.25])),
            ],
        };
        let text = write_checkpoint(&checkpoint);
        let back = read_checkpoint(&text).unwrap();
        assert_eq!(back.meta, checkpoint.meta);
        assert_eq!(back.tensors.len(), 2);
        for ((name, a), (bname, b)) in checkpoint.tensors.iter().zip(&back.tensors) {
            assert_eq!(name, bname);
            assert_eq!(a.shape(), b.shape());
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_checkpoint("").is_err());
        assert!(read_checkpoint("# asbench checkpoint v1\nbogus line").is_err());
        assert!(read_checkpoint("# asbench checkpoint v1\ntensor,w,2,2,f64\n1,2\n").is_err());
    }
}
