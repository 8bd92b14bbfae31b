//! Plain-text file formats.
//!
//! Dataset: header `N d_in num_known num_total`, then one line per sample
//! `label split_flag is_known f_1 ... f_{d_in}` with `split_flag` in `{L, U}`
//! and `is_known` in `{0, 1}`.
//!
//! Matrix: header `rows cols`, then one whitespace-separated row per line.
//! A model file is the encoder matrix followed by the prototype matrix.
//!
//! Trace: CSV with header `step,loss_sup,loss_unsup,gdc,soc,rho_grad,rho_in`.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back yields bit-identical values.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::simulator::{DatasetSplit, Model, StepRecord};

pub const TRACE_HEADER: &str = "step,loss_sup,loss_unsup,gdc,soc,rho_grad,rho_in";

pub fn format_f64(x: f64) -> String {
    let a = x.abs();
    if x != 0.0 && x.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| Error::Parse { line, message: format!("expected a number, found '{tok}'") })
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| Error::Parse { line, message: format!("expected a non-negative integer, found '{tok}'") })
}

/// Non-empty lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty())
}

fn write_matrix_into(out: &mut String, m: &Matrix) {
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|&x| format_f64(x)).collect();
        let _ = writeln!(out, "{}", cells.join(" "));
    }
}

pub fn matrix_to_string(m: &Matrix) -> String {
    let mut out = String::new();
    write_matrix_into(&mut out, m);
    out
}

fn read_matrix_from<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>) -> Result<Matrix> {
    let (hl, header) = lines.next().ok_or(Error::Parse { line: 0, message: "missing matrix header".into() })?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::Parse { line: hl, message: "matrix header must be 'rows cols'".into() });
    }
    let rows = parse_usize(dims[0], hl)?;
    let cols = parse_usize(dims[1], hl)?;
    let mut m = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let (ln, line) = lines
            .next()
            .ok_or(Error::Parse { line: hl, message: format!("matrix declares {rows} rows, found {r}") })?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != cols {
            return Err(Error::Parse { line: ln, message: format!("expected {cols} values, found {}", toks.len()) });
        }
        for (c, tok) in toks.iter().enumerate() {
            let v = parse_f64(tok, ln)?;
            if !v.is_finite() {
                return Err(Error::Parse { line: ln, message: "matrix entries must be finite".into() });
            }
            m[(r, c)] = v;
        }
    }
    Ok(m)
}

pub fn matrix_from_str(text: &str) -> Result<Matrix> {
    let mut lines = content_lines(text);
    let m = read_matrix_from(&mut lines)?;
    if let Some((ln, _)) = lines.next() {
        return Err(Error::Parse { line: ln, message: "trailing content after matrix".into() });
    }
    Ok(m)
}

pub fn model_to_string(model: &Model) -> String {
    let mut out = String::new();
    write_matrix_into(&mut out, &model.encoder);
    write_matrix_into(&mut out, &model.prototypes);
    out
}

pub fn model_from_str(text: &str) -> Result<Model> {
    let mut lines = content_lines(text);
    let encoder = read_matrix_from(&mut lines)?;
    let prototypes = read_matrix_from(&mut lines)?;
    if let Some((ln, _)) = lines.next() {
        return Err(Error::Parse { line: ln, message: "trailing content after model".into() });
    }
    if prototypes.ncols() != encoder.ncols() {
        return Err(Error::Data(format!(
            "prototypes have {} columns, encoder outputs {}",
            prototypes.ncols(),
            encoder.ncols()
        )));
    }
    Ok(Model { encoder, prototypes })
}

pub fn dataset_to_string(data: &DatasetSplit) -> String {
    let mut out = String::new();
    let n = data.num_labeled() + data.num_unlabeled();
    let _ = writeln!(out, "{} {} {} {}", n, data.input_dim(), data.num_known, data.num_total);
    let mut line = |label: usize, flag: char, known: bool, row: Vec<f64>| {
        let cells: Vec<String> = row.into_iter().map(format_f64).collect();
        let _ = writeln!(out, "{} {} {} {}", label, flag, known as u8, cells.join(" "));
    };
    for (i, &y) in data.labeled_y.iter().enumerate() {
        line(y, 'L', true, data.labeled_x.row(i).iter().copied().collect());
    }
    for (i, &y) in data.unlabeled_y.iter().enumerate() {
        line(y, 'U', data.unlabeled_known[i], data.unlabeled_x.row(i).iter().copied().collect());
    }
    out
}

pub fn dataset_from_str(text: &str) -> Result<DatasetSplit> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or(Error::Parse { line: 0, message: "empty dataset file".into() })?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 4 {
        return Err(Error::Parse { line: hl, message: "dataset header must be 'N d_in num_known num_total'".into() });
    }
    let n = parse_usize(h[0], hl)?;
    let d = parse_usize(h[1], hl)?;
    let num_known = parse_usize(h[2], hl)?;
    let num_total = parse_usize(h[3], hl)?;

    let mut labeled = Vec::new();
    let mut labeled_y = Vec::new();
    let mut unlabeled = Vec::new();
    let mut unlabeled_y = Vec::new();
    let mut unlabeled_known = Vec::new();
    let mut count = 0;
    for (ln, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 + d {
            return Err(Error::Parse { line: ln, message: format!("expected {} fields, found {}", 3 + d, toks.len()) });
        }
        let label = parse_usize(toks[0], ln)?;
        let known = match toks[2] {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Parse { line: ln, message: format!("is_known must be 0 or 1, found '{other}'") })
            }
        };
        let features = toks[3..].iter().map(|t| parse_f64(t, ln)).collect::<Result<Vec<f64>>>()?;
        match toks[1] {
            "L" => {
                if !known {
                    return Err(Error::Parse { line: ln, message: "labeled samples must be flagged known".into() });
                }
                labeled.push(features);
                labeled_y.push(label);
            }
            "U" => {
                unlabeled.push(features);
                unlabeled_y.push(label);
                unlabeled_known.push(known);
            }
            other => {
                return Err(Error::Parse { line: ln, message: format!("split flag must be L or U, found '{other}'") })
            }
        }
        count += 1;
    }
    if count != n {
        return Err(Error::Data(format!("header declares {n} samples, file has {count}")));
    }
    let to_matrix = |rows: &[Vec<f64>]| Matrix::from_fn(rows.len(), d, |r, c| rows[r][c]);
    let data = DatasetSplit {
        labeled_x: to_matrix(&labeled),
        labeled_y,
        unlabeled_x: to_matrix(&unlabeled),
        unlabeled_y,
        unlabeled_known,
        num_known,
        num_total,
    };
    data.validate()?;
    Ok(data)
}

pub fn trace_to_csv(records: &[StepRecord]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{TRACE_HEADER}");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.step,
            format_f64(r.loss_sup),
            format_f64(r.loss_unsup),
            format_f64(r.gdc),
            format_f64(r.soc),
            format_f64(r.rho_grad),
            format_f64(r.rho_in)
        );
    }
    out
}

pub fn trace_from_csv(text: &str) -> Result<Vec<StepRecord>> {
    let mut lines = content_lines(text);
    match lines.next() {
        Some((_, h)) if h == TRACE_HEADER => {}
        Some((ln, _)) => {
            return Err(Error::Parse { line: ln, message: format!("trace header must be '{TRACE_HEADER}'") })
        }
        None => return Err(Error::Parse { line: 0, message: "empty trace".into() }),
    }
    lines
        .map(|(ln, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(Error::Parse { line: ln, message: format!("expected 7 columns, found {}", f.len()) });
            }
            Ok(StepRecord {
                step: parse_usize(f[0], ln)?,
                loss_sup: parse_f64(f[1], ln)?,
                loss_unsup: parse_f64(f[2], ln)?,
                gdc: parse_f64(f[3], ln)?,
                soc: parse_f64(f[4], ln)?,
                rho_grad: parse_f64(f[5], ln)?,
                rho_in: parse_f64(f[6], ln)?,
            })
        })
        .collect()
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_string(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::Io(format!("{}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{gen_synthetic, SyntheticSpec};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn floats_round_trip(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            prop_assert_eq!(format_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }

        #[test]
        fn matrices_round_trip(rows in 0usize..5, cols in 1usize..5, seed in any::<u64>()) {
            let mut rng = crate::numerics::SeededRng::new(seed);
            let m = crate::numerics::gaussian(&mut rng, 0.0, 1e3, rows, cols).unwrap();
            prop_assert_eq!(matrix_from_str(&matrix_to_string(&m)).unwrap(), m);
        }
    }

    #[test]
    fn dataset_round_trip() {
        let data = gen_synthetic(&SyntheticSpec {
            num_known: 2,
            num_novel: 1,
            per_class: 6,
            input_dim: 3,
            class_sep: 1.0,
            noise_std: 0.3,
            seed: 4,
        })
        .unwrap();
        let text = dataset_to_string(&data);
        assert!(text.starts_with("18 3 2 3\n"));
        assert_eq!(dataset_from_str(&text).unwrap(), data);
    }

    #[test]
    fn dataset_parse_errors() {
        assert!(matches!(dataset_from_str("1 2 1 1\n0 X 1 0.5 0.5\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(dataset_from_str("2 2 1 1\n0 L 1 0.5 0.5\n"), Err(Error::Data(_))));
        assert!(matches!(dataset_from_str("1 2 1 1\n0 L 1 0.5\n"), Err(Error::Parse { .. })));
        assert!(matches!(dataset_from_str("1 2 1 2\n1 U 1 0.5 0.5\n"), Err(Error::Data(_))));
    }

    #[test]
    fn matrix_parse_errors() {
        assert!(matrix_from_str("2 2\n1 2\n").is_err());
        assert!(matrix_from_str("1 2\n1 x\n").is_err());
        assert!(matrix_from_str("1 1\n1\n2\n").is_err());
        assert_eq!(matrix_from_str("1 2\n1 0\n").unwrap(), Matrix::from_row_slice(1, 2, &[1.0, 0.0]));
    }

    #[test]
    fn trace_round_trip() {
        let records = vec![
            StepRecord { step: 0, loss_sup: 1.5, loss_unsup: -0.25, gdc: 0.1, soc: 0.5, rho_grad: 0.7, rho_in: 0.5 },
            StepRecord {
                step: 1,
                loss_sup: 1e-9,
                loss_unsup: 2.0,
                gdc: f64::NAN,
                soc: 0.4,
                rho_grad: 0.6,
                rho_in: 0.4,
            },
        ];
        let csv = trace_to_csv(&records);
        assert!(csv.starts_with(TRACE_HEADER));
        let back = trace_from_csv(&csv).unwrap();
        assert_eq!(back[0], records[0]);
        assert!(back[1].gdc.is_nan());
        assert_eq!(back[1].loss_sup, 1e-9);
    }
}
