//! CSV readers and writers for every data product.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a value
//! read back is bit-identical to the one written and repeated runs produce
//! byte-identical files. Missing values are written as empty fields. Every
//! field is numeric or an identifier, so writing needs no quoting; reading
//! goes through the `csv` crate.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::experiment::{CycleMetrics, L2Point, LevelSnr, MarkerTrack};
use crate::ks::KsState;
use crate::mrenkf::ScaleDiagnostics;
use crate::wavelet::MultiLevelCoeffs;

/// A parsed CSV file: header names and raw rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("missing column `{name}`")))
    }

    /// Checks the header is exactly `expected`.
    pub fn expect_header(&self, expected: &[&str]) -> Result<()> {
        if self
            .header
            .iter()
            .map(String::as_str)
            .eq(expected.iter().copied())
        {
            Ok(())
        } else {
            Err(Error::Parse(format!(
                "unexpected header `{}` (expected `{}`)",
                self.header.join(","),
                expected.join(",")
            )))
        }
    }
}

/// Reads a comma-separated table with one header line. Fields are trimmed;
/// every row must have as many fields as the header.
pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_string)
        .collect();
    if header.iter().all(String::is_empty) {
        return Err(Error::Parse("empty CSV input".into()));
    }
    let rows = rdr
        .records()
        .map(|r| {
            r.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(csv_error)
        })
        .collect::<Result<Vec<Vec<String>>>>()?;
    Ok(Table { header, rows })
}

fn csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!("checked to be an I/O error"),
        }
    } else {
        Error::Parse(e.to_string())
    }
}

pub fn parse_f64(field: &str) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::Parse(format!("`{field}` is not a number")))
}

pub fn parse_usize(field: &str) -> Result<usize> {
    field
        .parse()
        .map_err(|_| Error::Parse(format!("`{field}` is not a non-negative integer")))
}

fn parse_opt_f64(field: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(field).map(Some)
    }
}

fn write_row<W: Write, T: std::fmt::Display>(
    w: &mut W,
    values: impl IntoIterator<Item = T>,
) -> Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            w.write_all(b",")?;
        }
        write!(w, "{v}")?;
        first = false;
    }
    w.write_all(b"\n")?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `level,index,value` with levels labelled `N+1` (coarsest) to `1`.
pub fn write_coefficients_csv<W: Write>(mut w: W, coeffs: &MultiLevelCoeffs) -> Result<()> {
    writeln!(w, "level,index,value")?;
    for (level, block) in coeffs.level_labels().zip(coeffs.blocks()) {
        for (k, v) in block.iter().enumerate() {
            writeln!(w, "{level},{k},{v}")?;
        }
    }
    Ok(())
}

pub fn read_coefficients_csv<R: Read>(r: R) -> Result<MultiLevelCoeffs> {
    let table = read_table(r)?;
    table.expect_header(&["level", "index", "value"])?;
    let mut entries = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        entries.push((
            parse_usize(&row[0])?,
            parse_usize(&row[1])?,
            parse_f64(&row[2])?,
        ));
    }
    let top = entries.iter().map(|e| e.0).max().unwrap_or(0);
    if top == 0 {
        return Err(Error::Parse("coefficient levels start at 1".into()));
    }
    let levels = top - 1;
    let mut blocks: Vec<Vec<Option<f64>>> = vec![Vec::new(); levels + 1];
    for (level, index, value) in entries {
        if level == 0 {
            return Err(Error::Parse("coefficient levels start at 1".into()));
        }
        let block = &mut blocks[levels + 1 - level];
        if block.len() <= index {
            block.resize(index + 1, None);
        }
        if block[index].replace(value).is_some() {
            return Err(Error::Parse(format!(
                "duplicate coefficient ({level},{index})"
            )));
        }
    }
    let blocks = blocks
        .into_iter()
        .map(|b| {
            b.into_iter()
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| Error::Parse("missing coefficient index".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    MultiLevelCoeffs::from_blocks(levels, blocks)
}

/// One row per state index, one column per member, headed
/// `state,member_1,…,member_M`.
pub fn write_ensemble_csv<W: Write>(mut w: W, ensemble: &Ensemble) -> Result<()> {
    let members = ensemble.members();
    write!(w, "state")?;
    for a in 1..=ensemble.size() {
        write!(w, ",member_{a}")?;
    }
    writeln!(w)?;
    for (i, row) in members.row_iter().enumerate() {
        write!(w, "{i}")?;
        for v in row.iter() {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_ensemble_csv<R: Read>(r: R) -> Result<Ensemble> {
    let table = read_table(r)?;
    if table.header.first().map(String::as_str) != Some("state") {
        return Err(Error::Parse(
            "ensemble CSV must start with a `state` column".into(),
        ));
    }
    let m = table.header.len() - 1;
    let n = table.rows.len();
    let mut data = DMatrix::zeros(n, m);
    for (i, row) in table.rows.iter().enumerate() {
        if parse_usize(&row[0])? != i {
            return Err(Error::Parse(format!(
                "state index out of order at row {}",
                i + 1
            )));
        }
        for a in 0..m {
            data[(i, a)] = parse_f64(&row[a + 1])?;
        }
    }
    Ensemble::new(data)
}

/// `t,x_0,…,x_{n−1}`, one row per state.
pub fn write_trajectory_csv<W: Write>(mut w: W, states: &[KsState]) -> Result<()> {
    let n = states.first().map_or(0, |s| s.u.len());
    write!(w, "t")?;
    for j in 0..n {
        write!(w, ",x_{j}")?;
    }
    writeln!(w)?;
    for s in states {
        if s.u.len() != n {
            return Err(Error::LengthMismatch {
                what: "trajectory row",
                expected: n,
                found: s.u.len(),
            });
        }
        write_row(&mut w, std::iter::once(s.t).chain(s.u.iter().copied()))?;
    }
    Ok(())
}

pub fn read_trajectory_csv<R: Read>(r: R) -> Result<Vec<KsState>> {
    let table = read_table(r)?;
    if table.header.first().map(String::as_str) != Some("t") {
        return Err(Error::Parse(
            "trajectory CSV must start with a `t` column".into(),
        ));
    }
    table
        .rows
        .iter()
        .map(|row| {
            Ok(KsState {
                t: parse_f64(&row[0])?,
                u: row[1..]
                    .iter()
                    .map(|f| parse_f64(f))
                    .collect::<Result<_>>()?,
            })
        })
        .collect()
}

pub const METRICS_HEADER: [&str; 6] =
    ["cycle", "t", "l2_pre", "l2_post", "trace_pre", "trace_post"];

pub fn write_metrics_csv<W: Write>(mut w: W, cycles: &[CycleMetrics]) -> Result<()> {
    writeln!(w, "{}", METRICS_HEADER.join(","))?;
    for c in cycles {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            c.cycle, c.t, c.l2_pre, c.l2_post, c.trace_pre, c.trace_post
        )?;
    }
    Ok(())
}

pub fn read_metrics_csv<R: Read>(r: R) -> Result<Vec<CycleMetrics>> {
    let table = read_table(r)?;
    table.expect_header(&METRICS_HEADER)?;
    table
        .rows
        .iter()
        .map(|row| {
            Ok(CycleMetrics {
                cycle: parse_usize(&row[0])?,
                t: parse_f64(&row[1])?,
                l2_pre: parse_f64(&row[2])?,
                l2_post: parse_f64(&row[3])?,
                trace_pre: parse_f64(&row[4])?,
                trace_post: parse_f64(&row[5])?,
            })
        })
        .collect()
}

pub fn write_l2_series_csv<W: Write>(mut w: W, series: &[L2Point]) -> Result<()> {
    writeln!(w, "step,t,l2")?;
    for p in series {
        writeln!(w, "{},{},{}", p.step, p.t, p.l2)?;
    }
    Ok(())
}

pub fn read_l2_series_csv<R: Read>(r: R) -> Result<Vec<L2Point>> {
    let table = read_table(r)?;
    table.expect_header(&["step", "t", "l2"])?;
    table
        .rows
        .iter()
        .map(|row| {
            Ok(L2Point {
                step: parse_usize(&row[0])?,
                t: parse_f64(&row[1])?,
                l2: parse_f64(&row[2])?,
            })
        })
        .collect()
}

pub fn write_rank_histogram_csv<W: Write>(mut w: W, counts: &[u64]) -> Result<()> {
    writeln!(w, "bin,count")?;
    for (bin, c) in counts.iter().enumerate() {
        writeln!(w, "{bin},{c}")?;
    }
    Ok(())
}

pub fn read_rank_histogram_csv<R: Read>(r: R) -> Result<Vec<u64>> {
    let table = read_table(r)?;
    table.expect_header(&["bin", "count"])?;
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if parse_usize(&row[0])? != i {
                return Err(Error::Parse(format!("bin out of order at row {}", i + 1)));
            }
            Ok(parse_usize(&row[1])? as u64)
        })
        .collect()
}

/// `level,sigma,avg_snr`; `avg_snr` is empty for noiseless levels.
pub fn write_snr_csv<W: Write>(mut w: W, snr: &[LevelSnr]) -> Result<()> {
    writeln!(w, "level,sigma,avg_snr")?;
    for s in snr {
        writeln!(w, "{},{},{}", s.level, s.sigma, opt(s.avg_snr))?;
    }
    Ok(())
}

pub fn read_snr_csv<R: Read>(r: R) -> Result<Vec<LevelSnr>> {
    let table = read_table(r)?;
    table.expect_header(&["level", "sigma", "avg_snr"])?;
    table
        .rows
        .iter()
        .map(|row| {
            Ok(LevelSnr {
                level: parse_usize(&row[0])?,
                sigma: parse_f64(&row[1])?,
                avg_snr: parse_opt_f64(&row[2])?,
            })
        })
        .collect()
}

pub const SCALE_DIAGNOSTICS_HEADER: [&str; 7] = [
    "cycle",
    "scale",
    "pre_trace",
    "post_trace",
    "obs_residual_norm",
    "rho",
    "lambda",
];

/// Per-level update log, one row per `(cycle, scale)`.
pub fn write_scale_diagnostics_csv<W: Write>(
    mut w: W,
    diags: &[(usize, ScaleDiagnostics)],
) -> Result<()> {
    writeln!(w, "{}", SCALE_DIAGNOSTICS_HEADER.join(","))?;
    for (cycle, d) in diags {
        writeln!(
            w,
            "{cycle},{},{},{},{},{},{}",
            d.level, d.pre_trace, d.post_trace, d.obs_residual_norm, d.rho, d.lambda
        )?;
    }
    Ok(())
}

pub fn read_scale_diagnostics_csv<R: Read>(r: R) -> Result<Vec<(usize, ScaleDiagnostics)>> {
    let table = read_table(r)?;
    table.expect_header(&SCALE_DIAGNOSTICS_HEADER)?;
    table
        .rows
        .iter()
        .map(|row| {
            Ok((
                parse_usize(&row[0])?,
                ScaleDiagnostics {
                    level: parse_usize(&row[1])?,
                    pre_trace: parse_f64(&row[2])?,
                    post_trace: parse_f64(&row[3])?,
                    obs_residual_norm: parse_f64(&row[4])?,
                    rho: parse_f64(&row[5])?,
                    lambda: parse_f64(&row[6])?,
                },
            ))
        })
        .collect()
}

/// Long format `step,t,marker,x,index,truth,member_1,…,member_M`: one row per
/// model step and marker.
pub fn write_markers_csv<W: Write>(mut w: W, track: &MarkerTrack) -> Result<()> {
    let m = track
        .members
        .first()
        .and_then(|s| s.first())
        .map_or(0, Vec::len);
    write!(w, "step,t,marker,x,index,truth")?;
    for a in 1..=m {
        write!(w, ",member_{a}")?;
    }
    writeln!(w)?;
    for (step, ((t, truth), members)) in track
        .t
        .iter()
        .zip(&track.truth)
        .zip(&track.members)
        .enumerate()
    {
        for (k, (&x, &index)) in track.x.iter().zip(&track.indices).enumerate() {
            write!(w, "{step},{t},{k},{x},{index},{}", truth[k])?;
            for v in &members[k] {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn read_markers_csv<R: Read>(r: R) -> Result<MarkerTrack> {
    let table = read_table(r)?;
    let fixed = ["step", "t", "marker", "x", "index", "truth"];
    if table.header.len() < fixed.len()
        || table.header[..fixed.len()]
            .iter()
            .map(String::as_str)
            .ne(fixed)
    {
        return Err(Error::Parse(format!(
            "marker CSV must start with `{}`",
            fixed.join(",")
        )));
    }
    let mut track = MarkerTrack {
        x: Vec::new(),
        indices: Vec::new(),
        t: Vec::new(),
        truth: Vec::new(),
        members: Vec::new(),
    };
    for row in &table.rows {
        let step = parse_usize(&row[0])?;
        let k = parse_usize(&row[2])?;
        if step == track.t.len() {
            track.t.push(parse_f64(&row[1])?);
            track.truth.push(Vec::new());
            track.members.push(Vec::new());
        } else if step + 1 != track.t.len() {
            return Err(Error::Parse(format!(
                "marker rows out of order at step {step}"
            )));
        }
        if step == 0 {
            track.x.push(parse_f64(&row[3])?);
            track.indices.push(parse_usize(&row[4])?);
        }
        if k != track.truth[step].len() || k >= track.x.len() {
            return Err(Error::Parse(format!(
                "marker index {k} out of order at step {step}"
            )));
        }
        track.truth[step].push(parse_f64(&row[5])?);
        track.members[step].push(
            row[6..]
                .iter()
                .map(|f| parse_f64(f))
                .collect::<Result<_>>()?,
        );
    }
    Ok(track)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::{make_filter, wavedec};
    use std::io::Cursor;

    fn bytes<F: FnOnce(&mut Vec<u8>) -> Result<()>>(f: F) -> Vec<u8> {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        buf
    }

    #[test]
    fn coefficients_round_trip() {
        let x: Vec<f64> = (0..32).map(|j| (j as f64 * 0.37).sin() / 3.0).collect();
        let c = wavedec(&x, &make_filter("db3").unwrap(), 2).unwrap();
        let buf = bytes(|b| write_coefficients_csv(b, &c));
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("level,index,value\n3,0,"));
        assert_eq!(text.lines().count(), 33);
        assert_eq!(read_coefficients_csv(Cursor::new(buf)).unwrap(), c);
    }

    #[test]
    fn ensemble_round_trip() {
        let e = Ensemble::new(DMatrix::from_fn(4, 3, |i, a| {
            i as f64 * 0.1 - a as f64 / 7.0
        }))
        .unwrap();
        let buf = bytes(|b| write_ensemble_csv(b, &e));
        assert!(String::from_utf8(buf.clone())
            .unwrap()
            .starts_with("state,member_1,member_2,member_3\n0,"));
        assert_eq!(read_ensemble_csv(Cursor::new(buf)).unwrap(), e);
    }

    #[test]
    fn trajectory_and_metrics_round_trip() {
        let states = vec![
            KsState {
                u: vec![0.1, -0.2, 1e-17],
                t: 0.0,
            },
            KsState {
                u: vec![3.0, 2.5, -1.0 / 3.0],
                t: 0.5,
            },
        ];
        let buf = bytes(|b| write_trajectory_csv(b, &states));
        assert!(String::from_utf8(buf.clone())
            .unwrap()
            .starts_with("t,x_0,x_1,x_2\n"));
        assert_eq!(read_trajectory_csv(Cursor::new(buf)).unwrap(), states);

        let cycles = vec![CycleMetrics {
            cycle: 1,
            t: 10.0,
            l2_pre: 1.25,
            l2_post: 0.5,
            trace_pre: 300.0,
            trace_post: 20.0 / 3.0,
        }];
        let buf = bytes(|b| write_metrics_csv(b, &cycles));
        assert_eq!(read_metrics_csv(Cursor::new(buf)).unwrap(), cycles);

        let series = vec![
            L2Point {
                step: 0,
                t: 0.0,
                l2: 0.25,
            },
            L2Point {
                step: 1,
                t: 0.5,
                l2: 0.3,
            },
        ];
        let buf = bytes(|b| write_l2_series_csv(b, &series));
        assert_eq!(read_l2_series_csv(Cursor::new(buf)).unwrap(), series);
    }

    #[test]
    fn small_tables_round_trip() {
        let counts = vec![3, 0, 7];
        let buf = bytes(|b| write_rank_histogram_csv(b, &counts));
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "bin,count\n0,3\n1,0\n2,7\n"
        );
        assert_eq!(read_rank_histogram_csv(Cursor::new(buf)).unwrap(), counts);

        let snr = vec![
            LevelSnr {
                level: 2,
                sigma: 0.75,
                avg_snr: Some(17.5),
            },
            LevelSnr {
                level: 1,
                sigma: 0.0,
                avg_snr: None,
            },
        ];
        let buf = bytes(|b| write_snr_csv(b, &snr));
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "level,sigma,avg_snr\n2,0.75,17.5\n1,0,\n"
        );
        assert_eq!(read_snr_csv(Cursor::new(buf)).unwrap(), snr);

        let diags = vec![(
            4,
            ScaleDiagnostics {
                level: 5,
                pre_trace: 2.0,
                post_trace: 1.0,
                obs_residual_norm: 0.125,
                rho: 1.0,
                lambda: 10.0,
            },
        )];
        let buf = bytes(|b| write_scale_diagnostics_csv(b, &diags));
        assert_eq!(read_scale_diagnostics_csv(Cursor::new(buf)).unwrap(), diags);
    }

    #[test]
    fn markers_round_trip() {
        let track = MarkerTrack {
            x: vec![-1.5, 2.0],
            indices: vec![3, 9],
            t: vec![0.0, 0.5],
            truth: vec![vec![1.0, 2.0], vec![1.5, 2.5]],
            members: vec![
                vec![vec![0.9, 1.1], vec![2.1, 1.9]],
                vec![vec![1.4, 1.6], vec![2.4, 2.6]],
            ],
        };
        let buf = bytes(|b| write_markers_csv(b, &track));
        assert_eq!(read_markers_csv(Cursor::new(buf)).unwrap(), track);
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(read_table(Cursor::new("")).is_err());
        assert!(read_rank_histogram_csv(Cursor::new("bin,count\n0,1,2\n")).is_err());
        assert!(read_rank_histogram_csv(Cursor::new("bin,cnt\n0,1\n")).is_err());
        assert!(read_metrics_csv(Cursor::new(format!(
            "{}\n1,x,1,1,1,1\n",
            METRICS_HEADER.join(",")
        )))
        .is_err());
        assert!(
            read_coefficients_csv(Cursor::new("level,index,value\n2,0,1\n2,0,1\n1,0,1\n")).is_err()
        );
    }
}
