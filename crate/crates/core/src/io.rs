//! CSV sample ingestion and emission.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hexfloat;
use crate::kernels::ProductKernel;
use crate::reconstruct::{Sample, SampleSet};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    parse_err(line, e.to_string())
}

/// Read `vertex,time,value` rows. Numbers may be decimal or hex floats.
/// Line numbers in errors are 1-based and count the header.
pub fn read_samples<R: Read>(reader: R) -> Result<SampleSet> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = csv.headers().map_err(csv_err)?.clone();
    let expected = ["vertex", "time", "value"];
    if header.len() != 3 || header.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(parse_err(1, format!("expected header vertex,time,value, got {:?}", header.as_slice())));
    }
    let mut samples = SampleSet::default();
    for record in csv.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let vertex = record[0]
            .parse::<usize>()
            .map_err(|e| parse_err(line, format!("vertex {:?}: {e}", &record[0])))?;
        let number = |i: usize| {
            hexfloat::parse_any(&record[i]).map_err(|_| parse_err(line, format!("bad number {:?}", &record[i])))
        };
        samples.push(Sample::new(vertex, number(1)?, number(2)?));
    }
    Ok(samples)
}

/// Read samples and check every point against the kernel's graph and domain.
pub fn ingest_samples(path: impl AsRef<Path>, kernel: &ProductKernel) -> Result<SampleSet> {
    let samples = read_samples(std::fs::File::open(path)?)?;
    samples.validate(kernel)?;
    Ok(samples)
}

pub fn load_samples(path: impl AsRef<Path>) -> Result<SampleSet> {
    read_samples(std::fs::File::open(path)?)
}

/// Write `vertex,time,value`; `hex` selects bit-exact hex-float columns.
pub fn write_samples<W: Write>(writer: W, samples: &SampleSet, hex: bool) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    csv.write_record(["vertex", "time", "value"]).map_err(io)?;
    for s in samples {
        let (t, y) = if hex {
            (hexfloat::format(s.time), hexfloat::format(s.value))
        } else {
            (format!("{}", s.time), format!("{}", s.value))
        };
        csv.write_record([s.vertex.to_string(), t, y]).map_err(io)?;
    }
    csv.flush()?;
    Ok(())
}

/// Read `vertex,time` query rows.
pub fn read_queries<R: Read>(reader: R) -> Result<Vec<(usize, f64)>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = csv.headers().map_err(csv_err)?.clone();
    if header.len() < 2 || &header[0] != "vertex" || &header[1] != "time" {
        return Err(parse_err(1, "expected header vertex,time"));
    }
    let mut out = Vec::new();
    for record in csv.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let v = record[0].parse::<usize>().map_err(|e| parse_err(line, format!("vertex: {e}")))?;
        let t = hexfloat::parse_any(&record[1]).map_err(|_| parse_err(line, "bad time"))?;
        out.push((v, t));
    }
    Ok(out)
}

/// Headerless numeric matrix, one row per line.
pub fn read_matrix<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut csv = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in csv.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row = record
            .iter()
            .map(|x| hexfloat::parse_any(x).map_err(|_| parse_err(line, format!("bad number {x:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(line, format!("row has {} columns, expected {}", row.len(), first.len())));
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_body_is_empty_set() {
        assert!(read_samples("vertex,time,value\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "vertex,time,value\n0,0.1,1.0\n1,abc,2.0\n";
        match read_samples(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hex_roundtrip_is_bit_exact() {
        let samples = SampleSet::from_triples(&[(0, 0.1, 1.0 / 3.0), (2, 0.7, -2e-300)]);
        let mut buf = Vec::new();
        write_samples(&mut buf, &samples, true).unwrap();
        assert_eq!(read_samples(buf.as_slice()).unwrap(), samples);
    }

    #[test]
    fn matrix_rows() {
        let m = read_matrix("1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert!(read_matrix("1,2\n3\n".as_bytes()).is_err());
    }
}
