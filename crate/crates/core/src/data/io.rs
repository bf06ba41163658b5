//! Dataset files.
//!
//! Binary layout: magic `CILD1\0`, then little-endian `u32 K`, `u32 d`,
//! `u32 N`, then `N` records of `u16 label` followed by `d` `f32` pixels.
//! CSV layout: header `label,p0,...,p{d-1}`, one sample per row.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Sample, DEFAULT_HELDOUT_FRACTION};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 6] = b"CILD1\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Binary,
    Csv,
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" | "bin" | "cild" => Ok(Self::Binary),
            "csv" => Ok(Self::Csv),
            other => Err(Error::Config(format!("unknown dataset format '{other}'"))),
        }
    }
}

pub(crate) fn encode_binary(ds: &Dataset) -> Vec<u8> {
    let d = ds.dim();
    let mut out = Vec::with_capacity(18 + ds.samples().len() * (2 + 4 * d));
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&(ds.n_classes() as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(ds.samples().len() as u32).to_le_bytes());
    for s in ds.samples() {
        let label = ds.label_map()[s.y] as u16;
        out.extend_from_slice(&label.to_le_bytes());
        for &p in &s.x {
            out.extend_from_slice(&(p as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated payload while reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

fn square_side(d: usize) -> Option<usize> {
    let s = (d as f64).sqrt().round() as usize;
    (s >= 2 && s * s == d).then_some(s)
}

/// Maps raw labels to contiguous ids in ascending raw-label order.
fn remap(raw: &[(i64, Vec<f64>)]) -> (Vec<i64>, BTreeMap<i64, usize>) {
    let distinct: Vec<i64> = raw
        .iter()
        .map(|(l, _)| *l)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let index = distinct.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    (distinct, index)
}

fn build(side: usize, raw: Vec<(i64, Vec<f64>)>) -> Result<Dataset> {
    let (label_map, index) = remap(&raw);
    let samples = raw
        .into_iter()
        .map(|(l, x)| Sample { x, y: index[&l] })
        .collect();
    Dataset::new(side, label_map.len(), samples, label_map, DEFAULT_HELDOUT_FRACTION)
}

pub(crate) fn decode_binary(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(6, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(Error::format(0, "bad magic, expected CILD1"));
    }
    let k = r.u32("class count")? as usize;
    let d_offset = r.pos as u64;
    let d = r.u32("pixel count")? as usize;
    let n = r.u32("sample count")? as usize;
    let side = square_side(d)
        .ok_or_else(|| Error::format(d_offset, format!("pixel count {d} is not a square of side >= 2")))?;
    let mut raw = Vec::with_capacity(n);
    for _ in 0..n {
        let label = u16::from_le_bytes(r.take(2, "label")?.try_into().expect("2 bytes"));
        let px = r.take(4 * d, "pixels")?;
        let x = px
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        raw.push((i64::from(label), x));
    }
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos as u64, "trailing bytes after last record"));
    }
    let ds = build(side, raw)?;
    if ds.n_classes() != k {
        return Err(Error::format(
            6,
            format!("header declares {k} classes, payload has {}", ds.n_classes()),
        ));
    }
    Ok(ds)
}

fn encode_csv(ds: &Dataset) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["label".to_string()];
    header.extend((0..ds.dim()).map(|i| format!("p{i}")));
    w.write_record(&header)?;
    for s in ds.samples() {
        let mut row = vec![ds.label_map()[s.y].to_string()];
        row.extend(s.x.iter().map(|p| (*p as f32).to_string()));
        w.write_record(&row)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn decode_csv(bytes: &[u8]) -> Result<Dataset> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = rd.headers()?.clone();
    if header.get(0) != Some("label") {
        return Err(Error::format(0, "CSV header must start with 'label'"));
    }
    for (i, name) in header.iter().skip(1).enumerate() {
        if name != format!("p{i}") {
            return Err(Error::format(0, format!("CSV column {} should be p{i}, found '{name}'", i + 1)));
        }
    }
    let d = header.len() - 1;
    let side = square_side(d)
        .ok_or_else(|| Error::format(0, format!("pixel count {d} is not a square of side >= 2")))?;
    let mut raw = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let offset = rec.position().map(|p| p.byte()).unwrap_or(0);
        if rec.len() != d + 1 {
            return Err(Error::format(offset, format!("row has {} fields, expected {}", rec.len(), d + 1)));
        }
        let label: i64 = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::format(offset, format!("bad label '{}'", &rec[0])))?;
        let x = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.trim()
                    .parse::<f32>()
                    .map(f64::from)
                    .map_err(|_| Error::format(offset, format!("bad pixel '{v}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        raw.push((label, x));
    }
    build(side, raw)
}

pub fn save_dataset(ds: &Dataset, path: &Path, format: DatasetFormat) -> Result<()> {
    let bytes = match format {
        DatasetFormat::Binary => encode_binary(ds),
        DatasetFormat::Csv => encode_csv(ds)?,
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    match format {
        DatasetFormat::Binary => decode_binary(&bytes),
        DatasetFormat::Csv => decode_csv(&bytes),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};

    fn small() -> Dataset {
        generate_synthetic(&SyntheticSpec {
            n_classes: 10,
            side: 8,
            samples_per_class: 6,
            noise_sigma: 0.3,
            seed: 4,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn binary_round_trip() {
        let ds = small();
        let back = decode_binary(&encode_binary(&ds)).unwrap();
        assert_eq!(back.side(), 8);
        assert_eq!(back.n_classes(), 10);
        assert_eq!(back, ds);
    }

    #[test]
    fn csv_round_trip_through_file() {
        let ds = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        save_dataset(&ds, &path, DatasetFormat::Csv).unwrap();
        assert_eq!(load_dataset(&path, DatasetFormat::Csv).unwrap(), ds);
    }

    #[test]
    fn non_square_dimension() {
        let mut bytes = DATASET_MAGIC.to_vec();
        for v in [2u32, 60, 0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        match decode_binary(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut bytes = encode_binary(&small());
        let good = bytes.clone();
        bytes[0] = b'X';
        assert!(matches!(decode_binary(&bytes), Err(Error::Format { offset: 0, .. })));
        let cut = &good[..good.len() - 3];
        match decode_binary(cut) {
            Err(Error::Format { offset, message }) => {
                assert!(offset > 18);
                assert!(message.contains("truncated"));
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn labels_are_remapped() {
        let mut bytes = DATASET_MAGIC.to_vec();
        for v in [2u32, 4, 4] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for label in [40u16, 7, 40, 7] {
            bytes.extend_from_slice(&label.to_le_bytes());
            for _ in 0..4 {
                bytes.extend_from_slice(&1.5f32.to_le_bytes());
            }
        }
        let ds = decode_binary(&bytes).unwrap();
        assert_eq!(ds.label_map(), &[7, 40]);
        assert_eq!(ds.sample(0).y, 1);
        assert_eq!(ds.sample(1).y, 0);
    }

    #[test]
    fn csv_non_square() {
        let text = "label,p0,p1,p2\n0,1,2,3\n";
        assert!(matches!(decode_csv(text.as_bytes()), Err(Error::Format { .. })));
    }
}
