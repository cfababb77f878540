//! On-disk dataset formats: a little-endian binary sample file with a JSON
//! manifest next to it, and a flat CSV export.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetSpec, Sample, SampleMeta};
use crate::tqst::MeasurementRecord;
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"TQSTDS01";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_FILE: &str = "samples.bin";
const FORMAT_VERSION: u32 = 1;
const META_LEN: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub spec: DatasetSpec,
    pub seed: u64,
    pub total: usize,
    pub mixed: usize,
    pub pure: usize,
    pub samples_file: String,
}

fn record_len(n_qubits: usize) -> usize {
    2 * (1 << (2 * n_qubits)) + 1 + META_LEN
}

/// Writes `manifest.json` and `samples.bin` into `dir` (created if missing).
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mixed = ds.mixed_count();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        spec: ds.spec,
        seed: ds.spec.seed,
        total: ds.len(),
        mixed,
        pure: ds.len() - mixed,
        samples_file: SAMPLES_FILE.into(),
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;

    let mut w = BufWriter::new(File::create(dir.join(SAMPLES_FILE))?);
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&(ds.n_qubits() as u32).to_le_bytes())?;
    w.write_all(&(ds.len() as u64).to_le_bytes())?;
    for s in &ds.samples {
        let m = &s.meta;
        let meta = [
            m.zeros as f64,
            m.rank as f64,
            if m.pure { 1.0 } else { 0.0 },
            m.noise_strength,
            m.measurements as f64,
        ];
        let fields = s.record.values().iter().chain(&s.target_params).chain(std::iter::once(&s.target_purity)).chain(&meta);
        for x in fields {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated sample file: {e}")))?;
    Ok(buf)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    let mut r = BufReader::new(File::open(dir.join(&manifest.samples_file))?);
    if &read_array::<8>(&mut r)? != DATASET_MAGIC {
        return Err(Error::Format("bad sample file magic".into()));
    }
    let n = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let count = u64::from_le_bytes(read_array(&mut r)?) as usize;
    if n != manifest.spec.n_qubits || count != manifest.total {
        return Err(Error::Format(format!(
            "header ({n} qubits, {count} samples) disagrees with manifest"
        )));
    }
    let len = 1usize << (2 * n);
    let mut samples = Vec::with_capacity(count);
    let mut buf = vec![0f64; record_len(n)];
    for _ in 0..count {
        for x in buf.iter_mut() {
            *x = f64::from_le_bytes(read_array(&mut r)?);
        }
        let meta = &buf[2 * len + 1..];
        samples.push(Sample {
            record: MeasurementRecord::new(n, buf[..len].to_vec())?,
            target_params: buf[len..2 * len].to_vec(),
            target_purity: buf[2 * len],
            meta: SampleMeta {
                zeros: meta[0] as usize,
                rank: meta[1] as usize,
                pure: meta[2] != 0.0,
                noise_strength: meta[3],
                measurements: meta[4] as usize,
            },
        });
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Format("trailing bytes after last sample".into()));
    }
    Ok(Dataset {
        spec: manifest.spec,
        samples,
    })
}

/// One CSV line; targets are absent in measurement-only imports.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub record: MeasurementRecord,
    pub target_params: Option<Vec<f64>>,
    pub target_purity: Option<f64>,
    pub meta: SampleMeta,
}

fn csv_header(n_qubits: usize) -> Vec<String> {
    let len = 1usize << (2 * n_qubits);
    let mut h: Vec<String> = ["z", "rank", "pure", "noise_strength", "measurements", "purity"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..len).map(|k| format!("x{k}")));
    h.extend((0..len).map(|k| format!("y{k}")));
    h
}

pub fn export_csv(samples: &[&Sample], n_qubits: usize, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(csv_header(n_qubits))?;
    for s in samples {
        let m = &s.meta;
        let mut row = vec![
            m.zeros.to_string(),
            m.rank.to_string(),
            (m.pure as u8).to_string(),
            m.noise_strength.to_string(),
            m.measurements.to_string(),
            s.target_purity.to_string(),
        ];
        row.extend(s.record.values().iter().map(|x| x.to_string()));
        row.extend(s.target_params.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`export_csv`]. The `x*` columns are required; the
/// metadata, `purity` and `y*` columns are optional.
pub fn import_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let xs: Vec<usize> = (0..).map_while(|k| col(&format!("x{k}"))).collect();
    let ys: Vec<usize> = (0..).map_while(|k| col(&format!("y{k}"))).collect();
    if xs.is_empty() {
        return Err(Error::Format("CSV has no x0.. columns".into()));
    }
    if !ys.is_empty() && ys.len() != xs.len() {
        return Err(Error::Format(format!(
            "{} x columns but {} y columns",
            xs.len(),
            ys.len()
        )));
    }
    let (cz, crank, cpure, cnoise, cpur) = (col("z"), col("rank"), col("pure"), col("noise_strength"), col("purity"));

    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |c: usize| -> Result<f64> {
            let field = rec.get(c).unwrap_or("").trim();
            field
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("row {}: cannot parse {field:?}", line + 1)))
        };
        let opt = |c: Option<usize>| -> Result<Option<f64>> { c.map(num).transpose() };
        let values = xs.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>()?;
        let record = MeasurementRecord::from_values(values)?;
        let target_params = if ys.is_empty() {
            None
        } else {
            Some(ys.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>()?)
        };
        rows.push(CsvRow {
            meta: SampleMeta {
                zeros: opt(cz)?.unwrap_or(0.0) as usize,
                rank: opt(crank)?.unwrap_or(0.0) as usize,
                pure: opt(cpure)?.unwrap_or(0.0) != 0.0,
                noise_strength: opt(cnoise)?.unwrap_or(0.0),
                measurements: record.performed_count(),
            },
            target_purity: opt(cpur)?,
            target_params,
            record,
        });
    }
    Ok(rows)
}
