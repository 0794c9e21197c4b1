//! Newline-delimited JSON dataset files.
//!
//! One sample per line, fields in the order
//! `{"pump_id":..,"label":..,"x":[..],"y":[..],"z":[..]}`, numbers in
//! shortest round-trip form. Blank lines are skipped on read.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Provenance, PumpDataset, VibrationSample};
use crate::error::{Error, Result};

#[derive(Serialize)]
struct LineOut<'a> {
    pump_id: &'a str,
    label: u8,
    x: &'a [f64],
    y: &'a [f64],
    z: &'a [f64],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LineIn {
    pump_id: String,
    label: u8,
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
}

/// Writes every sample, pump by pump, in stored order.
pub fn write_dataset(dataset: &PumpDataset, out: &mut impl Write) -> Result<()> {
    for s in dataset.samples() {
        let line = LineOut {
            pump_id: &s.pump_id,
            label: s.label,
            x: &s.x,
            y: &s.y,
            z: &s.z,
        };
        serde_json::to_writer(&mut *out, &line)?;
        out.write_all(b"\n")
            .map_err(|e| Error::io(Path::new("<output>"), e))?;
    }
    Ok(())
}

pub fn save_dataset(dataset: &PumpDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_dataset(dataset, &mut out)?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Parses NDJSON text. `path` is only used in error messages.
pub fn parse_dataset(reader: impl BufRead, path: &Path) -> Result<PumpDataset> {
    let mut dataset = PumpDataset::new(Provenance::File(path.to_path_buf()));
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LineIn = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        let sample = VibrationSample {
            pump_id: rec.pump_id,
            label: rec.label,
            x: rec.x,
            y: rec.y,
            z: rec.z,
        };
        if let Err(message) = sample.validate() {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                line: line_no,
                pump_id: sample.pump_id,
                message,
            });
        }
        dataset.push(sample);
    }
    Ok(dataset)
}

pub fn load_dataset(path: &Path) -> Result<PumpDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(BufReader::new(file), path)
}
