use std::io::{Read, Write};
use std::path::Path;

use super::{Channel, ScadaRecord, ScadaSeries};
use crate::error::{Error, Result};

/// Fixed header of the SCADA interchange CSV.
pub const CSV_HEADER: &str = "step,wind_speed,wind_dir,air_temp,gear_temp,oil_temp,tr_temp";

/// Loads and validates a SCADA CSV file. Rows are reported 1-based, counting data rows only.
pub fn load_scada_csv(path: impl AsRef<Path>) -> Result<ScadaSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_scada_csv(file, path)
}

/// Reads a SCADA CSV from any reader; `origin` names the source in error messages.
pub fn read_scada_csv(reader: impl Read, origin: &Path) -> Result<ScadaSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            message: format!("header: {e}"),
        })?
        .clone();
    let find = |name: &'static str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or(Error::MissingColumn {
                path: origin.to_path_buf(),
                column: name,
            })
    };
    let step_col = find("step")?;
    let mut cols = [0usize; 6];
    for (slot, ch) in cols.iter_mut().zip(Channel::ALL) {
        *slot = find(ch.column())?;
    }

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        let field = |idx: usize, name: &str| -> Result<&str> {
            row.get(idx).ok_or_else(|| Error::Parse {
                row: row_no,
                message: format!("missing value for `{name}`"),
            })
        };
        let raw_step = field(step_col, "step")?;
        let step: usize = raw_step.parse().map_err(|_| Error::Parse {
            row: row_no,
            message: format!("unparseable step `{raw_step}`"),
        })?;
        let mut rec = ScadaRecord {
            step,
            wind_speed: 0.0,
            wind_dir: 0.0,
            air_temp: 0.0,
            gear_bearing_temp: 0.0,
            hydraulic_oil_temp: 0.0,
            transformer_winding_temp: 0.0,
        };
        for (&idx, ch) in cols.iter().zip(Channel::ALL) {
            let raw = field(idx, ch.column())?;
            let value: f64 = raw.parse().map_err(|_| Error::Parse {
                row: row_no,
                message: format!("unparseable value `{raw}` for `{}`", ch.column()),
            })?;
            rec.set(ch, value);
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::Parse {
            row: 0,
            message: "no data rows".into(),
        });
    }
    ScadaSeries::new(records)
}

/// Writes a series in the interchange format. Floats use the shortest
/// representation that parses back to the identical value.
pub fn write_scada_csv(series: &ScadaSeries, mut out: impl Write) -> std::io::Result<()> {
    let mut buf = String::with_capacity(series.len() * 96);
    buf.push_str(CSV_HEADER);
    buf.push('\n');
    for r in series.records() {
        use std::fmt::Write as _;
        let _ = writeln!(
            buf,
            "{},{},{},{},{},{},{}",
            r.step,
            r.wind_speed,
            r.wind_dir,
            r.air_temp,
            r.gear_bearing_temp,
            r.hydraulic_oil_temp,
            r.transformer_winding_temp
        );
    }
    out.write_all(buf.as_bytes())?;
    out.flush()
}
