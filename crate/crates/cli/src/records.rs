//! Record-file schema and stable numeric formatting.
//!
//! All CSV output uses `\n` line endings, fixed headers, and 9 significant
//! digits in scientific notation for floating-point columns, so repeated
//! runs with the same seed are byte-identical.

use std::io::Write;
use std::path::Path;

use atomphase_core::SpectrumRecord;

use crate::CliError;

pub const RECORDS_HEADER: &str = "detuning_mhz,counts_c,counts_d,duration_ms,atom_present";

/// 9 significant digits, locale independent; negative zero collapses to zero.
pub fn fmt_f64(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.8e}")
}

pub fn write_records(path: &Path, records: &[SpectrumRecord]) -> Result<(), CliError> {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&fmt_f64(r.detuning_mhz));
        out.push(',');
        out.push_str(&r.counts_c.to_string());
        out.push(',');
        out.push_str(&r.counts_d.to_string());
        out.push(',');
        out.push_str(&fmt_f64(r.duration_ms));
        out.push(',');
        out.push(if r.atom_present { '1' } else { '0' });
        out.push('\n');
    }
    std::fs::write(path, out).map_err(CliError::io(format!("writing {}", path.display())))
}

pub fn read_records(path: &Path) -> Result<Vec<SpectrumRecord>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(CliError::io(format!("reading {}", path.display())))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == RECORDS_HEADER => {}
        Some((_, header)) => {
            return Err(CliError::Data(format!(
                "{}: line 1: expected header `{RECORDS_HEADER}`, got `{header}`",
                path.display()
            )))
        }
        None => {
            return Err(CliError::Data(format!(
                "{}: file is empty",
                path.display()
            )))
        }
    }

    let mut records = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(CliError::Data(format!(
                "{}: line {line_no}: expected 5 fields, got {}",
                path.display(),
                fields.len()
            )));
        }
        let parse_f64 = |text: &str, name: &str| {
            text.trim().parse::<f64>().map_err(|_| {
                CliError::Data(format!(
                    "{}: line {line_no}: cannot parse {name} `{text}`",
                    path.display()
                ))
            })
        };
        let parse_u64 = |text: &str, name: &str| {
            text.trim().parse::<u64>().map_err(|_| {
                CliError::Data(format!(
                    "{}: line {line_no}: cannot parse {name} `{text}`",
                    path.display()
                ))
            })
        };
        let detuning_mhz = parse_f64(fields[0], "detuning_mhz")?;
        let counts_c = parse_u64(fields[1], "counts_c")?;
        let counts_d = parse_u64(fields[2], "counts_d")?;
        let duration_ms = parse_f64(fields[3], "duration_ms")?;
        if !(duration_ms.is_finite() && duration_ms > 0.0) {
            return Err(CliError::Data(format!(
                "{}: line {line_no}: duration_ms must be positive, got {duration_ms}",
                path.display()
            )));
        }
        let atom_present = match fields[4].trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(CliError::Data(format!(
                    "{}: line {line_no}: atom_present must be 0 or 1, got `{other}`",
                    path.display()
                )))
            }
        };
        records.push(SpectrumRecord {
            detuning_mhz,
            counts_c,
            counts_d,
            duration_ms,
            atom_present,
        });
    }
    Ok(records)
}

/// Small helper for the table writers.
pub struct CsvWriter {
    data: String,
}

impl CsvWriter {
    pub fn new(header: &str) -> Self {
        let mut data = String::new();
        data.push_str(header);
        data.push('\n');
        Self { data }
    }

    pub fn row(&mut self, fields: &[String]) {
        let mut first = true;
        for f in fields {
            if !first {
                self.data.push(',');
            }
            self.data.push_str(f);
            first = false;
        }
        self.data.push('\n');
    }

    pub fn save(self, path: &Path) -> Result<(), CliError> {
        let mut file = std::fs::File::create(path)
            .map_err(CliError::io(format!("creating {}", path.display())))?;
        file.write_all(self.data.as_bytes())
            .map_err(CliError::io(format!("writing {}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_is_stable() {
        assert_eq!(fmt_f64(35.1), "3.51000000e1");
        assert_eq!(fmt_f64(0.064), "6.40000000e-2");
        assert_eq!(fmt_f64(-1.0), "-1.00000000e0");
    }

    #[test]
    fn record_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let records = vec![
            SpectrumRecord {
                detuning_mhz: 35.1,
                counts_c: 123,
                counts_d: 456,
                duration_ms: 133.7,
                atom_present: true,
            },
            SpectrumRecord {
                detuning_mhz: -5.0,
                counts_c: 0,
                counts_d: 9,
                duration_ms: 2000.0,
                atom_present: false,
            },
        ];
        write_records(&path, &records).unwrap();
        let back = read_records(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].counts_c, 123);
        assert!(!back[1].atom_present);
        assert!((back[0].detuning_mhz - 35.1).abs() < 1e-7);
    }

    #[test]
    fn parse_errors_cite_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            format!("{RECORDS_HEADER}\n3.51e1,12,13,1.3e2,1\nnot_a_number,1,2,3,1\n"),
        )
        .unwrap();
        let err = read_records(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "message: {msg}");
        assert_eq!(err.exit_code(), 3);
    }
}
