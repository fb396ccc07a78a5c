//! Kaggle FER2013 CSV: header `emotion,pixels,Usage`, one face per row with
//! 2304 space-separated 8-bit pixels in row-major order.

use std::io::Read;
use std::path::Path;

use super::{DatasetPartition, Origin, Sample, SAMPLE_SIZE};
use crate::error::{Error, Result};
use crate::image::GrayImage;

const HEADER: [&str; 3] = ["emotion", "pixels", "Usage"];
const USAGES: [&str; 3] = ["Training", "PublicTest", "PrivateTest"];
const NUM_EMOTIONS: usize = 7;

#[derive(Debug, Clone)]
pub struct Fer2013 {
    pub training: DatasetPartition,
    pub public_test: DatasetPartition,
    pub private_test: DatasetPartition,
}

impl Fer2013 {
    pub fn partition(&self, name: &str) -> Option<&DatasetPartition> {
        match name {
            "Training" => Some(&self.training),
            "PublicTest" => Some(&self.public_test),
            "PrivateTest" => Some(&self.private_test),
            _ => None,
        }
    }

    pub fn total(&self) -> usize {
        self.training.len() + self.public_test.len() + self.private_test.len()
    }

    fn empty() -> Self {
        Self {
            training: DatasetPartition::new("Training", vec![]),
            public_test: DatasetPartition::new("PublicTest", vec![]),
            private_test: DatasetPartition::new("PrivateTest", vec![]),
        }
    }

    fn push(&mut self, usage: usize, sample: Sample) {
        match usage {
            0 => self.training.samples.push(sample),
            1 => self.public_test.samples.push(sample),
            _ => self.private_test.samples.push(sample),
        }
    }
}

/// A rejected row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl From<RowError> for Error {
    fn from(e: RowError) -> Self {
        Error::Parse {
            line: e.line,
            message: e.message,
        }
    }
}

/// Outcome of a lenient parse: every data row is either a sample or an
/// entry in `errors`.
#[derive(Debug, Clone)]
pub struct Fer2013Report {
    pub data: Fer2013,
    pub rows: usize,
    pub errors: Vec<RowError>,
}

/// Parses the whole file, failing on the first malformed row.
pub fn parse_fer2013_csv<R: Read>(reader: R) -> Result<Fer2013> {
    let mut data = Fer2013::empty();
    parse_rows(reader, |row| {
        let (usage, sample) = row?;
        data.push(usage, sample);
        Ok(())
    })?;
    Ok(data)
}

/// Parses every row, collecting malformed ones instead of stopping. Only a
/// bad header is fatal.
pub fn parse_fer2013_csv_lenient<R: Read>(reader: R) -> Result<Fer2013Report> {
    let mut data = Fer2013::empty();
    let mut errors = Vec::new();
    let mut rows = 0;
    parse_rows(reader, |row| {
        rows += 1;
        match row {
            Ok((usage, sample)) => data.push(usage, sample),
            Err(e) => errors.push(e),
        }
        Ok(())
    })?;
    Ok(Fer2013Report { data, rows, errors })
}

pub fn read_fer2013_csv(path: &Path) -> Result<Fer2013> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_fer2013_csv(std::io::BufReader::new(file))
}

type Row = std::result::Result<(usize, Sample), RowError>;

fn parse_rows<R: Read>(reader: R, mut sink: impl FnMut(Row) -> Result<()>) -> Result<()> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = csv.headers().map_err(|e| Error::Parse {
        line: 1,
        message: format!("unreadable header: {e}"),
    })?;
    if header.iter().map(str::trim).ne(HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header {:?}, got {:?}",
                HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut record = csv::StringRecord::new();
    let mut last_line = 1;
    loop {
        match csv.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(last_line + 1, |p| p.line());
                last_line = line;
                sink(parse_record(&record, line))?;
            }
            Err(e) => {
                let line = e.position().map_or(last_line + 1, |p| p.line());
                last_line = line;
                sink(Err(RowError {
                    line,
                    message: format!("unreadable row: {e}"),
                }))?;
            }
        }
    }
    Ok(())
}

fn parse_record(record: &csv::StringRecord, line: u64) -> Row {
    let fail = |message: String| RowError { line, message };
    if record.len() != HEADER.len() {
        return Err(fail(format!(
            "expected {} columns, found {}",
            HEADER.len(),
            record.len()
        )));
    }
    let emotion_field = record[0].trim();
    let label: usize = emotion_field
        .parse()
        .map_err(|_| fail(format!("emotion {emotion_field:?} is not an integer")))?;
    if label >= NUM_EMOTIONS {
        return Err(fail(format!("emotion {label} outside 0..=6")));
    }

    let usage_field = record[2].trim();
    let usage = USAGES
        .iter()
        .position(|&u| u == usage_field)
        .ok_or_else(|| fail(format!("unknown Usage {usage_field:?}")))?;

    let expected = SAMPLE_SIZE * SAMPLE_SIZE;
    let mut bytes = Vec::with_capacity(expected);
    for (i, token) in record[1].split_ascii_whitespace().enumerate() {
        let v: u8 = token
            .parse()
            .map_err(|_| fail(format!("pixel {i} {token:?} is not an integer in 0..=255")))?;
        bytes.push(v);
    }
    if bytes.len() != expected {
        return Err(fail(format!(
            "expected {expected} pixels, found {}",
            bytes.len()
        )));
    }
    let image = GrayImage::from_u8(SAMPLE_SIZE, SAMPLE_SIZE, &bytes).map_err(|e| fail(e.to_string()))?;
    Ok((
        usage,
        Sample {
            image,
            label,
            origin: Origin {
                source: USAGES[usage].to_string(),
                id: format!("line{line:06}"),
            },
        },
    ))
}
