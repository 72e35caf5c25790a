//! Embedding CSV files.
//!
//! ```text
//! idc-embeddings,v1,C=<classes>,D=<dim>
//! id,domain,label,f0,...,f{D-1}
//! <id>,source,<label>,<features...>
//! <id>,target,-1,<features...>
//! ```
//!
//! Features are written with 17 significant digits so a save/load round trip
//! is lossless. Target ground truth goes to a separate `id,label` file.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use super::{Dataset, Domain, SampleRecord, TargetLabels};
use crate::error::{IdcError, Result};
use crate::math::FeatureVector;

const MAGIC: &str = "idc-embeddings";
const VERSION: &str = "v1";

fn format_err(line: u64, message: impl Into<String>) -> IdcError {
    IdcError::FormatError {
        line,
        message: message.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> IdcError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IdcError::io(path, io),
        other => format_err(line, format!("{other:?}")),
    }
}

fn parse_header_field(field: Option<&str>, prefix: &str) -> Result<usize> {
    field
        .and_then(|f| f.strip_prefix(prefix))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| format_err(1, format!("expected `{prefix}<int>` in header")))
}

fn column_header(dim: usize) -> Vec<String> {
    ["id", "domain", "label"]
        .into_iter()
        .map(String::from)
        .chain((0..dim).map(|i| format!("f{i}")))
        .collect()
}

pub fn format_feature(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn save_embeddings(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| IdcError::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_writer(BufWriter::new(file));
    let header = [
        MAGIC.to_string(),
        VERSION.to_string(),
        format!("C={}", dataset.num_classes()),
        format!("D={}", dataset.dim()),
    ];
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    w.write_record(column_header(dataset.dim())).map_err(|e| csv_err(path, e))?;
    for r in dataset.to_records() {
        let mut row = Vec::with_capacity(3 + r.feature.len());
        row.push(r.id);
        row.push(r.domain.as_str().to_string());
        row.push(r.label.to_string());
        row.extend(r.feature.iter().map(|&v| format_feature(v)));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    let mut inner = w.into_inner().map_err(|e| IdcError::io(path, e.into_error()))?;
    inner.flush().map_err(|e| IdcError::io(path, e))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| IdcError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(BufReader::new(file));
    let mut records = reader.records();

    let header = records
        .next()
        .ok_or_else(|| format_err(1, "missing header"))?
        .map_err(|e| csv_err(path, e))?;
    if header.len() != 4 || &header[0] != MAGIC {
        return Err(format_err(1, format!("expected `{MAGIC},{VERSION},C=<int>,D=<int>`")));
    }
    if &header[1] != VERSION {
        return Err(format_err(1, format!("unsupported version {:?}", &header[1])));
    }
    let num_classes = parse_header_field(header.get(2), "C=")?;
    let dim = parse_header_field(header.get(3), "D=")?;
    if num_classes == 0 || dim == 0 {
        return Err(format_err(1, "C and D must be positive"));
    }

    let columns = records
        .next()
        .ok_or_else(|| format_err(2, "missing column header"))?
        .map_err(|e| csv_err(path, e))?;
    if columns.iter().ne(column_header(dim).iter().map(String::as_str)) {
        return Err(format_err(2, "column header does not match declared D"));
    }

    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 3 + dim {
            return Err(format_err(line, format!("expected {} fields, found {}", 3 + dim, rec.len())));
        }
        let domain = match &rec[1] {
            "source" => Domain::Source,
            "target" => Domain::Target,
            other => return Err(format_err(line, format!("unknown domain {other:?}"))),
        };
        let label: i64 = rec[2]
            .parse()
            .map_err(|_| format_err(line, format!("bad label {:?}", &rec[2])))?;
        match domain {
            Domain::Source if label < 0 || label as usize >= num_classes => {
                return Err(IdcError::LabelOutOfRange { label, num_classes })
            }
            Domain::Target if label != -1 => {
                return Err(format_err(line, "target rows must carry label -1"));
            }
            _ => {}
        }
        let values = (3..rec.len())
            .map(|i| {
                rec[i]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| format_err(line, format!("bad feature {:?}", &rec[i])))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(SampleRecord {
            id: rec[0].to_string(),
            domain,
            label,
            feature: FeatureVector::with_dim(values, dim)?,
        });
    }
    Dataset::from_records(num_classes, dim, rows)
}

pub fn save_target_labels(labels: &TargetLabels, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| IdcError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["id", "label"]).map_err(|e| csv_err(path, e))?;
    for (id, label) in labels.iter() {
        w.write_record([id, &label.to_string()]).map_err(|e| csv_err(path, e))?;
    }
    let mut inner = w.into_inner().map_err(|e| IdcError::io(path, e.into_error()))?;
    inner.flush().map_err(|e| IdcError::io(path, e))
}

pub fn load_target_labels(path: impl AsRef<Path>) -> Result<TargetLabels> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| IdcError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let headers = reader.headers().map_err(|e| csv_err(path, e))?;
    if headers.iter().ne(["id", "label"]) {
        return Err(format_err(1, "expected `id,label` header"));
    }
    let mut pairs = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 2 {
            return Err(format_err(line, "expected 2 fields"));
        }
        let label = rec[1]
            .parse::<usize>()
            .map_err(|_| format_err(line, format!("bad label {:?}", &rec[1])))?;
        pairs.push((rec[0].to_string(), label));
    }
    TargetLabels::from_pairs(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SyntheticShiftSpec};
    use std::fs;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn round_trip_is_lossless() {
        let data = generate(&SyntheticShiftSpec {
            num_classes: 3,
            input_dim: 5,
            samples_per_class: 10,
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        save_embeddings(&data.dataset, &p).unwrap();
        assert_eq!(load_embeddings(&p).unwrap(), data.dataset);

        let lp = dir.path().join("l.csv");
        save_target_labels(&data.target_labels, &lp).unwrap();
        assert_eq!(load_target_labels(&lp).unwrap(), data.target_labels);
    }

    #[test]
    fn header_format_is_exact() {
        let data = generate(&SyntheticShiftSpec {
            num_classes: 2,
            input_dim: 2,
            samples_per_class: 1,
            ..Default::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        save_embeddings(&data.dataset, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("idc-embeddings,v1,C=2,D=2"));
        assert_eq!(lines.next(), Some("id,domain,label,f0,f1"));
        assert_eq!(text.lines().filter(|l| l.contains(",target,-1,")).count(), 2);
    }

    #[test]
    fn label_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "e.csv",
            "idc-embeddings,v1,C=5,D=2\nid,domain,label,f0,f1\na,source,7,1.0,2.0\n",
        );
        assert!(matches!(
            load_embeddings(&p),
            Err(IdcError::LabelOutOfRange { label: 7, num_classes: 5 })
        ));
    }

    #[test]
    fn truncated_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "e.csv",
            "idc-embeddings,v1,C=2,D=2\nid,domain,label,f0,f1\na,source,1,1.0,2.0\nb,target,-1,1.0\n",
        );
        assert!(matches!(load_embeddings(&p), Err(IdcError::FormatError { line: 4, .. })));
    }

    #[test]
    fn duplicate_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "e.csv",
            "idc-embeddings,v1,C=2,D=1\nid,domain,label,f0\na,source,1,1.0\na,target,-1,2.0\n",
        );
        assert!(matches!(load_embeddings(&p), Err(IdcError::DuplicateId(_))));
    }

    #[test]
    fn bad_header_and_target_label() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "e.csv", "nope\n");
        assert!(matches!(load_embeddings(&p), Err(IdcError::FormatError { line: 1, .. })));
        let p = write(
            &dir,
            "f.csv",
            "idc-embeddings,v1,C=2,D=1\nid,domain,label,f0\nt,target,1,1.0\n",
        );
        assert!(matches!(load_embeddings(&p), Err(IdcError::FormatError { line: 3, .. })));
        let p = write(
            &dir,
            "g.csv",
            "idc-embeddings,v1,C=2,D=2\nid,domain,label,f0\n",
        );
        assert!(matches!(load_embeddings(&p), Err(IdcError::FormatError { line: 2, .. })));
    }
}
