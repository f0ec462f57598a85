use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, Sample, Split, N_FEATURES};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 13] = [
    "x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "w", "t", "y", "truth_p0", "truth_eta",
];

/// `data/syn1_train.csv` -> `data/syn1_train.meta`
pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta")
}

/// Write the dataset as CSV plus a `.meta` sidecar holding `split`, `rct`
/// and any `extra` key=value pairs. Truth columns are written only when
/// every row carries them.
pub fn save_csv(dataset: &Dataset, path: &Path, extra: &[(String, String)]) -> Result<()> {
    let with_truth = dataset.samples.iter().all(|s| s.truth_p0.is_some());
    let ncols = if with_truth { 13 } else { 11 };
    let io = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(io)?;
    w.write_record(&CSV_HEADER[..ncols]).map_err(io)?;
    let mut record: Vec<String> = Vec::with_capacity(ncols);
    for s in &dataset.samples {
        record.clear();
        record.extend(s.x.iter().map(|v| format!("{v}")));
        record.push(u8::from(s.w).to_string());
        record.push(format!("{}", s.t));
        record.push(u8::from(s.y).to_string());
        if with_truth {
            record.push(format!("{}", s.truth_p0.unwrap_or_default()));
            record.push(format!("{}", s.truth_eta.unwrap_or_default()));
        }
        w.write_record(&record).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let mut meta = format!("split={}\nrct={}\n", dataset.split, dataset.rct);
    for (k, v) in extra {
        meta.push_str(&format!("{k}={v}\n"));
    }
    let mpath = meta_path(path);
    fs::write(&mpath, meta).map_err(|e| Error::io(&mpath, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Load a dataset. `split`/`rct` come from the sidecar when present,
/// otherwise default to an observational training split.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::io(path, e.into()))?;
    let header = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let with_truth = match names.len() {
        11 => false,
        13 => true,
        n => return Err(parse_err(path, 1, format!("expected 11 or 13 columns, found {n}"))),
    };
    if names[..] != CSV_HEADER[..names.len()] {
        return Err(parse_err(path, 1, format!("unexpected header {names:?}")));
    }

    let mut samples = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(path, line, e.to_string()))?;
        if rec.len() != names.len() {
            return Err(parse_err(path, line, format!("expected {} fields, found {}", names.len(), rec.len())));
        }
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .trim()
                .parse::<f64>()
                .map_err(|_| parse_err(path, line, format!("column {}: bad number {:?}", CSV_HEADER[k], &rec[k])))
        };
        let flag = |k: usize| -> Result<bool> {
            match rec[k].trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(parse_err(path, line, format!("column {}: expected 0 or 1, got {other:?}", CSV_HEADER[k]))),
            }
        };
        let mut x = [0.0; N_FEATURES];
        for (k, v) in x.iter_mut().enumerate() {
            *v = num(k)?;
        }
        let sample = Sample {
            x,
            w: flag(8)?,
            t: num(9)?,
            y: flag(10)?,
            truth_p0: if with_truth { Some(num(11)?) } else { None },
            truth_eta: if with_truth { Some(num(12)?) } else { None },
        };
        sample
            .validate()
            .map_err(|message| Error::Invariant { line, message })?;
        samples.push(sample);
    }

    let (mut split, mut rct) = (Split::Train, false);
    let mpath = meta_path(path);
    if let Ok(text) = fs::read_to_string(&mpath) {
        for line in text.lines() {
            match line.split_once('=') {
                Some(("split", "test")) => split = Split::Test,
                Some(("split", "train")) => split = Split::Train,
                Some(("rct", v)) => rct = v.trim() == "true",
                _ => {}
            }
        }
    }
    Ok(Dataset { samples, split, rct })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, SynSpec};

    #[test]
    fn roundtrip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let b = generate(&SynSpec { n_train: 300, n_test: 100, ..SynSpec::syn3() }).unwrap();
        for d in [&b.train, &b.test] {
            let p = dir.path().join(format!("{}.csv", d.split));
            save_csv(d, &p, &[]).unwrap();
            assert_eq!(&load_csv(&p).unwrap(), d);
        }
    }

    #[test]
    fn rejects_intensity_on_control_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "x1,x2,x3,x4,x5,x6,x7,x8,w,t,y\n0,0,0,0,0,0,0,0,0,0,1\n0,0,0,0,0,0,0,0,0,1.0,1\n").unwrap();
        match load_csv(&p) {
            Err(Error::Invariant { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    #[test]
    fn missing_truth_columns_load_as_absent() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("plain.csv");
        fs::write(&p, "x1,x2,x3,x4,x5,x6,x7,x8,w,t,y\n1,2,3,4,5,6,7,8,1,2.5,0\n").unwrap();
        let d = load_csv(&p).unwrap();
        assert_eq!(d.len(), 1);
        assert!(d.samples[0].truth_p0.is_none() && d.samples[0].truth_eta.is_none());
        assert!(!d.has_truth());
        assert_eq!(d.split, Split::Train);
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("broken.csv");
        fs::write(&p, "x1,x2,x3,x4,x5,x6,x7,x8,w,t,y\n1,2,3,4,5,6,7,8,1,2.5,0\n1,2,3,abc,5,6,7,8,1,2.5,0\n").unwrap();
        match load_csv(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(matches!(load_csv(&p), Err(Error::Parse { line: 1, .. })));
    }
}
