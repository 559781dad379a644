//! CSV export and import.
//!
//! Single sets use the header `label,f0,f1,…`; parallel sets use `label,t0,…,s0,…` with the
//! teacher-side columns first. Floats are written in shortest round-trip form.

use std::io::{Read, Write};
use std::path::Path;

use crate::dataset::{LabeledSet, ParallelDataset};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

fn write_rows<W: Write>(
    writer: W,
    header: Vec<String>,
    labels: &[usize],
    blocks: &[&Matrix],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&header)?;
    for (i, label) in labels.iter().enumerate() {
        let mut rec = vec![label.to_string()];
        for m in blocks {
            rec.extend(m.row(i).iter().map(|v| v.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_labeled<W: Write>(set: &LabeledSet, writer: W) -> Result<()> {
    let header = std::iter::once("label".to_owned())
        .chain((0..set.dim()).map(|j| format!("f{j}")))
        .collect();
    write_rows(writer, header, &set.labels, &[&set.features])
}

pub fn write_parallel<W: Write>(data: &ParallelDataset, writer: W) -> Result<()> {
    let header = std::iter::once("label".to_owned())
        .chain((0..data.teacher_inputs().cols()).map(|j| format!("t{j}")))
        .chain((0..data.student_inputs().cols()).map(|j| format!("s{j}")))
        .collect();
    write_rows(
        writer,
        header,
        data.labels(),
        &[data.teacher_inputs(), data.student_inputs()],
    )
}

struct Table {
    header: Vec<String>,
    labels: Vec<usize>,
    values: Vec<Vec<f64>>,
}

fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.first().map(String::as_str) != Some("label") {
        return Err(Error::DataFormat("first column must be `label`".to_owned()));
    }
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |field: &str| Error::DataFormat(format!("row {}: cannot parse `{field}`", line + 1));
        labels.push(rec[0].trim().parse::<usize>().map_err(|_| bad(&rec[0]))?);
        let row = rec
            .iter()
            .skip(1)
            .map(|f| f.trim().parse::<f64>().map_err(|_| bad(f)))
            .collect::<Result<Vec<_>>>()?;
        values.push(row);
    }
    Ok(Table {
        header,
        labels,
        values,
    })
}

fn columns(values: &[Vec<f64>], range: std::ops::Range<usize>) -> Result<Matrix> {
    let cols = range.len();
    let mut data = Vec::with_capacity(values.len() * cols);
    for row in values {
        data.extend_from_slice(&row[range.clone()]);
    }
    Matrix::from_vec(values.len(), cols, data)
}

pub fn read_labeled<R: Read>(reader: R) -> Result<LabeledSet> {
    let t = read_table(reader)?;
    for (j, h) in t.header.iter().skip(1).enumerate() {
        if *h != format!("f{j}") {
            return Err(Error::DataFormat(format!("unexpected column `{h}`")));
        }
    }
    let d = t.header.len() - 1;
    LabeledSet::new(columns(&t.values, 0..d)?, t.labels)
}

pub fn read_parallel<R: Read>(reader: R) -> Result<ParallelDataset> {
    let t = read_table(reader)?;
    let dt = t.header.iter().filter(|h| h.starts_with('t')).count();
    let ds = t.header.len() - 1 - dt;
    let expected = (0..dt)
        .map(|j| format!("t{j}"))
        .chain((0..ds).map(|j| format!("s{j}")));
    for (h, e) in t.header.iter().skip(1).zip(expected) {
        if *h != e {
            return Err(Error::DataFormat(format!("unexpected column `{h}`, wanted `{e}`")));
        }
    }
    ParallelDataset::new(
        columns(&t.values, 0..dt)?,
        columns(&t.values, dt..dt + ds)?,
        t.labels,
    )
}

pub fn save_labeled(set: &LabeledSet, path: &Path) -> Result<()> {
    write_labeled(set, std::fs::File::create(path)?)
}

pub fn save_parallel(data: &ParallelDataset, path: &Path) -> Result<()> {
    write_parallel(data, std::fs::File::create(path)?)
}

pub fn load_labeled(path: &Path) -> Result<LabeledSet> {
    read_labeled(std::fs::File::open(path)?)
}

pub fn load_parallel(path: &Path) -> Result<ParallelDataset> {
    read_parallel(std::fs::File::open(path)?)
}
