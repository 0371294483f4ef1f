//! `spdset v1` (text) and `spdb v1` (binary) dataset containers.
//!
//! Text layout: a header line `spdset v1 <n> <d> <M>`, then for each sample
//! a line holding its label followed by `d` lines of `d` floats written with
//! 17 significant digits (`{:.16e}`), which round-trips every `f64` exactly.
//!
//! Binary layout: the ASCII header line `spdb v1 <n> <d> <M>\n`, then for each
//! sample a little-endian `u32` label followed by `d·d` little-endian `f64`
//! entries in row-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::spd::make_spd;

pub fn write_spdset<W: Write>(dataset: &LabeledDataset, mut out: W) -> Result<()> {
    let d = dataset.dim();
    writeln!(out, "spdset v1 {} {} {}", dataset.len(), d, dataset.num_classes())?;
    for (s, &label) in dataset.samples().iter().zip(dataset.labels()) {
        writeln!(out, "{label}")?;
        let e = s.entries();
        for r in 0..d {
            let row: Vec<String> = (0..d).map(|c| format!("{:.16e}", e[(r, c)])).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
    }
    out.flush()?;
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_header(line: &str, magic: &str, line_no: usize) -> Result<(usize, usize, usize)> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != magic || fields[1] != "v1" {
        return Err(parse_err(line_no, format!("expected '{magic} v1 <n> <d> <M>', got '{line}'")));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| parse_err(line_no, format!("bad integer '{s}'")))
    };
    Ok((num(fields[2])?, num(fields[3])?, num(fields[4])?))
}

fn finish(samples: Vec<DMatrix<f64>>, labels: Vec<usize>, declared_classes: usize) -> Result<LabeledDataset> {
    let spd = samples.into_iter().map(make_spd).collect::<Result<Vec<_>>>()?;
    let ds = LabeledDataset::new(spd, labels)?;
    if ds.num_classes() != declared_classes {
        return Err(parse_err(
            1,
            format!("header declares {declared_classes} classes, found {}", ds.num_classes()),
        ));
    }
    Ok(ds)
}

pub fn read_spdset<R: BufRead>(input: R) -> Result<LabeledDataset> {
    let mut lines = input
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((no, Ok(l))) => Ok((no, l)),
            Some((_, Err(e))) => Err(e.into()),
            None => Err(parse_err(0, format!("unexpected end of file, expected {what}"))),
        }
    };
    let (no, header) = next("header")?;
    let (n, d, m) = parse_header(header.trim(), "spdset", no)?;
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let (no, l) = next("label")?;
        let label = l
            .trim()
            .parse::<usize>()
            .map_err(|_| parse_err(no, format!("bad label '{}'", l.trim())))?;
        let mut entries = Vec::with_capacity(d * d);
        for _ in 0..d {
            let (no, row) = next("matrix row")?;
            let before = entries.len();
            for tok in row.split_whitespace() {
                entries.push(
                    tok.parse::<f64>()
                        .map_err(|_| parse_err(no, format!("bad float '{tok}'")))?,
                );
            }
            if entries.len() - before != d {
                return Err(parse_err(no, format!("expected {d} values, got {}", entries.len() - before)));
            }
        }
        labels.push(label);
        samples.push(DMatrix::from_row_slice(d, d, &entries));
    }
    if let Some((no, Ok(extra))) = lines.next() {
        return Err(parse_err(no, format!("trailing content '{}'", extra.trim())));
    }
    finish(samples, labels, m)
}

pub fn write_spdb<W: Write>(dataset: &LabeledDataset, mut out: W) -> Result<()> {
    let d = dataset.dim();
    out.write_all(format!("spdb v1 {} {} {}\n", dataset.len(), d, dataset.num_classes()).as_bytes())?;
    for (s, &label) in dataset.samples().iter().zip(dataset.labels()) {
        out.write_all(&(label as u32).to_le_bytes())?;
        let e = s.entries();
        for r in 0..d {
            for c in 0..d {
                out.write_all(&e[(r, c)].to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_spdb<R: Read>(mut input: R) -> Result<LabeledDataset> {
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        input.read_exact(&mut byte)?;
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
        if header.len() > 256 {
            return Err(parse_err(1, "header line too long"));
        }
    }
    let header = String::from_utf8(header).map_err(|_| parse_err(1, "header is not UTF-8"))?;
    let (n, d, m) = parse_header(header.trim(), "spdb", 1)?;
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut word = [0u8; 4];
    let mut float = [0u8; 8];
    for _ in 0..n {
        input.read_exact(&mut word)?;
        labels.push(u32::from_le_bytes(word) as usize);
        let mut entries = Vec::with_capacity(d * d);
        for _ in 0..d * d {
            input.read_exact(&mut float)?;
            entries.push(f64::from_le_bytes(float));
        }
        samples.push(DMatrix::from_row_slice(d, d, &entries));
    }
    finish(samples, labels, m)
}

/// Reads either format, chosen by the leading magic word.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let mut file = BufReader::new(File::open(path)?);
    let head = file.fill_buf()?;
    if head.starts_with(b"spdb") {
        read_spdb(file)
    } else {
        read_spdset(file)
    }
}
