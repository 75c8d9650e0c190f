use std::fs;
use std::path::{Path, PathBuf};

use super::{Corruption, Instance, Split, ZslDataset};
use crate::error::{Error, Result};
use crate::inference::ClassSemanticMatrix;
use crate::numgraph::Tensor;

pub const MATRIX_MAGIC: &[u8; 8] = b"CRSTMAT1";
const BINARY_HEADER: usize = 16;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Comma-separated rows, one per line, shortest round-trip decimal form.
pub fn write_text_matrix(path: &Path, m: &Tensor) -> Result<()> {
    let mut out = String::new();
    for r in 0..m.rows() {
        let row: Vec<String> = m.row_slice(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

fn parse_text_matrix(path: &Path, text: &str) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut cols: Option<usize> = None;
    let mut rows = 0;
    let mut offset = 0u64;
    for (idx, line) in text.split('\n').enumerate() {
        let line_offset = offset;
        offset += line.len() as u64 + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            if text[line_offset as usize..].trim().is_empty() {
                break;
            }
            return Err(Error::format(path, line_offset, format!("line {}: empty row", idx + 1)));
        }
        let mut n = 0;
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::format(path, line_offset, format!("line {}: `{field}` is not a number", idx + 1))
            })?;
            data.push(v);
            n += 1;
        }
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(Error::format(
                    path,
                    line_offset,
                    format!("line {}: expected {c} values, found {n}", idx + 1),
                ))
            }
            Some(_) => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::format(path, 0, "matrix file has no rows"))?;
    Tensor::new(rows, cols, data)
}

pub fn read_text_matrix(path: &Path) -> Result<Tensor> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| Error::format(path, e.valid_up_to() as u64, "text matrix is not valid UTF-8"))?;
    parse_text_matrix(path, text)
}

/// Magic, `u32` LE row and column counts, then `f32` LE values row-major.
pub fn write_binary_matrix(path: &Path, m: &Tensor) -> Result<()> {
    let rows = u32::try_from(m.rows()).map_err(|_| Error::domain("matrix too tall for the binary format"))?;
    let cols = u32::try_from(m.cols()).map_err(|_| Error::domain("matrix too wide for the binary format"))?;
    let mut out = Vec::with_capacity(BINARY_HEADER + 4 * m.len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for &v in m.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    write_bytes(path, &out)
}

fn parse_binary_matrix(path: &Path, bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < MATRIX_MAGIC.len() || &bytes[..MATRIX_MAGIC.len()] != MATRIX_MAGIC {
        return Err(Error::format(path, 0, "bad magic, expected `CRSTMAT1`"));
    }
    if bytes.len() < BINARY_HEADER {
        return Err(Error::format(path, bytes.len() as u64, "truncated header: missing extents"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (rows, cols) = (word(8), word(12));
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(BINARY_HEADER))
        .ok_or_else(|| Error::format(path, 8, format!("extents {rows}×{cols} overflow")))?;
    if bytes.len() < expected {
        return Err(Error::format(
            path,
            bytes.len() as u64,
            format!("truncated data: {rows}×{cols} needs {expected} bytes, file has {}", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(Error::format(
            path,
            expected as u64,
            format!("{} trailing bytes after {rows}×{cols} values", bytes.len() - expected),
        ));
    }
    let data = bytes[BINARY_HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Tensor::new(rows, cols, data)
}

pub fn read_binary_matrix(path: &Path) -> Result<Tensor> {
    parse_binary_matrix(path, &read_bytes(path)?)
}

/// Reads either matrix format. Files named `*.bin` or starting with the
/// magic bytes are binary; anything else is text.
pub fn load_matrix(path: &Path) -> Result<Tensor> {
    let bytes = read_bytes(path)?;
    let binary = path.extension().is_some_and(|e| e == "bin") || bytes.starts_with(MATRIX_MAGIC);
    if binary {
        parse_binary_matrix(path, &bytes)
    } else {
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::format(path, e.valid_up_to() as u64, "text matrix is not valid UTF-8"))?;
        parse_text_matrix(path, text)
    }
}

fn feature_path(dir: &Path, id: usize) -> PathBuf {
    dir.join("features").join(format!("{id}.bin"))
}

/// Writes `semantics.csv`, `splits.csv`, `labels.csv`, `features/<id>.bin`
/// and, when any instance is corrupted, `corruption.csv`.
pub fn save(dataset: &ZslDataset, dir: &Path) -> Result<()> {
    let features = dir.join("features");
    fs::create_dir_all(&features).map_err(|e| Error::io(&features, e))?;
    write_text_matrix(&dir.join("semantics.csv"), dataset.semantics.z())?;

    let mut splits = String::from("class_id,seen_flag\n");
    for c in 0..dataset.semantics.class_count() {
        splits.push_str(&format!("{c},{}\n", u8::from(!dataset.semantics.is_unseen(c))));
    }
    write_bytes(&dir.join("splits.csv"), splits.as_bytes())?;

    let mut labels = String::from("instance_id,class_id,split\n");
    let mut corruption = String::from("instance_id,stream\n");
    let mut any_corrupted = false;
    for inst in &dataset.instances {
        labels.push_str(&format!("{},{},{}\n", inst.id, inst.label, inst.split));
        if inst.corruption != Corruption::Clean {
            any_corrupted = true;
            corruption.push_str(&format!("{},{}\n", inst.id, inst.corruption));
        }
        write_binary_matrix(&feature_path(dir, inst.id), &inst.regions)?;
    }
    write_bytes(&dir.join("labels.csv"), labels.as_bytes())?;
    let corruption_path = dir.join("corruption.csv");
    if any_corrupted {
        write_bytes(&corruption_path, corruption.as_bytes())?;
    } else if corruption_path.exists() {
        fs::remove_file(&corruption_path).map_err(|e| Error::io(&corruption_path, e))?;
    }
    Ok(())
}

/// Parsed rows of a headed CSV, each with its byte offset and line number.
fn csv_rows(path: &Path, header: &str) -> Result<Vec<(u64, usize, Vec<String>)>> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| Error::format(path, e.valid_up_to() as u64, "file is not valid UTF-8"))?;
    let mut rows = Vec::new();
    let mut offset = 0u64;
    let width = header.split(',').count();
    for (idx, line) in text.split('\n').enumerate() {
        let at = offset;
        offset += line.len() as u64 + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if idx == 0 {
            if line != header {
                return Err(Error::format(path, 0, format!("expected header `{header}`")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
        if fields.len() != width {
            return Err(Error::format(
                path,
                at,
                format!("line {}: expected {width} fields, found {}", idx + 1, fields.len()),
            ));
        }
        rows.push((at, idx + 1, fields));
    }
    Ok(rows)
}

fn field<T: std::str::FromStr>(path: &Path, at: u64, line: usize, value: &str, what: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::format(path, at, format!("line {line}: bad {what} `{value}`")))
}

/// Reads a directory written by [`save`].
pub fn load(dir: &Path) -> Result<ZslDataset> {
    if !dir.is_dir() {
        return Err(Error::format(dir, 0, "dataset directory does not exist"));
    }
    let z = read_text_matrix(&dir.join("semantics.csv"))?;

    let splits_path = dir.join("splits.csv");
    let mut seen = vec![None; z.rows()];
    for (at, line, f) in csv_rows(&splits_path, "class_id,seen_flag")? {
        let c: usize = field(&splits_path, at, line, &f[0], "class id")?;
        let flag: u8 = field(&splits_path, at, line, &f[1], "seen flag")?;
        if c >= z.rows() || flag > 1 {
            return Err(Error::format(&splits_path, at, format!("line {line}: class {c} flag {flag} out of range")));
        }
        seen[c] = Some(flag == 1);
    }
    let seen: Vec<bool> = seen
        .into_iter()
        .enumerate()
        .map(|(c, s)| s.ok_or_else(|| Error::format(&splits_path, 0, format!("class {c} has no split"))))
        .collect::<Result<_>>()?;
    let semantics = ClassSemanticMatrix::new(z, &seen).map_err(|e| Error::format(&splits_path, 0, e.to_string()))?;

    let corruption_path = dir.join("corruption.csv");
    let mut corrupted = std::collections::HashMap::new();
    if corruption_path.exists() {
        for (at, line, f) in csv_rows(&corruption_path, "instance_id,stream")? {
            let id: usize = field(&corruption_path, at, line, &f[0], "instance id")?;
            let stream: Corruption = field(&corruption_path, at, line, &f[1], "stream")?;
            corrupted.insert(id, stream);
        }
    }

    let labels_path = dir.join("labels.csv");
    let mut instances = Vec::new();
    for (at, line, f) in csv_rows(&labels_path, "instance_id,class_id,split")? {
        let id: usize = field(&labels_path, at, line, &f[0], "instance id")?;
        let label: usize = field(&labels_path, at, line, &f[1], "class id")?;
        let split: Split = field(&labels_path, at, line, &f[2], "split")?;
        let regions = read_binary_matrix(&feature_path(dir, id))?;
        instances.push(Instance {
            id,
            regions,
            label,
            split,
            corruption: corrupted.get(&id).copied().unwrap_or_default(),
        });
    }
    let ds = ZslDataset { semantics, instances };
    ds.validate().map_err(|e| Error::format(&labels_path, 0, e.to_string()))?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::super::{generate, SynthConfig};
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn text_identity() {
        let d = tmp();
        let p = d.path().join("m.csv");
        fs::write(&p, "1,0\n0,1").unwrap();
        let m = load_matrix(&p).unwrap();
        assert_eq!(m, Tensor::identity(2));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let d = tmp();
        let p = d.path().join("m.csv");
        let m = Tensor::from_rows(&[vec![0.1, -1e-300, 1.0 / 3.0], vec![2.5e17, 0.0, -7.0]]).unwrap();
        write_text_matrix(&p, &m).unwrap();
        assert_eq!(read_text_matrix(&p).unwrap(), m);
    }

    #[test]
    fn ragged_text_names_the_line() {
        let d = tmp();
        let p = d.path().join("m.csv");
        fs::write(&p, "1,2,3\n4,5,6\n7,8\n").unwrap();
        let e = load_matrix(&p).unwrap_err();
        match e {
            Error::Format { offset, ref message, .. } => {
                assert_eq!(offset, 12);
                assert!(message.contains("line 3"), "{message}");
            }
            other => panic!("{other}"),
        }
        fs::write(&p, "1,x\n").unwrap();
        assert!(matches!(load_matrix(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn binary_values_exact() {
        let d = tmp();
        let p = d.path().join("m.bin");
        let mut bytes = MATRIX_MAGIC.to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        for v in [1.5f32, -2.0, 0.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&p, &bytes).unwrap();
        let m = load_matrix(&p).unwrap();
        assert_eq!(m.shape(), [1, 3]);
        assert_eq!(m.data(), &[1.5, -2.0, 0.0]);
        write_binary_matrix(&p, &m).unwrap();
        assert_eq!(fs::read(&p).unwrap(), bytes);
    }

    #[test]
    fn malformed_binary_is_a_format_error() {
        let d = tmp();
        let p = d.path().join("m.bin");
        write_binary_matrix(&p, &Tensor::full(2, 3, 0.5)).unwrap();
        let good = fs::read(&p).unwrap();

        fs::write(&p, &good[..good.len() - 2]).unwrap();
        assert!(matches!(load_matrix(&p), Err(Error::Format { offset: 38, .. })));

        let mut bad = good.clone();
        bad[0] = b'X';
        fs::write(&p, &bad).unwrap();
        let e = load_matrix(&p).unwrap_err();
        assert!(e.to_string().contains("CRSTMAT1"), "{e}");

        fs::write(&p, &good[..10]).unwrap();
        assert!(matches!(load_matrix(&p), Err(Error::Format { .. })));

        let mut long = good.clone();
        long.push(0);
        fs::write(&p, &long).unwrap();
        assert!(matches!(load_matrix(&p), Err(Error::Format { offset: 40, .. })));

        let mut huge = good[..16].to_vec();
        huge[8..16].copy_from_slice(&[0xff; 8]);
        fs::write(&p, &huge).unwrap();
        assert!(matches!(load_matrix(&p), Err(Error::Format { .. })));
    }

    fn small() -> SynthConfig {
        SynthConfig {
            class_count: 6,
            seen_count: 4,
            attribute_count: 8,
            regions_per_instance: 4,
            feature_width: 5,
            instances_per_class: 4,
            conflict_rate: 0.4,
            seed: 9,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn dataset_round_trip() {
        let d = tmp();
        let ds = generate(&small()).unwrap();
        save(&ds, d.path()).unwrap();
        for f in ["semantics.csv", "splits.csv", "labels.csv", "features/0.bin", "corruption.csv"] {
            assert!(d.path().join(f).exists(), "{f}");
        }
        assert_eq!(load(d.path()).unwrap(), ds);
    }

    #[test]
    fn clean_dataset_has_no_corruption_file() {
        let d = tmp();
        let ds = generate(&SynthConfig {
            conflict_rate: 0.0,
            ..small()
        })
        .unwrap();
        save(&ds, d.path()).unwrap();
        assert!(!d.path().join("corruption.csv").exists());
        assert_eq!(load(d.path()).unwrap(), ds);
    }

    #[test]
    fn broken_directories() {
        let d = tmp();
        assert!(matches!(load(&d.path().join("missing")), Err(Error::Format { .. })));
        let ds = generate(&small()).unwrap();
        save(&ds, d.path()).unwrap();
        let f = d.path().join("features/3.bin");
        let bytes = fs::read(&f).unwrap();
        fs::write(&f, &bytes[..20]).unwrap();
        assert!(matches!(load(d.path()), Err(Error::Format { .. })));
        fs::write(&f, &bytes).unwrap();
        fs::write(d.path().join("labels.csv"), "instance_id,class_id,split\n0,0,somewhere\n").unwrap();
        let e = load(d.path()).unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }
}
