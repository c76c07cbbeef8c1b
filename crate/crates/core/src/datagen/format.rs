//! Little-endian binary dataset files and their CSV manifests.
//!
//! Layout: magic, u16 version, u8 pipeline kind, u32 channel length,
//! u32 sample count, then per sample: u8 label, u8 system, f64 parameter,
//! u64 seed, u8 IC count, f64 ICs, f32 channel values.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::{ClassLabel, DatagenError, Dataset, Sample};
use crate::preprocess::{PipelineKind, PipelineSpec};
use crate::systems::SystemKind;

pub const DATASET_MAGIC: &[u8; 4] = b"FBDS";
pub const DATASET_VERSION: u16 = 1;

/// Writes `ds` to `path`. Only the pipeline kind and channel length of the
/// spec are stored; the remaining spec fields read back as defaults.
pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<(), DatagenError> {
    let mut w = BufWriter::new(File::create(path)?);
    let len = ds.pipeline.resample_len;
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&[ds.pipeline.kind.code()])?;
    w.write_all(&u32_of(len)?.to_le_bytes())?;
    w.write_all(&u32_of(ds.samples.len())?.to_le_bytes())?;
    for (i, s) in ds.samples.iter().enumerate() {
        if s.channel.len() != len {
            return Err(DatagenError::Malformed(format!(
                "sample {i} has {} values, expected {len}",
                s.channel.len()
            )));
        }
        let n_ic = u8::try_from(s.ic.len())
            .map_err(|_| DatagenError::Malformed(format!("sample {i} has too many ICs")))?;
        w.write_all(&[s.label as u8, s.system.code()])?;
        w.write_all(&s.param.to_le_bytes())?;
        w.write_all(&s.seed.to_le_bytes())?;
        w.write_all(&[n_ic])?;
        for x in &s.ic {
            w.write_all(&x.to_le_bytes())?;
        }
        for v in &s.channel {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn u32_of(n: usize) -> Result<u32, DatagenError> {
    u32::try_from(n).map_err(|_| DatagenError::Malformed(format!("{n} does not fit in u32")))
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], DatagenError> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => DatagenError::Truncated,
            _ => DatagenError::Io(e),
        })?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8, DatagenError> {
        Ok(self.bytes::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, DatagenError> {
        Ok(u16::from_le_bytes(self.bytes()?))
    }

    fn u32(&mut self) -> Result<u32, DatagenError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64, DatagenError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64, DatagenError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn f32(&mut self) -> Result<f32, DatagenError> {
        Ok(f32::from_le_bytes(self.bytes()?))
    }
}

pub fn read_dataset(path: &Path) -> Result<Dataset, DatagenError> {
    let mut r = Reader {
        inner: BufReader::new(File::open(path)?),
    };
    let magic = r.bytes::<4>().map_err(|e| match e {
        DatagenError::Truncated => DatagenError::BadMagic,
        e => e,
    })?;
    if &magic != DATASET_MAGIC {
        return Err(DatagenError::BadMagic);
    }
    let version = r.u16()?;
    if version != DATASET_VERSION {
        return Err(DatagenError::VersionMismatch(version));
    }
    let code = r.u8()?;
    let kind = PipelineKind::from_code(code)
        .ok_or_else(|| DatagenError::Malformed(format!("unknown pipeline code {code}")))?;
    let len = r.u32()? as usize;
    let n = r.u32()? as usize;

    let mut samples = Vec::with_capacity(n.min(1 << 20));
    for i in 0..n {
        let lc = r.u8()?;
        let label = ClassLabel::from_index(lc as usize)
            .ok_or_else(|| DatagenError::Malformed(format!("sample {i}: label code {lc}")))?;
        let sc = r.u8()?;
        let system = SystemKind::from_code(sc)
            .ok_or_else(|| DatagenError::Malformed(format!("sample {i}: system code {sc}")))?;
        let param = r.f64()?;
        let seed = r.u64()?;
        let n_ic = r.u8()? as usize;
        let ic = (0..n_ic).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let channel = (0..len).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
        samples.push(Sample {
            channel,
            label,
            system,
            param,
            seed,
            ic,
        });
    }
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing)? != 0 {
        return Err(DatagenError::Malformed("trailing bytes after last sample".into()));
    }
    Ok(Dataset {
        pipeline: PipelineSpec {
            resample_len: len,
            ..PipelineSpec::new(kind)
        },
        samples,
    })
}

#[derive(serde::Serialize)]
struct ManifestRow<'a> {
    index: usize,
    system: &'a str,
    label: &'a str,
    parameter: f64,
    fold_value: f64,
    seed: u64,
}

/// One CSV row per sample: index, system, label, parameter, fold value, seed.
pub fn write_manifest(ds: &Dataset, fold_value: f64, path: &Path) -> Result<(), DatagenError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for (index, s) in ds.samples.iter().enumerate() {
        w.serialize(ManifestRow {
            index,
            system: s.system.short_name(),
            label: s.label.name(),
            parameter: s.param,
            fold_value,
            seed: s.seed,
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> DatagenError {
    DatagenError::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset() -> Dataset {
        let spec = PipelineSpec {
            resample_len: 8,
            ..PipelineSpec::new(PipelineKind::PolarLogMovMean)
        };
        let samples = (0..5)
            .map(|i| Sample {
                channel: (0..8).map(|j| (i * 8 + j) as f32 * -0.37).collect(),
                label: ClassLabel::from_index(i % 3).unwrap(),
                system: SystemKind::ALL[i % 4],
                param: 0.1 * i as f64 + 1e-17,
                seed: u64::MAX - i as u64,
                ic: vec![1.25; 2 + 2 * (i % 2)],
            })
            .collect();
        Dataset {
            pipeline: spec,
            samples,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.fbds");
        let ds = dataset();
        write_dataset(&ds, &path).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.fbds");
        write_dataset(&dataset(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(read_dataset(&path), Err(DatagenError::BadMagic)));

        let mut bad = bytes.clone();
        bad[4] = 9;
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(read_dataset(&path), Err(DatagenError::VersionMismatch(9))));

        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_dataset(&path), Err(DatagenError::Truncated)));

        std::fs::write(&path, b"FB").unwrap();
        assert!(matches!(read_dataset(&path), Err(DatagenError::BadMagic)));

        assert!(matches!(
            read_dataset(&dir.path().join("missing")),
            Err(DatagenError::Io(_))
        ));
    }

    #[test]
    fn manifest_lists_every_sample() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_manifest(&dataset(), 2.2222, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "index,system,label,parameter,fold_value,seed");
        assert_eq!(lines.len(), 6);
        assert!(lines[2].starts_with("1,mob,close,"));
    }
}
