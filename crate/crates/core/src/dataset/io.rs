use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{self, ByteReader};
use crate::dataset::spec::{Dataset, FcSample, SiteSamples, LABEL_MDD, LABEL_NC};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SITE_MAGIC: &[u8; 4] = b"FCDS";
pub const SITE_VERSION: u16 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub site_id: u16,
    pub file: String,
    pub n_mdd: usize,
    pub n_nc: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub n: usize,
    pub seed: u64,
    pub sites: Vec<ManifestEntry>,
}

pub fn site_file_name(site_id: u16) -> String {
    format!("site{site_id}.fcds")
}

pub fn encode_site(n: usize, samples: &[FcSample]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(14 + samples.len() * (4 + 8 * n * n));
    out.extend_from_slice(SITE_MAGIC);
    codec::put_u16(&mut out, SITE_VERSION);
    codec::put_len(&mut out, n)?;
    codec::put_len(&mut out, samples.len())?;
    for s in samples {
        if s.matrix.shape() != [n, n] {
            return Err(Error::dim(format!(
                "site {} sample has shape {:?}, file holds {n}x{n}",
                s.site_id,
                s.matrix.shape()
            )));
        }
        codec::put_u8(&mut out, s.label);
        codec::put_u8(&mut out, s.subtype);
        codec::put_u16(&mut out, s.site_id);
        for &v in s.matrix.data() {
            codec::put_f64(&mut out, v);
        }
    }
    Ok(out)
}

/// Returns `(n, samples)`.
pub fn decode_site(name: &str, bytes: &[u8]) -> Result<(usize, Vec<FcSample>)> {
    let mut r = ByteReader::new(name, bytes);
    r.expect_magic(SITE_MAGIC)?;
    let version = r.u16()?;
    if version != SITE_VERSION {
        return Err(r.error(format!("unsupported site file version {version}")));
    }
    let n = r.u32()? as usize;
    if n < 2 {
        return Err(r.error(format!("ROI count {n} too small")));
    }
    let count = r.u32()? as usize;
    let mut samples = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let at = r.position();
        let label = r.u8()?;
        if label != LABEL_MDD && label != LABEL_NC {
            return Err(Error::Format {
                source_name: name.to_string(),
                offset: at,
                message: format!("label {label} is not 0 or 1"),
            });
        }
        let subtype = r.u8()?;
        let site_id = r.u16()?;
        let data = (0..n * n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        samples.push(FcSample {
            matrix: Tensor::matrix(n, n, data)?,
            label,
            subtype,
            site_id,
        });
    }
    r.expect_end()?;
    Ok((n, samples))
}

pub fn write_dataset(data: &Dataset, dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(data.sites.len());
    for site in &data.sites {
        let file = site_file_name(site.site_id);
        let path = dir.join(&file);
        std::fs::write(&path, encode_site(data.n, &site.samples)?).map_err(|e| Error::io(&path, e))?;
        entries.push(ManifestEntry {
            site_id: site.site_id,
            file,
            n_mdd: site.count_label(LABEL_MDD),
            n_nc: site.count_label(LABEL_NC),
        });
    }
    let manifest = Manifest {
        n: data.n,
        seed: data.seed,
        sites: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path, source: e })
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let mut sites = Vec::with_capacity(manifest.sites.len());
    for entry in &manifest.sites {
        let path = dir.join(&entry.file);
        if !path.is_file() {
            return Err(Error::Manifest(format!(
                "site {} lists {} which does not exist",
                entry.site_id,
                path.display()
            )));
        }
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let (n, samples) = decode_site(&path.display().to_string(), &bytes)?;
        if n != manifest.n {
            return Err(Error::Manifest(format!(
                "{} holds n = {n}, manifest says {}",
                path.display(),
                manifest.n
            )));
        }
        let site = SiteSamples {
            site_id: entry.site_id,
            samples,
        };
        if site.samples.iter().any(|s| s.site_id != entry.site_id)
            || site.count_label(LABEL_MDD) != entry.n_mdd
            || site.count_label(LABEL_NC) != entry.n_nc
        {
            return Err(Error::Manifest(format!(
                "{} does not match its manifest entry {entry:?}",
                path.display()
            )));
        }
        sites.push(site);
    }
    Ok(Dataset {
        n: manifest.n,
        seed: manifest.seed,
        sites,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate::generate_dataset;
    use crate::dataset::spec::DatasetSpec;

    fn small() -> Dataset {
        let mut spec = DatasetSpec::default_layout(6, 9);
        for s in &mut spec.sites {
            s.n_mdd = 3;
            s.n_nc = 2;
        }
        generate_dataset(&spec).unwrap()
    }

    #[test]
    fn empty_dataset_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let data = Dataset {
            n: 6,
            seed: 1,
            sites: vec![],
        };
        let m = write_dataset(&data, dir.path()).unwrap();
        assert!(m.sites.is_empty());
        assert_eq!(read_dataset(dir.path()).unwrap(), data);
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let data = small();
        write_dataset(&data, dir.path()).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), data);
    }

    #[test]
    fn record_layout() {
        let data = small();
        let bytes = encode_site(6, &data.sites[0].samples).unwrap();
        assert_eq!(&bytes[..4], b"FCDS");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 6);
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 5);
        assert_eq!(bytes[14], 1);
        assert_eq!(bytes.len(), 14 + 5 * (4 + 8 * 36));
    }

    #[test]
    fn truncated_file_names_itself() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&small(), dir.path()).unwrap();
        let path = dir.path().join(site_file_name(2));
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        match read_dataset(dir.path()).unwrap_err() {
            Error::Format { source_name, .. } => assert!(source_name.ends_with("site2.fcds")),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let err = decode_site("x", b"NOPE\x01\x00").unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }), "{err:?}");
    }

    #[test]
    fn missing_site_file_is_a_manifest_error() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&small(), dir.path()).unwrap();
        std::fs::remove_file(dir.path().join(site_file_name(3))).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Manifest(_))));
    }
}
