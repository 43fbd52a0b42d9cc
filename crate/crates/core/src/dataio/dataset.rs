//! Dataset directory layout:
//!
//! ```text
//! <dir>/manifest.txt        records, see `read_manifest`
//! <dir>/xm/<stem>.fea       energy-distribution features
//! <dir>/xf/<stem>.fea       RGB features
//! ```
//!
//! `<stem>` is the manifest file name without its extension, so
//! `meal_001.jpg` maps to `xm/meal_001.fea`.

use super::{read_feature_file, read_manifest, write_feature_file, write_manifest, ManifestRecord};
use crate::data::{Domain, FeatureVector, Sample};
use crate::error::{Error, Result};
use std::path::{Path, PathBuf};

pub const MANIFEST_NAME: &str = "manifest.txt";
pub const FEATURE_EXT: &str = "fea";

fn stem(name: &str) -> &str {
    Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or(name)
}

fn feature_path(dir: &Path, sub: &str, name: &str) -> PathBuf {
    dir.join(sub).join(format!("{}.{FEATURE_EXT}", stem(name)))
}

fn read_domain(path: &Path, want: Domain) -> Result<FeatureVector> {
    let f = read_feature_file(path)?;
    if f.domain != want {
        return Err(Error::Format {
            path: path.into(),
            offset: 4,
            msg: format!("domain {:?}, expected {want:?}", f.domain),
        });
    }
    Ok(f)
}

pub fn read_dataset_dir(dir: &Path) -> Result<Vec<Sample>> {
    let records = read_manifest(&dir.join(MANIFEST_NAME))?;
    records
        .into_iter()
        .map(|r| {
            Ok(Sample {
                x_m: read_domain(&feature_path(dir, "xm", &r.name), Domain::EnergyDistribution)?,
                x_f: read_domain(&feature_path(dir, "xf", &r.name), Domain::Rgb)?,
                id: r.name,
                target: r.energy,
                category: r.category,
            })
        })
        .collect()
}

pub fn write_dataset_dir(dir: &Path, samples: &[Sample]) -> Result<()> {
    for sub in ["xm", "xf"] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut records = Vec::with_capacity(samples.len());
    for s in samples {
        if s.id.is_empty() || s.id.chars().any(char::is_whitespace) {
            return Err(Error::Domain(format!("sample id {:?} cannot appear in a manifest", s.id)));
        }
        write_feature_file(&feature_path(dir, "xm", &s.id), Domain::EnergyDistribution, &s.x_m.values)?;
        write_feature_file(&feature_path(dir, "xf", &s.id), Domain::Rgb, &s.x_f.values)?;
        records.push(ManifestRecord {
            name: s.id.clone(),
            energy: s.target,
            category: s.category.clone(),
        });
    }
    write_manifest(&dir.join(MANIFEST_NAME), &records)
}

/// `<dir>/<split>` when it holds a manifest, else `<dir>` itself.
pub fn resolve_split(dir: &Path, split: &str) -> Result<PathBuf> {
    let nested = dir.join(split);
    if nested.join(MANIFEST_NAME).is_file() {
        Ok(nested)
    } else if dir.join(MANIFEST_NAME).is_file() {
        Ok(dir.to_path_buf())
    } else {
        Err(Error::io(
            &nested.join(MANIFEST_NAME),
            std::io::Error::new(std::io::ErrorKind::NotFound, "no manifest.txt"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, m: Vec<f64>, f: Vec<f64>, w: f64) -> Sample {
        Sample {
            id: id.into(),
            x_m: FeatureVector { domain: Domain::EnergyDistribution, values: m },
            x_f: FeatureVector { domain: Domain::Rgb, values: f },
            target: w,
            category: Some("dinner".into()),
        }
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let samples = vec![
            sample("s000", vec![0.5, 1.0], vec![2.0, 3.0, 4.0], 606.0),
            sample("s001", vec![-0.5, 0.25], vec![1.0, -1.0, 0.0], 717.52),
        ];
        write_dataset_dir(dir.path(), &samples).unwrap();
        assert_eq!(read_dataset_dir(dir.path()).unwrap(), samples);
        assert_eq!(resolve_split(dir.path(), "train").unwrap(), dir.path());
    }

    #[test]
    fn swapped_domains_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset_dir(dir.path(), &[sample("a.jpg", vec![1.0], vec![2.0], 10.0)]).unwrap();
        std::fs::rename(dir.path().join("xm/a.fea"), dir.path().join("tmp.fea")).unwrap();
        std::fs::rename(dir.path().join("xf/a.fea"), dir.path().join("xm/a.fea")).unwrap();
        std::fs::rename(dir.path().join("tmp.fea"), dir.path().join("xf/a.fea")).unwrap();
        assert!(matches!(read_dataset_dir(dir.path()), Err(Error::Format { offset: 4, .. })));
    }

    #[test]
    fn missing_feature_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(MANIFEST_NAME), "x.jpg 5\n").unwrap();
        assert!(matches!(read_dataset_dir(dir.path()), Err(Error::Io { .. })));
    }
}
