//! Dataset ingestion: MNIST IDX files and synthetic Gaussian blobs.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmgdError};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// An immutable labelled dataset; features are row-major with pixel
/// values already scaled to [0, 1] for IDX sources.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub n_samples: usize,
    pub n_features: usize,
    pub labels: Vec<u32>,
    pub num_classes: usize,
    pub split: Split,
    pub provenance: String,
}

impl Dataset {
    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    fn validate(&self) -> Result<()> {
        if self.features.len() != self.n_samples * self.n_features {
            return Err(SmgdError::InvalidArgument("feature buffer size mismatch".into()));
        }
        if self.labels.len() != self.n_samples {
            return Err(SmgdError::InvalidArgument(format!(
                "{} samples but {} labels",
                self.n_samples,
                self.labels.len()
            )));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l as usize >= self.num_classes) {
            return Err(SmgdError::InvalidArgument(format!(
                "label {l} out of range for {} classes",
                self.num_classes
            )));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(SmgdError::InvalidArgument("non-finite feature".into()));
        }
        Ok(())
    }
}

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(SmgdError::Format {
            offset: offset as u64,
            message: "truncated header".into(),
        })
}

/// Parse an IDX image/label file pair into a dataset, scaling pixels by
/// 1/255. Accepts any consistent sample count, not just the canonical
/// 60000/10000.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset> {
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;

    let magic = read_be_u32(&images, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(SmgdError::Format {
            offset: 0,
            message: format!("bad image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        });
    }
    let n_images = read_be_u32(&images, 4)? as usize;
    let rows = read_be_u32(&images, 8)? as usize;
    let cols = read_be_u32(&images, 12)? as usize;
    let n_features = rows * cols;
    let payload = &images[16..];
    if payload.len() != n_images * n_features {
        return Err(SmgdError::Format {
            offset: 16,
            message: format!(
                "image payload has {} bytes, header promises {}",
                payload.len(),
                n_images * n_features
            ),
        });
    }

    let magic = read_be_u32(&labels, 0)?;
    if magic != LABELS_MAGIC {
        return Err(SmgdError::Format {
            offset: 0,
            message: format!("bad label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        });
    }
    let n_labels = read_be_u32(&labels, 4)? as usize;
    if n_labels != n_images {
        return Err(SmgdError::Format {
            offset: 4,
            message: format!("{n_images} images but {n_labels} labels"),
        });
    }
    let label_payload = &labels[8..];
    if label_payload.len() != n_labels {
        return Err(SmgdError::Format {
            offset: 8,
            message: format!(
                "label payload has {} bytes, header promises {n_labels}",
                label_payload.len()
            ),
        });
    }

    let features: Vec<f64> = payload.iter().map(|&b| b as f64 / 255.0).collect();
    let labels: Vec<u32> = label_payload.iter().map(|&b| b as u32).collect();
    let num_classes = labels.iter().max().map(|&m| m as usize + 1).unwrap_or(0).max(1);
    let dataset = Dataset {
        features,
        n_samples: n_images,
        n_features,
        labels,
        num_classes,
        split,
        provenance: format!(
            "idx:{}+{}",
            images_path.display(),
            labels_path.display()
        ),
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Serialize a dataset back to the IDX pair (n x d x 1 images); the
/// features must be exact multiples of 1/255 for a lossless round trip.
pub fn save_idx(dataset: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let mut images = Vec::with_capacity(16 + dataset.features.len());
    images.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    images.extend_from_slice(&(dataset.n_samples as u32).to_be_bytes());
    images.extend_from_slice(&(dataset.n_features as u32).to_be_bytes());
    images.extend_from_slice(&1u32.to_be_bytes());
    images.extend(dataset.features.iter().map(|&v| (v * 255.0).round() as u8));

    let mut labels = Vec::with_capacity(8 + dataset.n_samples);
    labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(dataset.n_samples as u32).to_be_bytes());
    labels.extend(dataset.labels.iter().map(|&l| l as u8));

    fs::write(images_path, images)?;
    fs::write(labels_path, labels)?;
    Ok(())
}

/// Synthetic Gaussian clusters: class centers at radius `separation` on a
/// random sphere direction, unit variance, deterministic from the seed.
pub fn make_blobs(
    n_samples: usize,
    dims: usize,
    classes: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(SmgdError::InvalidArgument(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    let mut rng = substream(seed, 0, 4);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            let dir: Vec<f64> = (0..dims).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            dir.iter().map(|v| v / norm * separation).collect()
        })
        .collect();

    let mut features = Vec::with_capacity(n_samples * dims);
    let mut labels = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let class = i % classes;
        labels.push(class as u32);
        for d in 0..dims {
            features.push(centers[class][d] + rng.sample::<f64, _>(StandardNormal));
        }
    }
    let dataset = Dataset {
        features,
        n_samples,
        n_features: dims,
        labels,
        num_classes: classes,
        split: Split::Train,
        provenance: format!("blobs:n={n_samples},d={dims},c={classes},sep={separation},seed={seed}"),
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Parse the textual blob spec `blobs:n=...,d=...,c=...,sep=...,seed=...`.
pub fn parse_blobs_spec(spec: &str) -> Result<Dataset> {
    let body = spec.strip_prefix("blobs:").ok_or_else(|| {
        SmgdError::InvalidArgument(format!("expected blobs:... spec, got {spec:?}"))
    })?;
    let mut n = 200usize;
    let mut d = 2usize;
    let mut c = 2usize;
    let mut sep = 4.0f64;
    let mut seed = 0u64;
    for field in body.split(',').filter(|s| !s.is_empty()) {
        let (key, value) = field.split_once('=').ok_or_else(|| {
            SmgdError::InvalidArgument(format!("malformed blobs field {field:?}"))
        })?;
        let parse_err =
            |e| SmgdError::InvalidArgument(format!("blobs field {field:?}: {e}"));
        match key {
            "n" => n = value.parse().map_err(|e| parse_err(format!("{e}")))?,
            "d" => d = value.parse().map_err(|e| parse_err(format!("{e}")))?,
            "c" => c = value.parse().map_err(|e| parse_err(format!("{e}")))?,
            "sep" => sep = value.parse().map_err(|e| parse_err(format!("{e}")))?,
            "seed" => seed = value.parse().map_err(|e| parse_err(format!("{e}")))?,
            _ => {
                return Err(SmgdError::InvalidArgument(format!(
                    "unknown blobs field {key:?}"
                )))
            }
        }
    }
    make_blobs(n, d, c, sep, seed)
}

/// Epoch shuffle: a permutation of 0..n derived from (seed, epoch).
pub fn epoch_permutation(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = substream(seed, epoch, 5);
    let mut idx: Vec<usize> = (0..n).collect();
    for j in (1..n).rev() {
        let pick = rng.gen_range(0..=j);
        idx.swap(j, pick);
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_fixture() -> Dataset {
        // two 2x2 "images" with known bytes
        Dataset {
            features: vec![0.0, 51.0 / 255.0, 102.0 / 255.0, 255.0 / 255.0,
                           17.0 / 255.0, 34.0 / 255.0, 68.0 / 255.0, 136.0 / 255.0],
            n_samples: 2,
            n_features: 4,
            labels: vec![1, 0],
            num_classes: 2,
            split: Split::Train,
            provenance: "fixture".into(),
        }
    }

    #[test]
    fn idx_round_trip_on_a_hand_built_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        let original = tiny_fixture();
        save_idx(&original, &img, &lab).unwrap();
        let loaded = load_idx(&img, &lab, Split::Train).unwrap();
        assert_eq!(loaded.features, original.features);
        assert_eq!(loaded.labels, original.labels);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        save_idx(&tiny_fixture(), &img, &lab).unwrap();
        // pass the images file in the labels slot
        let err = load_idx(&img, &img, Split::Train).unwrap_err();
        assert!(matches!(err, SmgdError::Format { .. }), "{err}");
        let err = load_idx(&lab, &lab, Split::Train).unwrap_err();
        assert!(matches!(err, SmgdError::Format { offset: 0, .. }));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        save_idx(&tiny_fixture(), &img, &lab).unwrap();
        let mut bytes = fs::read(&img).unwrap();
        bytes.truncate(bytes.len() - 1);
        fs::write(&img, bytes).unwrap();
        assert!(matches!(
            load_idx(&img, &lab, Split::Train),
            Err(SmgdError::Format { offset: 16, .. })
        ));
    }

    #[test]
    fn blobs_are_deterministic() {
        let a = make_blobs(100, 3, 2, 4.0, 9).unwrap();
        let b = make_blobs(100, 3, 2, 4.0, 9).unwrap();
        assert_eq!(a, b);
        let c = make_blobs(100, 3, 2, 4.0, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_separation_is_chance_level_for_the_centroid_rule() {
        let data = make_blobs(4_000, 2, 2, 0.0, 3).unwrap();
        // with identical centers the nearest-centroid rule is a coin flip
        let acc = centroid_accuracy(&data);
        assert!((acc - 0.5).abs() < 0.05, "accuracy {acc}");
    }

    #[test]
    fn wide_separation_is_nearly_perfectly_separable() {
        let data = make_blobs(10_000, 2, 2, 8.0, 3).unwrap();
        let acc = centroid_accuracy(&data);
        assert!(acc > 0.999, "accuracy {acc}");
    }

    /// Distance-to-class-centroid classifier, the Bayes rule for equal
    /// spherical covariances.
    fn centroid_accuracy(data: &Dataset) -> f64 {
        let d = data.n_features;
        let mut centroids = vec![vec![0.0f64; d]; data.num_classes];
        let mut counts = vec![0usize; data.num_classes];
        for i in 0..data.n_samples {
            let c = data.labels[i] as usize;
            counts[c] += 1;
            for (acc, v) in centroids[c].iter_mut().zip(data.sample(i)) {
                *acc += v;
            }
        }
        for (c, count) in centroids.iter_mut().zip(&counts) {
            c.iter_mut().for_each(|v| *v /= *count as f64);
        }
        let mut correct = 0usize;
        for i in 0..data.n_samples {
            let x = data.sample(i);
            let best = (0..data.num_classes)
                .min_by(|&a, &b| {
                    let da: f64 = x.iter().zip(&centroids[a]).map(|(p, q)| (p - q) * (p - q)).sum();
                    let db: f64 = x.iter().zip(&centroids[b]).map(|(p, q)| (p - q) * (p - q)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            correct += (best == data.labels[i] as usize) as usize;
        }
        correct as f64 / data.n_samples as f64
    }

    #[test]
    fn epoch_permutation_is_a_permutation() {
        let p = epoch_permutation(1000, 5, 3);
        let mut sorted = p.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..1000).collect::<Vec<_>>());
        assert_eq!(p, epoch_permutation(1000, 5, 3));
        assert_ne!(p, epoch_permutation(1000, 5, 4));
    }

    #[test]
    fn blobs_spec_parses() {
        let d = parse_blobs_spec("blobs:n=50,d=3,c=4,sep=2.5,seed=7").unwrap();
        assert_eq!(d.n_samples, 50);
        assert_eq!(d.n_features, 3);
        assert_eq!(d.num_classes, 4);
        assert!(parse_blobs_spec("blobs:bogus=1").is_err());
        assert!(parse_blobs_spec("circles:n=5").is_err());
    }
}
