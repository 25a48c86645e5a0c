//! Dataset ingestion and generation: IDX files, synthetic Gaussian blobs,
//! and a text dump format for derived datasets (adversarial examples).

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::Path;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Labeled samples with values in the unit box.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub split: Split,
    /// File path or generator spec (with seed) this dataset came from.
    pub provenance: String,
}

impl Dataset {
    pub fn new(
        inputs: Vec<Tensor>,
        labels: Vec<usize>,
        classes: usize,
        split: Split,
        provenance: String,
    ) -> Result<Dataset> {
        if inputs.len() != labels.len() {
            return Err(Error::Contract(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Contract(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        for (i, x) in inputs.iter().enumerate() {
            if x.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Contract(format!(
                    "sample {i} has values outside the unit box"
                )));
            }
            if x.shape() != inputs[0].shape() {
                return Err(Error::dimension(
                    "dataset samples",
                    format!("{:?}", inputs[0].shape()),
                    format!("{:?}", x.shape()),
                ));
            }
        }
        Ok(Dataset {
            inputs,
            labels,
            classes,
            split,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn sample_shape(&self) -> Option<&[usize]> {
        self.inputs.first().map(|t| t.shape())
    }

    /// All samples stacked into one `[N, ...]` batch.
    pub fn stacked(&self) -> Result<Tensor> {
        let refs: Vec<&Tensor> = self.inputs.iter().collect();
        Tensor::stack(&refs)
    }

    /// First `limit` samples (all, when `limit` exceeds the set).
    pub fn truncated(&self, limit: usize) -> Dataset {
        let n = limit.min(self.len());
        Dataset {
            inputs: self.inputs[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            classes: self.classes,
            split: self.split,
            provenance: format!("{} limit={n}", self.provenance),
        }
    }

    /// Deterministic random subset without replacement.
    pub fn sampled_subset(&self, count: usize, seed: u64) -> Dataset {
        let mut indices: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..indices.len()).rev() {
            let j = rng.random_range(0..=i);
            indices.swap(i, j);
        }
        indices.truncate(count.min(self.len()));
        Dataset {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            split: self.split,
            provenance: format!("{} subset={count} subset_seed={seed}", self.provenance),
        }
    }
}

/// Loads an IDX image/label file pair. Pixels are scaled to [0, 1]; counts
/// are cross-checked between the two files.
pub fn load_idx(images: &Path, labels: &Path, split: Split) -> Result<Dataset> {
    let img_bytes = std::fs::read(images)?;
    let lbl_bytes = std::fs::read(labels)?;

    let magic = read_be_u32(&img_bytes, 0, "image magic")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!(
                "bad image magic: expected {IDX_IMAGE_MAGIC:#010x}, got {magic:#010x}"
            ),
        });
    }
    let count = read_be_u32(&img_bytes, 4, "image count")? as usize;
    let rows = read_be_u32(&img_bytes, 8, "image rows")? as usize;
    let cols = read_be_u32(&img_bytes, 12, "image cols")? as usize;
    let need = 16 + count * rows * cols;
    if img_bytes.len() < need {
        return Err(Error::Parse {
            offset: img_bytes.len(),
            message: format!(
                "image file truncated: need {need} bytes, have {}",
                img_bytes.len()
            ),
        });
    }

    let lmagic = read_be_u32(&lbl_bytes, 0, "label magic")?;
    if lmagic != IDX_LABEL_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!(
                "bad label magic: expected {IDX_LABEL_MAGIC:#010x}, got {lmagic:#010x}"
            ),
        });
    }
    let lcount = read_be_u32(&lbl_bytes, 4, "label count")? as usize;
    if lcount != count {
        return Err(Error::Parse {
            offset: 4,
            message: format!("count mismatch: {count} images but {lcount} labels"),
        });
    }
    if lbl_bytes.len() < 8 + count {
        return Err(Error::Parse {
            offset: lbl_bytes.len(),
            message: format!(
                "label file truncated: need {} bytes, have {}",
                8 + count,
                lbl_bytes.len()
            ),
        });
    }

    let mut inputs = Vec::with_capacity(count);
    for i in 0..count {
        let start = 16 + i * rows * cols;
        let pixels: Vec<f64> = img_bytes[start..start + rows * cols]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        inputs.push(Tensor::new(vec![1, rows, cols], pixels));
    }
    let labels_vec: Vec<usize> = lbl_bytes[8..8 + count].iter().map(|&b| b as usize).collect();
    let classes = labels_vec.iter().copied().max().map_or(2, |m| (m + 1).max(2));
    Dataset::new(
        inputs,
        labels_vec,
        classes,
        split,
        format!("idx {} {}", images.display(), labels.display()),
    )
}

fn read_be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Parse {
            offset: bytes.len(),
            message: format!("file truncated while reading {what}"),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Gaussian class clusters clipped to the unit box. Cluster width scales as
/// 1/separation, so large separations become linearly separable. The same
/// seed always produces the same dataset; the test split draws from a
/// different stream but shares the class centers.
pub fn synth_blobs(
    classes: usize,
    dim: usize,
    count: usize,
    separation: f64,
    seed: u64,
    split: Split,
) -> Result<Dataset> {
    if separation <= 0.0 {
        return Err(Error::Contract(format!(
            "separation must be positive, got {separation}"
        )));
    }
    if classes == 0 || dim == 0 {
        return Err(Error::Contract("classes and dim must be positive".into()));
    }
    let mut center_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut candidate = vec![0.0; dim];
        for _attempt in 0..200 {
            for c in candidate.iter_mut() {
                *c = center_rng.random_range(0.25..0.75);
            }
            let min_dist = centers
                .iter()
                .map(|other| {
                    candidate
                        .iter()
                        .zip(other)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            if min_dist >= 0.25 {
                break;
            }
        }
        centers.push(candidate.clone());
    }

    let salt = match split {
        Split::Train => 0,
        Split::Test => 0x7e57,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    let std = 0.25 / separation;
    let mut inputs = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % classes;
        let x: Vec<f64> = centers[label]
            .iter()
            .map(|&c| {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                (c + std * z).clamp(0.0, 1.0)
            })
            .collect();
        inputs.push(Tensor::new(vec![dim], x));
        labels.push(label);
    }
    Dataset::new(
        inputs,
        labels,
        classes,
        split,
        format!(
            "blobs classes={classes} dim={dim} count={count} separation={separation} seed={seed} split={}",
            split.tag()
        ),
    )
}

pub const DATASET_FORMAT_VERSION: u32 = 1;
const DATASET_MAGIC: &str = "forgenet-dataset";

/// Writes a dataset in the text dump format (same grammar family as model
/// files): header lines, then one `sample <index> <label> <values...>` line
/// per sample, then `end`.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{DATASET_MAGIC} {DATASET_FORMAT_VERSION}");
    let _ = writeln!(out, "split {}", dataset.split.tag());
    let _ = writeln!(out, "classes {}", dataset.classes);
    let _ = writeln!(out, "count {}", dataset.len());
    let shape = dataset
        .sample_shape()
        .map(|s| {
            s.iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .unwrap_or_default();
    let _ = writeln!(out, "shape {shape}");
    let _ = writeln!(out, "provenance {}", dataset.provenance);
    for (i, (x, y)) in dataset.inputs.iter().zip(&dataset.labels).enumerate() {
        let _ = write!(out, "sample {i} {y}");
        for v in x.data() {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    out.push_str("end\n");
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    dataset_from_str(&text)
}

pub fn dataset_from_str(text: &str) -> Result<Dataset> {
    let mut pos = 0usize;
    let mut lines = text.lines().map(move |line| {
        let off = pos;
        pos += line.len() + 1;
        (off, line)
    });
    let mut expect = move |what: &str| -> Result<(usize, &str)> {
        lines.next().ok_or_else(|| Error::Parse {
            offset: text.len(),
            message: format!("file truncated: expected {what}"),
        })
    };

    let (off, header) = expect("header")?;
    let mut it = header.split_whitespace();
    if it.next() != Some(DATASET_MAGIC) {
        return Err(Error::Parse {
            offset: off,
            message: format!("expected `{DATASET_MAGIC} <version>`"),
        });
    }
    let version: u32 = it.next().and_then(|v| v.parse().ok()).ok_or(Error::Parse {
        offset: off,
        message: "missing version".into(),
    })?;
    if version != DATASET_FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: DATASET_FORMAT_VERSION,
        });
    }

    let keyed = |line: (usize, &str), key: &str| -> Result<String> {
        let (off, l) = line;
        l.strip_prefix(key)
            .map(|rest| rest.trim().to_string())
            .ok_or_else(|| Error::Parse {
                offset: off,
                message: format!("expected `{key} ...`, got `{l}`"),
            })
    };

    let split = match keyed(expect("split")?, "split")?.as_str() {
        "train" => Split::Train,
        "test" => Split::Test,
        other => return Err(Error::Contract(format!("unknown split tag `{other}`"))),
    };
    let classes: usize = keyed(expect("classes")?, "classes")?
        .parse()
        .map_err(|_| Error::Contract("invalid class count".into()))?;
    let count: usize = keyed(expect("count")?, "count")?
        .parse()
        .map_err(|_| Error::Contract("invalid count".into()))?;
    let shape: Vec<usize> = keyed(expect("shape")?, "shape")?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Contract("bad shape".into())))
        .collect::<Result<_>>()?;
    let provenance = keyed(expect("provenance")?, "provenance")?;

    let numel: usize = shape.iter().product();
    let mut inputs = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let (off, line) = expect("sample line")?;
        let mut tok = line.split_whitespace();
        if tok.next() != Some("sample") {
            return Err(Error::Parse {
                offset: off,
                message: format!("expected `sample ...`, got `{line}`"),
            });
        }
        let _index: usize = tok.next().and_then(|t| t.parse().ok()).ok_or(Error::Parse {
            offset: off,
            message: "bad sample index".into(),
        })?;
        let label: usize = tok.next().and_then(|t| t.parse().ok()).ok_or(Error::Parse {
            offset: off,
            message: "bad sample label".into(),
        })?;
        let values: Vec<f64> = tok
            .map(|t| {
                t.parse::<f64>().map_err(|_| Error::Parse {
                    offset: off,
                    message: format!("bad float `{t}` in sample {i}"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != numel {
            return Err(Error::Parse {
                offset: off,
                message: format!("sample {i} has {} values, expected {numel}", values.len()),
            });
        }
        inputs.push(Tensor::new(shape.clone(), values));
        labels.push(label);
    }
    let (off, terminator) = expect("end marker")?;
    if terminator.trim() != "end" {
        return Err(Error::Parse {
            offset: off,
            message: "missing end marker".into(),
        });
    }
    Dataset::new(inputs, labels, classes, split, provenance)
}
