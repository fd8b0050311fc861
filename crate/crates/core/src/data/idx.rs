//! IDX (big-endian) image/label file ingestion and average-pool
//! downsampling to simulator scale.

use super::{DataError, Dataset, Example};
use std::path::Path;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn read_u32_be(&mut self, field: &'static str) -> Result<u32, DataError> {
        if self.pos + 4 > self.bytes.len() {
            return Err(DataError::Format {
                field,
                message: "file truncated".into(),
            });
        }
        let v = u32::from_be_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        Ok(v)
    }
}

/// Loads an IDX image/label file pair: pixels scaled to `[0, 1]`, labels as
/// class indices, `C = 10`, `D = 1`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, DataError> {
    let images = std::fs::read(images_path).map_err(|source| DataError::Io {
        path: images_path.display().to_string(),
        source,
    })?;
    let labels = std::fs::read(labels_path).map_err(|source| DataError::Io {
        path: labels_path.display().to_string(),
        source,
    })?;

    let mut img = Cursor { bytes: &images, pos: 0 };
    let magic = img.read_u32_be("images magic")?;
    if magic != IMAGES_MAGIC {
        return Err(DataError::Format {
            field: "images magic",
            message: format!("expected {IMAGES_MAGIC:#010x}, got {magic:#010x}"),
        });
    }
    let count = img.read_u32_be("images count")? as usize;
    let rows = img.read_u32_be("images rows")? as usize;
    let cols = img.read_u32_be("images cols")? as usize;
    let d_feat = rows * cols;
    if d_feat == 0 {
        return Err(DataError::Format {
            field: "images dimensions",
            message: format!("{rows}x{cols} image size"),
        });
    }
    if images.len() - img.pos != count * d_feat {
        return Err(DataError::Format {
            field: "images data",
            message: format!(
                "expected {} pixel bytes, found {}",
                count * d_feat,
                images.len() - img.pos
            ),
        });
    }

    let mut lab = Cursor { bytes: &labels, pos: 0 };
    let magic = lab.read_u32_be("labels magic")?;
    if magic != LABELS_MAGIC {
        return Err(DataError::Format {
            field: "labels magic",
            message: format!("expected {LABELS_MAGIC:#010x}, got {magic:#010x}"),
        });
    }
    let label_count = lab.read_u32_be("labels count")? as usize;
    if label_count != count {
        return Err(DataError::Format {
            field: "labels count",
            message: format!("{count} images but {label_count} labels"),
        });
    }
    if labels.len() - lab.pos != count {
        return Err(DataError::Format {
            field: "labels data",
            message: format!(
                "expected {count} label bytes, found {}",
                labels.len() - lab.pos
            ),
        });
    }

    let mut examples = Vec::with_capacity(count);
    for i in 0..count {
        let start = img.pos + i * d_feat;
        let features: Vec<f64> = images[start..start + d_feat]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        let label = labels[lab.pos + i] as usize;
        if label > 9 {
            return Err(DataError::Format {
                field: "labels data",
                message: format!("label {label} at index {i} exceeds 9"),
            });
        }
        examples.push(Example {
            features,
            label,
            domain: 0,
        });
    }
    Dataset::new(examples, 10, 1, d_feat)
}

/// Average-pools each `side_in × side_in` image down to
/// `side_out × side_out`; labels and domains are preserved.
pub fn downsample_avgpool(
    dataset: &Dataset,
    side_in: usize,
    side_out: usize,
) -> Result<Dataset, DataError> {
    if side_in * side_in != dataset.d_feat() {
        return Err(DataError::Domain(format!(
            "downsample_avgpool: d_feat {} is not {side_in}x{side_in}",
            dataset.d_feat()
        )));
    }
    if side_out == 0 || side_in % side_out != 0 {
        return Err(DataError::Domain(format!(
            "downsample_avgpool: side_in {side_in} not divisible by side_out {side_out}"
        )));
    }
    let factor = side_in / side_out;
    let norm = 1.0 / (factor * factor) as f64;
    let examples = dataset
        .examples()
        .iter()
        .map(|ex| {
            let mut pooled = vec![0.0; side_out * side_out];
            for (r_out, pooled_row) in pooled.chunks_mut(side_out).enumerate() {
                for (c_out, out) in pooled_row.iter_mut().enumerate() {
                    let mut sum = 0.0;
                    for dr in 0..factor {
                        let row = r_out * factor + dr;
                        for dc in 0..factor {
                            sum += ex.features[row * side_in + c_out * factor + dc];
                        }
                    }
                    *out = sum * norm;
                }
            }
            Example {
                features: pooled,
                label: ex.label,
                domain: ex.domain,
            }
        })
        .collect();
    Dataset::new(
        examples,
        dataset.num_classes(),
        dataset.num_domains(),
        side_out * side_out,
    )
}
