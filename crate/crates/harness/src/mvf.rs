//! MVF: `b"MVF1"`, a little-endian `u64` header length, a JSON header and
//! the raw little-endian `f64` payload in row-major node order.

use std::io::{Read, Write};
use std::path::Path;

use metamorph_core::field::{Deformation, GridSpec, ManifoldImage};
use metamorph_core::ManifoldKind;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const MAGIC: &[u8; 4] = b"MVF1";

/// What the payload holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "content", rename_all = "snake_case")]
pub enum Content {
    Image { kind: ManifoldKind },
    Displacement { epsilon: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MvfHeader {
    #[serde(flatten)]
    pub content: Content,
    pub shape: Vec<usize>,
    /// Payload size in bytes.
    pub payload_len: usize,
    pub endianness: String,
    pub dtype: String,
}

impl MvfHeader {
    fn components(&self) -> usize {
        match &self.content {
            Content::Image { kind } => kind.payload_dim(),
            Content::Displacement { .. } => self.shape.len(),
        }
    }

    fn validate(&self) -> Result<GridSpec> {
        if self.endianness != "little" || self.dtype != "f64" {
            return Err(HarnessError::Format(format!(
                "unsupported encoding {}/{}",
                self.endianness, self.dtype
            )));
        }
        if let Content::Image { kind } = &self.content {
            kind.check()?;
        }
        let grid = GridSpec::new(&self.shape)?;
        let want = grid.len() * self.components() * 8;
        if self.payload_len != want {
            return Err(HarnessError::Format(format!(
                "payload length {} does not match shape {:?} ({want} bytes expected)",
                self.payload_len, self.shape
            )));
        }
        Ok(grid)
    }
}

fn encode(header: &MvfHeader, values: &[f64]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header).map_err(|e| HarnessError::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(12 + json.len() + values.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses and validates the header, then decodes the payload.
fn decode(bytes: &[u8]) -> Result<(MvfHeader, GridSpec, Vec<f64>)> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(HarnessError::Format("missing MVF1 magic".into()));
    }
    let hlen = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(12..12usize.saturating_add(hlen))
        .ok_or_else(|| HarnessError::Format("truncated header".into()))?;
    let header: MvfHeader =
        serde_json::from_slice(body).map_err(|e| HarnessError::Format(format!("bad header: {e}")))?;
    let grid = header.validate()?;
    let payload = &bytes[12 + hlen..];
    if payload.len() != header.payload_len {
        return Err(HarnessError::Format(format!(
            "payload has {} bytes, header declares {}",
            payload.len(),
            header.payload_len
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((header, grid, values))
}

pub fn image_to_bytes(image: &ManifoldImage) -> Result<Vec<u8>> {
    let header = MvfHeader {
        content: Content::Image { kind: image.kind() },
        shape: image.grid().shape().to_vec(),
        payload_len: image.values().len() * 8,
        endianness: "little".into(),
        dtype: "f64".into(),
    };
    encode(&header, image.values())
}

pub fn image_from_bytes(bytes: &[u8]) -> Result<ManifoldImage> {
    match decode(bytes)? {
        (
            MvfHeader {
                content: Content::Image { kind },
                ..
            },
            grid,
            values,
        ) => Ok(ManifoldImage::new(grid, kind, values)?),
        _ => Err(HarnessError::Format("file holds a displacement, not an image".into())),
    }
}

pub fn deformation_to_bytes(phi: &Deformation) -> Result<Vec<u8>> {
    let header = MvfHeader {
        content: Content::Displacement {
            epsilon: phi.epsilon(),
        },
        shape: phi.grid().shape().to_vec(),
        payload_len: phi.displacement().len() * 8,
        endianness: "little".into(),
        dtype: "f64".into(),
    };
    encode(&header, phi.displacement())
}

pub fn deformation_from_bytes(bytes: &[u8]) -> Result<Deformation> {
    match decode(bytes)? {
        (
            MvfHeader {
                content: Content::Displacement { epsilon },
                ..
            },
            grid,
            values,
        ) => Ok(Deformation::new(grid, values, epsilon)?),
        _ => Err(HarnessError::Format("file holds an image, not a displacement".into())),
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| HarnessError::io(path.display().to_string(), e))?;
    f.write_all(bytes)
        .map_err(|e| HarnessError::io(path.display().to_string(), e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| HarnessError::io(path.display().to_string(), e))?;
    Ok(buf)
}

pub fn write_image(path: &Path, image: &ManifoldImage) -> Result<()> {
    write_bytes(path, &image_to_bytes(image)?)
}

pub fn read_image(path: &Path) -> Result<ManifoldImage> {
    image_from_bytes(&read_bytes(path)?)
}

pub fn write_deformation(path: &Path, phi: &Deformation) -> Result<()> {
    write_bytes(path, &deformation_to_bytes(phi)?)
}

pub fn read_deformation(path: &Path) -> Result<Deformation> {
    deformation_from_bytes(&read_bytes(path)?)
}
