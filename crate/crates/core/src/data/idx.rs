use std::path::{Path, PathBuf};

use super::ImageDataset;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Raw unsigned-byte IDX payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub magic: u32,
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parses an unsigned-byte IDX buffer.
///
/// The header is `00 00 08 ndim` followed by `ndim` big-endian u32 sizes.
pub fn parse_idx(bytes: &[u8], path: &Path) -> Result<IdxArray> {
    let parse = |reason: String| Error::Parse {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 4 {
        return Err(Error::Truncated(format!(
            "{}: {} bytes, no room for the magic number",
            path.display(),
            bytes.len()
        )));
    }
    let magic = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
    if magic != IMAGE_MAGIC && magic != LABEL_MAGIC {
        return Err(Error::BadMagic {
            expected: IMAGE_MAGIC.to_be_bytes().to_vec(),
            found: bytes[0..4].to_vec(),
        });
    }
    let ndim = (magic & 0xff) as usize;
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::Truncated(format!(
            "{}: header needs {header} bytes, file has {}",
            path.display(),
            bytes.len()
        )));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    let n: usize = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| parse(format!("dimensions {dims:?} overflow")))?;
    let payload = &bytes[header..];
    if payload.len() < n {
        return Err(Error::Truncated(format!(
            "{}: dims {dims:?} need {n} payload bytes, found {}",
            path.display(),
            payload.len()
        )));
    }
    if payload.len() > n {
        return Err(parse(format!(
            "dims {dims:?} account for {n} bytes but the payload has {}",
            payload.len()
        )));
    }
    Ok(IdxArray {
        magic,
        dims,
        data: payload.to_vec(),
    })
}

pub fn load_idx(path: &Path) -> Result<IdxArray> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes, path)
}

/// Image tensor `[N, H, W]` scaled to `[0, 1]`.
pub fn idx_images(arr: &IdxArray, path: &Path) -> Result<Tensor<f32>> {
    if arr.magic != IMAGE_MAGIC || arr.dims.len() != 3 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            reason: format!("expected a 3-d image file, found dims {:?}", arr.dims),
        });
    }
    Tensor::new(
        arr.dims.clone(),
        arr.data.iter().map(|&b| b as f32 / 255.0).collect(),
    )
}

pub fn idx_labels(arr: &IdxArray, path: &Path) -> Result<Vec<usize>> {
    if arr.magic != LABEL_MAGIC || arr.dims.len() != 1 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            reason: format!("expected a label vector, found dims {:?}", arr.dims),
        });
    }
    Ok(arr.data.iter().map(|&b| b as usize).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

/// Dataset root: `SIMVAE_DATA_DIR` if set, else `./data`.
pub fn data_root() -> PathBuf {
    std::env::var_os("SIMVAE_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

/// Finds the directory holding `name`'s IDX files under `root`, accepting
/// either `root/name/` or `root` itself.
pub fn locate_idx_dir(root: &Path, name: &str) -> Option<PathBuf> {
    let probe = format!("{}-images-idx3-ubyte", Split::Train.prefix());
    [root.join(name), root.to_path_buf()]
        .into_iter()
        .find(|d| d.join(&probe).is_file())
}

/// Loads one split of an MNIST-layout dataset (`train-images-idx3-ubyte`,
/// `t10k-labels-idx1-ubyte`, ...) from `dir`.
pub fn load_mnist_split(dir: &Path, split: Split, name: &str) -> Result<ImageDataset> {
    let ip = dir.join(format!("{}-images-idx3-ubyte", split.prefix()));
    let lp = dir.join(format!("{}-labels-idx1-ubyte", split.prefix()));
    let images = idx_images(&load_idx(&ip)?, &ip)?;
    let labels = idx_labels(&load_idx(&lp)?, &lp)?;
    ImageDataset::new(name, images, labels)
}
