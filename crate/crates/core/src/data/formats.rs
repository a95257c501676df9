//! On-disk image datasets: IDX (optionally gzipped) and the RLXD container.
//!
//! RLXD layout, all integers little-endian `u32`:
//!
//! ```text
//! "RLXD" | version=1 | count | height | width | channels
//! count × ( label: u8 | height·width·channels pixel bytes, row-major HWC )
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};

pub const RAW_MAGIC: &[u8; 4] = b"RLXD";
pub const RAW_VERSION: u32 = 1;

/// Images as raw bytes plus labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageDataset {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// `count · height · width · channels` bytes.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl ImageDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_size(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn image_bytes(&self, i: usize) -> &[u8] {
        let n = self.image_size();
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m as usize + 1)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::data(format!("{}: bad gzip stream: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Parsed IDX file of unsigned bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::data("IDX file shorter than its magic number"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::data("bad IDX magic"));
    }
    if bytes[2] != 0x08 {
        return Err(Error::data(format!("unsupported IDX element type 0x{:02x}", bytes[2])));
    }
    let ndim = bytes[3] as usize;
    if ndim == 0 {
        return Err(Error::data("IDX file with zero dimensions"));
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::data("truncated IDX header"));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    let n: usize = dims.iter().product();
    let body = &bytes[header..];
    if body.len() < n {
        return Err(Error::data(format!("truncated IDX body: {} of {n} bytes", body.len())));
    }
    if body.len() > n {
        return Err(Error::data("trailing bytes after IDX body"));
    }
    Ok(IdxArray {
        dims,
        data: body.to_vec(),
    })
}

pub fn encode_idx(dims: &[usize], data: &[u8]) -> Vec<u8> {
    let mut out = vec![0, 0, 0x08, dims.len() as u8];
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(data);
    out
}

/// Loads a 3-D image file and 1-D label file pair (plain or gzipped).
pub fn load_idx(images: &Path, labels: &Path) -> Result<ImageDataset> {
    let img = parse_idx(&read_file(images)?).map_err(|e| annotate(images, e))?;
    let lab = parse_idx(&read_file(labels)?).map_err(|e| annotate(labels, e))?;
    if img.dims.len() != 3 {
        return Err(Error::data(format!("{}: expected 3 image dimensions", images.display())));
    }
    if lab.dims.len() != 1 {
        return Err(Error::data(format!("{}: expected 1 label dimension", labels.display())));
    }
    if img.dims[0] != lab.dims[0] {
        return Err(Error::data(format!(
            "{} images but {} labels",
            img.dims[0], lab.dims[0]
        )));
    }
    Ok(ImageDataset {
        height: img.dims[1],
        width: img.dims[2],
        channels: 1,
        pixels: img.data,
        labels: lab.data,
    })
}

fn annotate(path: &Path, e: Error) -> Error {
    match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    }
}

pub fn write_idx(ds: &ImageDataset, images: &Path, labels: &Path) -> Result<()> {
    if ds.channels != 1 {
        return Err(Error::data("IDX export supports single-channel images only"));
    }
    fs::write(images, encode_idx(&[ds.len(), ds.height, ds.width], &ds.pixels))
        .map_err(|e| Error::io(images, e))?;
    fs::write(labels, encode_idx(&[ds.len()], &ds.labels)).map_err(|e| Error::io(labels, e))
}

pub fn encode_raw(ds: &ImageDataset) -> Vec<u8> {
    let n = ds.image_size();
    let mut out = Vec::with_capacity(24 + ds.len() * (n + 1));
    out.extend_from_slice(RAW_MAGIC);
    for v in [RAW_VERSION, ds.len() as u32, ds.height as u32, ds.width as u32, ds.channels as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for i in 0..ds.len() {
        out.push(ds.labels[i]);
        out.extend_from_slice(ds.image_bytes(i));
    }
    out
}

pub fn parse_raw(bytes: &[u8]) -> Result<ImageDataset> {
    if bytes.len() < 24 {
        return Err(Error::data("truncated RLXD header"));
    }
    if &bytes[..4] != RAW_MAGIC {
        return Err(Error::data("bad RLXD magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let version = word(0) as u32;
    if version != RAW_VERSION {
        return Err(Error::data(format!("unsupported RLXD version {version}")));
    }
    let (count, height, width, channels) = (word(1), word(2), word(3), word(4));
    let n = height * width * channels;
    if n == 0 {
        return Err(Error::data("RLXD image dimensions must be positive"));
    }
    let body = &bytes[24..];
    let expected = count * (n + 1);
    if body.len() != expected {
        return Err(Error::data(format!(
            "RLXD body is {} bytes, header implies {expected}",
            body.len()
        )));
    }
    let mut pixels = Vec::with_capacity(count * n);
    let mut labels = Vec::with_capacity(count);
    for rec in body.chunks(n + 1) {
        labels.push(rec[0]);
        pixels.extend_from_slice(&rec[1..]);
    }
    Ok(ImageDataset {
        height,
        width,
        channels,
        pixels,
        labels,
    })
}

pub fn load_raw(path: &Path) -> Result<ImageDataset> {
    parse_raw(&read_file(path)?).map_err(|e| annotate(path, e))
}

pub fn write_raw(ds: &ImageDataset, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_raw(ds)).map_err(|e| Error::io(path, e))
}

/// Builds a dataset from planar `[count][channel][height][width]` bytes, the
/// layout of SVHN's MATLAB arrays after transposition to count-major order.
/// SVHN stores digit zero as label 10; `map_ten_to_zero` folds it back.
pub fn from_planar(
    planar: &[u8],
    labels: &[u8],
    height: usize,
    width: usize,
    channels: usize,
    map_ten_to_zero: bool,
) -> Result<ImageDataset> {
    let n = height * width * channels;
    if planar.len() != labels.len() * n {
        return Err(Error::data("planar buffer size does not match label count"));
    }
    let plane = height * width;
    let mut pixels = vec![0u8; planar.len()];
    for (i, img) in planar.chunks(n).enumerate() {
        let out = &mut pixels[i * n..(i + 1) * n];
        for c in 0..channels {
            for p in 0..plane {
                out[p * channels + c] = img[c * plane + p];
            }
        }
    }
    let labels = labels
        .iter()
        .map(|&l| if map_ten_to_zero && l == 10 { 0 } else { l })
        .collect();
    Ok(ImageDataset {
        height,
        width,
        channels,
        pixels,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> ImageDataset {
        ImageDataset {
            height: 2,
            width: 3,
            channels: 1,
            pixels: vec![0, 1, 2, 3, 4, 5, 255, 254, 253, 252, 251, 250],
            labels: vec![7, 3],
        }
    }

    #[test]
    fn hand_crafted_idx_pair() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        fs::write(&ip, encode_idx(&[2, 2, 3], &fixture().pixels)).unwrap();
        fs::write(&lp, [0, 0, 8, 1, 0, 0, 0, 2, 7, 3]).unwrap();
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds, fixture());
        assert_eq!(ds.image_bytes(1), &[255, 254, 253, 252, 251, 250]);
    }

    #[test]
    fn idx_gzip_and_round_trip() {
        use flate2::write::GzEncoder;
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img.gz"), dir.path().join("lab"));
        let mut gz = GzEncoder::new(Vec::new(), flate2::Compression::default());
        gz.write_all(&encode_idx(&[2, 2, 3], &fixture().pixels)).unwrap();
        fs::write(&ip, gz.finish().unwrap()).unwrap();
        fs::write(&lp, encode_idx(&[2], &[7, 3])).unwrap();
        assert_eq!(load_idx(&ip, &lp).unwrap(), fixture());

        let (ip2, lp2) = (dir.path().join("i2"), dir.path().join("l2"));
        write_idx(&fixture(), &ip2, &lp2).unwrap();
        assert_eq!(load_idx(&ip2, &lp2).unwrap(), fixture());
    }

    #[test]
    fn idx_errors() {
        let good = encode_idx(&[2, 2, 3], &fixture().pixels);
        assert!(parse_idx(&good[..good.len() - 1]).is_err());
        assert!(parse_idx(&good[..6]).is_err());
        let mut bad = good.clone();
        bad[0] = 1;
        assert!(parse_idx(&bad).is_err());
        let mut bad = good;
        bad[2] = 0x0d;
        assert!(parse_idx(&bad).is_err());

        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        fs::write(&ip, encode_idx(&[2, 2, 3], &fixture().pixels)).unwrap();
        fs::write(&lp, encode_idx(&[3], &[1, 2, 3])).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Data(_))));
        assert!(matches!(load_idx(&dir.path().join("nope"), &lp), Err(Error::Io { .. })));
    }

    #[test]
    fn raw_round_trip_and_errors() {
        let ds = ImageDataset {
            height: 2,
            width: 2,
            channels: 3,
            pixels: (0..24).collect(),
            labels: vec![9, 0],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.rlxd");
        write_raw(&ds, &p).unwrap();
        assert_eq!(load_raw(&p).unwrap(), ds);

        let bytes = encode_raw(&ds);
        assert_eq!(bytes.len(), 24 + 2 * 13);
        assert!(parse_raw(&bytes[..bytes.len() - 1]).is_err());
        assert!(parse_raw(&bytes[..10]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(parse_raw(&bad).is_err());
        let mut bad = bytes;
        bad[4] = 2;
        assert!(parse_raw(&bad).is_err());
    }

    #[test]
    fn planar_conversion() {
        // One 1×2 image with 3 channels: planes R=[1,2], G=[3,4], B=[5,6].
        let ds = from_planar(&[1, 2, 3, 4, 5, 6], &[10], 1, 2, 3, true).unwrap();
        assert_eq!(ds.pixels, vec![1, 3, 5, 2, 4, 6]);
        assert_eq!(ds.labels, vec![0]);
        assert!(from_planar(&[1, 2, 3], &[1], 1, 2, 3, true).is_err());
    }
}
