//! Datasets, augmentation, tokenization and splits.

pub mod formats;
pub mod image;
pub mod text;

use crate::error::{Error, Result};
use crate::linalg::{Rng, Vector};

pub use formats::{load_idx, load_raw, write_raw, ImageDataset};
pub use image::{normalize_per_image, Augment, Image};
pub use text::{build_vocab, tokenize, window_split, TokenWindow, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub enum SampleInput {
    /// Fed unchanged at every step.
    Image(Vector),
    /// One vector per step.
    Sequence(Vec<Vector>),
    /// One token index per step, looked up in the model's embedding.
    Tokens(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: SampleInput,
    pub target: usize,
}

impl From<TokenWindow> for Sample {
    fn from(w: TokenWindow) -> Self {
        Sample {
            input: SampleInput::Tokens(w.inputs),
            target: w.target,
        }
    }
}

/// Seeded permutation of `0..n` cut at `⌊ratio·n⌋` into (train, validation).
pub fn train_val_split(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::config(format!("split ratio {ratio} outside [0, 1]")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut idx);
    let cut = ((n as f64) * ratio).floor() as usize;
    let val = idx.split_off(cut);
    Ok((idx, val))
}

/// The selected images scaled to `[0, 1]` and normalized per image.
pub fn image_samples(ds: &ImageDataset, indices: &[usize]) -> Result<Vec<Sample>> {
    indices
        .iter()
        .map(|&i| {
            if i >= ds.len() {
                return Err(Error::data(format!("image index {i} out of range")));
            }
            let img = Image::from_bytes(ds.height, ds.width, ds.channels, ds.image_bytes(i))?;
            Ok(Sample {
                input: SampleInput::Image(normalize_per_image(&img)),
                target: ds.labels[i] as usize,
            })
        })
        .collect()
}

/// Like [`image_samples`] but passes each image through `augment` with a
/// substream keyed by `(seed, index)`.
pub fn augmented_samples(ds: &ImageDataset, indices: &[usize], augment: &Augment, seed: u64) -> Result<Vec<Sample>> {
    indices
        .iter()
        .map(|&i| {
            let img = Image::from_bytes(ds.height, ds.width, ds.channels, ds.image_bytes(i))?;
            let mut rng = Rng::derived(seed, &[i as u64]);
            Ok(Sample {
                input: SampleInput::Image(augment.apply(&img, &mut rng)?),
                target: ds.labels[i] as usize,
            })
        })
        .collect()
}
