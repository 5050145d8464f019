use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nncore::{Checkpoint, Tensor};
use crate::seed::{rng_for, Rng};

pub const IMAGE_SIZE: usize = 16;
pub const NUM_CLASSES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetConfig {
    pub train: usize,
    pub validation: usize,
    /// Standard deviation of the per-pixel Gaussian noise.
    pub noise: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            train: 2000,
            validation: 500,
            noise: 0.4,
        }
    }
}

/// Images `[n, 1, 16, 16]` with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Images and labels of the given sample indices.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let plane = IMAGE_SIZE * IMAGE_SIZE;
        let mut data = Vec::with_capacity(indices.len() * plane);
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * plane..(i + 1) * plane]);
        }
        let images = Tensor::from_vec(&[indices.len(), 1, IMAGE_SIZE, IMAGE_SIZE], data).unwrap();
        (images, indices.iter().map(|&i| self.labels[i]).collect())
    }
}

/// Four classes of noisy 16x16 strokes: horizontal bar, vertical bar,
/// upright cross and diagonal cross, at random positions, lengths,
/// thicknesses and intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub train: Split,
    pub validation: Split,
}

fn draw(label: usize, noise: &Normal<f64>, rng: &mut Rng) -> Vec<f64> {
    let n = IMAGE_SIZE as i64;
    let mut img = vec![0.0; IMAGE_SIZE * IMAGE_SIZE];
    let cx: i64 = rng.random_range(4..=11);
    let cy: i64 = rng.random_range(4..=11);
    let half: i64 = rng.random_range(3..=5);
    let thick: i64 = rng.random_range(1..=2);
    let level: f64 = rng.random_range(0.6..=1.0);
    let mut put = |x: i64, y: i64| {
        if (0..n).contains(&x) && (0..n).contains(&y) {
            img[(y * n + x) as usize] = level;
        }
    };
    for d in -half..=half {
        for o in 0..thick {
            match label {
                0 => put(cx + d, cy + o),
                1 => put(cx + o, cy + d),
                2 => {
                    put(cx + d, cy + o);
                    put(cx + o, cy + d);
                }
                _ => {
                    put(cx + d + o, cy + d);
                    put(cx + d + o, cy - d);
                }
            }
        }
    }
    for v in &mut img {
        *v += noise.sample(rng);
    }
    img
}

fn split(count: usize, noise: f64, rng: &mut Rng) -> Split {
    let mut labels: Vec<usize> = (0..count).map(|i| i % NUM_CLASSES).collect();
    labels.shuffle(rng);
    let normal = Normal::new(0.0, noise).expect("noise is finite");
    let mut data = Vec::with_capacity(count * IMAGE_SIZE * IMAGE_SIZE);
    for &label in &labels {
        data.extend(draw(label, &normal, rng));
    }
    Split {
        images: Tensor::from_vec(&[count, 1, IMAGE_SIZE, IMAGE_SIZE], data).unwrap(),
        labels,
    }
}

impl SyntheticDataset {
    pub fn generate(seed: u64) -> Self {
        Self::generate_with(DatasetConfig::default(), seed).expect("default config is valid")
    }

    /// Split sizes must be multiples of the class count so every class is
    /// represented exactly equally.
    pub fn generate_with(config: DatasetConfig, seed: u64) -> Result<Self> {
        for (name, size) in [("train", config.train), ("validation", config.validation)] {
            if size == 0 || size % NUM_CLASSES != 0 {
                return Err(Error::Config(format!(
                    "{name} size {size} must be a positive multiple of {NUM_CLASSES}"
                )));
            }
        }
        if !(config.noise >= 0.0 && config.noise.is_finite()) {
            return Err(Error::domain("noise", config.noise, "[0, inf)"));
        }
        let mut rng = rng_for(seed, "dataset");
        let train = split(config.train, config.noise, &mut rng);
        let validation = split(config.validation, config.noise, &mut rng);
        Ok(Self { train, validation })
    }

    /// Writes the dataset as a checkpoint-style manifest and blob.
    pub fn export(&self, prefix: &Path) -> Result<()> {
        let mut c = Checkpoint::new();
        c.put_meta("classes", NUM_CLASSES);
        for (name, s) in [("train", &self.train), ("validation", &self.validation)] {
            c.put_tensor(&format!("{name}.images"), s.images.clone());
            let labels = s.labels.iter().map(|&l| l as f64).collect();
            c.put_tensor(&format!("{name}.labels"), Tensor::from_vec(&[s.len()], labels)?);
        }
        c.save(prefix)
    }
}
