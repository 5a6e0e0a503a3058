//! Decoded splits and the mini-batch stream fed to training.

use fcdd_autodiff::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::loss::LabelMatrix;
use crate::model::InputSize;
use crate::sampler::SamplerState;

use super::augment::augment;
use super::image_io::{load_image, Image};
use super::manifest::{DatasetManifest, Split};

/// Inputs are fed to the network as `(x − 0.5) / 0.25`.
pub const NORMALIZE_MEAN: f32 = 0.5;
pub const NORMALIZE_STD: f32 = 0.25;

/// Probability that a training image is augmented.
pub const AUGMENT_PROB: f64 = 0.5;

/// Independent generator for one purpose and epoch of a run.
pub fn epoch_rng(seed: u64, purpose: u32, epoch: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 32) | epoch as u64);
    rng
}

/// One split of a manifest, decoded into memory.
#[derive(Clone, Debug)]
pub struct LoadedSplit {
    /// Manifest record index of each image.
    pub records: Vec<usize>,
    pub images: Vec<Image>,
    pub labels: Vec<Vec<u8>>,
    pub num_types: usize,
}

impl LoadedSplit {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Positions grouped as `[normal, type 0, type 1, ...]`, dropping empty
    /// groups. Multi-label images are grouped under their first type.
    pub fn class_partition(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_types + 1];
        for (i, row) in self.labels.iter().enumerate() {
            let g = row.iter().position(|&y| y == 1).map_or(0, |k| k + 1);
            groups[g].push(i);
        }
        groups.into_iter().filter(|g| !g.is_empty()).collect()
    }

    pub fn anomalous_count(&self) -> usize {
        self.labels.iter().filter(|r| r.contains(&1)).count()
    }
}

/// Decodes every image of `split`, checking it against the expected size.
pub fn load_split(manifest: &DatasetManifest, split: Split, input: InputSize) -> Result<LoadedSplit> {
    let records = manifest.indices(split);
    let images = records
        .par_iter()
        .map(|&i| {
            let path = manifest.resolve(&manifest.records[i].path);
            let img = load_image(&path, input.channels)?;
            if (img.height, img.width) != (input.height, input.width) {
                return Err(Error::Data(format!(
                    "{}: image is {}x{}, model expects {}x{}",
                    path.display(),
                    img.height,
                    img.width,
                    input.height,
                    input.width
                )));
            }
            Ok(img)
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = records.iter().map(|&i| manifest.label_row(&manifest.records[i])).collect();
    Ok(LoadedSplit {
        records,
        images,
        labels,
        num_types: manifest.num_types(),
    })
}

/// Stacks images into a normalised `b × c × h × w` tensor.
pub fn to_tensor<'a>(images: impl IntoIterator<Item = &'a Image>) -> Result<Tensor<f32>> {
    let mut data = Vec::new();
    let mut dims = None;
    let mut n = 0;
    for img in images {
        let d = (img.channels, img.height, img.width);
        if *dims.get_or_insert(d) != d {
            return Err(Error::Contract("images in one batch differ in size".into()));
        }
        data.extend(img.data.iter().map(|&v| (v - NORMALIZE_MEAN) / NORMALIZE_STD));
        n += 1;
    }
    let (c, h, w) = dims.ok_or_else(|| Error::Contract("empty batch".into()))?;
    Ok(Tensor::new(vec![n, c, h, w], data)?)
}

/// Order of one balanced epoch: draws until every class has been sampled as
/// often as it has images.
pub fn balanced_order(data: &LoadedSplit, batch_size: usize, rng_seed: u64) -> Result<Vec<usize>> {
    let mut sampler = SamplerState::new(data.class_partition(), batch_size, rng_seed)?;
    Ok(sampler.draw_epoch().into_iter().map(|d| d.index).collect())
}

/// `draws` positions taken from consecutive shuffled passes over the data.
pub fn plain_order(n: usize, draws: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(draws);
    while out.len() < draws {
        let mut pass: Vec<usize> = (0..n).collect();
        pass.shuffle(rng);
        out.extend(pass.into_iter().take(draws - out.len()));
    }
    out
}

#[derive(Clone, Debug)]
pub struct Batch {
    pub input: Tensor<f32>,
    pub labels: LabelMatrix,
    /// Positions in the split.
    pub positions: Vec<usize>,
}

/// Yields mini-batches in exactly the given draw order; the last batch may
/// be short. Augmentation draws from its own generator so the stream is
/// reproducible for a fixed seed.
pub struct BatchIterator<'a> {
    data: &'a LoadedSplit,
    order: Vec<usize>,
    next: usize,
    batch_size: usize,
    augment_p: f64,
    rng: ChaCha8Rng,
}

impl<'a> BatchIterator<'a> {
    pub fn new(
        data: &'a LoadedSplit,
        order: Vec<usize>,
        batch_size: usize,
        augment_p: f64,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if let Some(&bad) = order.iter().find(|&&i| i >= data.len()) {
            return Err(Error::Contract(format!("draw {bad} outside split of {}", data.len())));
        }
        Ok(Self {
            data,
            order,
            next: 0,
            batch_size,
            augment_p,
            rng,
        })
    }

    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

impl Iterator for BatchIterator<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.order.len() {
            return None;
        }
        let end = (self.next + self.batch_size).min(self.order.len());
        let positions = self.order[self.next..end].to_vec();
        self.next = end;
        let images: Vec<Image> = positions
            .iter()
            .map(|&i| augment(&self.data.images[i], &mut self.rng, self.augment_p))
            .collect();
        let m = self.data.num_types;
        let y = positions.iter().flat_map(|&i| self.data.labels[i].iter().copied()).collect();
        Some(to_tensor(&images).and_then(|input| {
            Ok(Batch {
                input,
                labels: LabelMatrix::new(positions.len(), m, y)?,
                positions,
            })
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split(labels: Vec<Vec<u8>>) -> LoadedSplit {
        let n = labels.len();
        LoadedSplit {
            records: (0..n).collect(),
            images: (0..n).map(|i| Image::filled(4, 4, 1, i as f32 / n as f32)).collect(),
            num_types: labels[0].len(),
            labels,
        }
    }

    #[test]
    fn single_class_eight_images_batch_four() {
        let data = split(vec![vec![0]; 8]);
        let order = balanced_order(&data, 4, 1).unwrap();
        assert_eq!(order.len(), 8);
        let it = BatchIterator::new(&data, order, 4, 0.0, epoch_rng(0, 0, 0)).unwrap();
        let batches: Vec<Batch> = it.map(Result::unwrap).collect();
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[0].input.shape(), &[4, 1, 4, 4]);
    }

    #[test]
    fn batches_follow_draw_order_and_labels() {
        let data = split(vec![vec![0, 0], vec![1, 0], vec![0, 1]]);
        let order = vec![2, 0, 1, 2, 2];
        let it = BatchIterator::new(&data, order.clone(), 2, 0.0, epoch_rng(0, 0, 0)).unwrap();
        let batches: Vec<Batch> = it.map(Result::unwrap).collect();
        assert_eq!(batches.len(), 3);
        let flat: Vec<usize> = batches.iter().flat_map(|b| b.positions.clone()).collect();
        assert_eq!(flat, order);
        assert_eq!(batches[0].labels.y, vec![0, 1, 0, 0]);
        assert_eq!(batches[2].input.shape()[0], 1);
    }

    #[test]
    fn normalisation_maps_mid_gray_to_zero() {
        let t = to_tensor(&[Image::filled(1, 1, 1, 0.5), Image::filled(1, 1, 1, 0.75)]).unwrap();
        assert_eq!(t.data(), &[0.0, 1.0]);
    }

    #[test]
    fn plain_order_covers_each_pass() {
        let mut rng = epoch_rng(3, 1, 0);
        let o = plain_order(5, 12, &mut rng);
        assert_eq!(o.len(), 12);
        let mut first: Vec<usize> = o[..5].to_vec();
        first.sort();
        assert_eq!(first, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn partition_groups_by_type() {
        let data = split(vec![vec![0, 0], vec![0, 1], vec![0, 0], vec![0, 1]]);
        assert_eq!(data.class_partition(), vec![vec![0, 2], vec![1, 3]]);
    }
}
