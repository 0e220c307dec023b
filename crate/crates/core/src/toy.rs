//! Seeded random toy checkpoints and synthetic image sets.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tensor::TensorF32;
use crate::vit::{predict_from_logits, Batch, ViTConfig, ViTModel};

/// Standard deviation of linear weights in [`random_model`].
pub const WEIGHT_STD: f32 = 0.005;

/// Random weights: linear weights and embeddings from `N(0, WEIGHT_STD²)`,
/// layer-norm gains near 1, biases a tenth of the weight scale. Most
/// values sit close to zero, as in trained ViT checkpoints.
pub fn random_model(config: ViTConfig, seed: u64) -> Result<ViTModel> {
    random_model_with_std(config, seed, WEIGHT_STD)
}

pub fn random_model_with_std(config: ViTConfig, seed: u64, weight_std: f32) -> Result<ViTModel> {
    config.validate()?;
    let params = config
        .tensor_shapes()
        .into_iter()
        .enumerate()
        .map(|(i, (name, shape))| {
            let mut rng = rng_from_seed(derive_seed(&[seed, i as u64]));
            let n: usize = shape.iter().product();
            let (mean, std) = init_for(&name, weight_std);
            let dist = Normal::new(mean, std).expect("valid normal");
            let data = (0..n).map(|_| dist.sample(&mut rng)).collect();
            TensorF32::new(name, shape, data)
        })
        .collect::<Result<Vec<_>>>()?;
    ViTModel::new(config, params)
}

/// Images used to fit the head in [`toy_model`].
pub const HEAD_FIT_IMAGES: usize = 512;

/// Random body with a nearest-class-mean head: [`random_model`] followed
/// by [`fit_head`] on seeded synthetic images.
pub fn toy_model(config: ViTConfig, seed: u64) -> Result<ViTModel> {
    toy_model_with_std(config, seed, WEIGHT_STD)
}

pub fn toy_model_with_std(config: ViTConfig, seed: u64, weight_std: f32) -> Result<ViTModel> {
    let mut model = random_model_with_std(config, seed, weight_std)?;
    let images = synthetic_images(model.config(), HEAD_FIT_IMAGES, derive_seed(&[seed, 0x4EAD]))?;
    fit_head(&mut model, &Batch::new(images, None)?, weight_std)?;
    Ok(model)
}

/// Replace the classifier with a nearest-class-mean head over the model's
/// own features.
///
/// Features of `batch` are centred and split into `num_classes` groups by
/// k-means (farthest-point seeding, fixed iteration count). Column `c` of
/// the head points from the global mean to group `c`'s mean with the mean
/// direction projected out, scaled so the weights have standard deviation
/// `weight_std`; the bias is zero. Deterministic for a given model and batch.
pub fn fit_head(model: &mut ViTModel, batch: &Batch, weight_std: f32) -> Result<()> {
    let d = model.config().embed_dim;
    let k = model.config().num_classes;
    let feats = model.features(batch)?;
    let n = batch.len();
    if n < k {
        return Err(Error::Config(format!("fit_head needs at least {k} images, got {n}")));
    }

    let mut mean = vec![0f64; d];
    for row in feats.chunks_exact(d) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64 / n as f64;
        }
    }
    let x: Vec<Vec<f64>> = feats
        .chunks_exact(d)
        .map(|row| row.iter().zip(&mean).map(|(&v, m)| v as f64 - m).collect())
        .collect();
    let centres = kmeans(&x, k, 20);

    // project out the mean direction so no bias is needed
    let norm = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
    let unit: Vec<f64> = mean.iter().map(|m| if norm > 0.0 { m / norm } else { 0.0 }).collect();
    let mut w = vec![0f64; d * k];
    for (c, centre) in centres.iter().enumerate() {
        let along: f64 = centre.iter().zip(&unit).map(|(a, b)| a * b).sum();
        for i in 0..d {
            w[i * k + c] = centre[i] - along * unit[i];
        }
    }
    let rms = (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt();
    let scale = if rms > 0.0 { weight_std as f64 / rms } else { 0.0 };
    let weight: Vec<f32> = w.iter().map(|v| (v * scale) as f32).collect();
    let bias = vec![0f32; k];

    model.param_mut("head.weight").expect("head.weight").data = weight;
    model.param_mut("head.bias").expect("head.bias").data = bias;
    Ok(())
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans(x: &[Vec<f64>], k: usize, iters: usize) -> Vec<Vec<f64>> {
    let d = x[0].len();
    let mut centres = vec![x[0].clone()];
    let mut nearest: Vec<f64> = x.iter().map(|p| dist2(p, &centres[0])).collect();
    while centres.len() < k {
        let far = (0..x.len()).fold(0, |best, i| if nearest[i] > nearest[best] { i } else { best });
        centres.push(x[far].clone());
        for (nd, p) in nearest.iter_mut().zip(x) {
            *nd = nd.min(dist2(p, &x[far]));
        }
    }
    for _ in 0..iters {
        let mut sums = vec![vec![0f64; d]; k];
        let mut counts = vec![0usize; k];
        for p in x {
            let c = (0..k)
                .min_by(|&a, &b| dist2(p, &centres[a]).total_cmp(&dist2(p, &centres[b])))
                .expect("k > 0");
            counts[c] += 1;
            sums[c].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centres[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    centres
}

fn init_for(name: &str, weight_std: f32) -> (f32, f32) {
    if name.ends_with("norm1.weight") || name.ends_with("norm2.weight") || name == "norm.weight" {
        (1.0, 0.05)
    } else if name.ends_with(".weight") || name == "cls_token" || name == "pos_embed" {
        (0.0, weight_std)
    } else {
        (0.0, weight_std / 10.0)
    }
}

/// Smooth random images: a few random plane waves per channel plus mild noise.
pub fn synthetic_images(config: &ViTConfig, n: usize, seed: u64) -> Result<TensorF32> {
    let s = config.image_size;
    let c = config.channels;
    let mut data = Vec::with_capacity(n * c * s * s);
    let noise = Normal::new(0.0f32, 0.05).expect("valid normal");
    for img in 0..n {
        let mut rng = rng_from_seed(derive_seed(&[seed, 0x1A6E, img as u64]));
        for _ in 0..c {
            let waves: Vec<(f32, f32, f32, f32)> = (0..3)
                .map(|_| {
                    (
                        rng.random_range(-0.8f32..0.8),
                        rng.random_range(-0.8f32..0.8),
                        rng.random_range(0.0f32..std::f32::consts::TAU),
                        rng.random_range(0.2f32..1.0),
                    )
                })
                .collect();
            for y in 0..s {
                for x in 0..s {
                    let v: f32 = waves
                        .iter()
                        .map(|&(fx, fy, ph, a)| a * (fx * x as f32 + fy * y as f32 + ph).sin())
                        .sum();
                    data.push(v + noise.sample(&mut rng));
                }
            }
        }
    }
    TensorF32::new("images", vec![n, c, s, s], data)
}

/// Candidate images drawn per kept image in [`teacher_dataset`].
pub const CANDIDATES_PER_IMAGE: usize = 32;

/// Top-1 minus top-2 logit for each row.
pub fn logit_margins(logits: &[f32], num_classes: usize) -> Vec<f32> {
    logits
        .chunks_exact(num_classes)
        .map(|row| {
            let mut top = [f32::NEG_INFINITY; 2];
            for &v in row {
                if v > top[0] {
                    top = [v, top[0]];
                } else if v > top[1] {
                    top[1] = v;
                }
            }
            top[0] - top[1]
        })
        .collect()
}

/// `n` synthetic images labelled with the model's own fault-free predictions.
///
/// Draws `CANDIDATES_PER_IMAGE × n` candidates, drops those below the
/// median top-1 margin, groups the rest by predicted class and keeps the
/// widest margins, taking one image per class in turn so the labels stay
/// as balanced as the model allows. Kept images
/// stay in candidate order. An untrained model has many near-tie inputs;
/// keeping confident ones gives an evaluation set that behaves like a
/// trained model's test set.
pub fn teacher_dataset(model: &ViTModel, n: usize, seed: u64) -> Result<Batch> {
    let pool = synthetic_images(model.config(), n * CANDIDATES_PER_IMAGE, seed)?;
    let pool = Batch::new(pool, None)?;
    let nc = model.config().num_classes;
    let logits = model.forward(&pool)?;
    let margins = logit_margins(&logits, nc);
    let labels = predict_from_logits(&logits, nc);

    let mut sorted: Vec<f32> = margins.iter().copied().filter(|m| m.is_finite()).collect();
    sorted.sort_by(f32::total_cmp);
    let floor = sorted.get(sorted.len() / 2).copied().unwrap_or(f32::INFINITY);

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); nc];
    for (i, &l) in labels.iter().enumerate() {
        if (l as usize) < nc && margins[i] >= floor {
            by_class[l as usize].push(i);
        }
    }
    for members in &mut by_class {
        members.sort_by(|&a, &b| margins[b].total_cmp(&margins[a]).then(a.cmp(&b)));
        members.reverse();
    }
    let mut keep = Vec::with_capacity(n);
    while keep.len() < n {
        let before = keep.len();
        for members in by_class.iter_mut() {
            if keep.len() == n {
                break;
            }
            if let Some(i) = members.pop() {
                keep.push(i);
            }
        }
        if keep.len() == before {
            return Err(Error::Dataset(format!("only {before} usable candidates for {n} images")));
        }
    }
    keep.sort_unstable();

    let per: usize = pool.images.shape[1..].iter().product();
    let mut data = Vec::with_capacity(n * per);
    for &i in &keep {
        data.extend_from_slice(&pool.images.data[i * per..(i + 1) * per]);
    }
    let mut shape = pool.images.shape.clone();
    shape[0] = n;
    let images = TensorF32::new("images", shape, data)?;
    let unlabeled = Batch::new(images, None)?;
    let labels = model.predict(&unlabeled)?;
    Batch::new(unlabeled.images, Some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::params_bit_eq;

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = random_model(ViTConfig::toy_tiny(), 0).unwrap();
        let b = random_model(ViTConfig::toy_tiny(), 0).unwrap();
        let c = random_model(ViTConfig::toy_tiny(), 1).unwrap();
        assert!(params_bit_eq(a.params(), b.params()));
        assert!(!params_bit_eq(a.params(), c.params()));
        let i1 = synthetic_images(a.config(), 4, 3).unwrap();
        let i2 = synthetic_images(a.config(), 4, 3).unwrap();
        assert!(i1.bit_eq(&i2));
    }

    #[test]
    fn margins_of_rows() {
        let m = logit_margins(&[1.0, 3.0, 2.5, 0.0, -1.0, -1.0], 3);
        assert_eq!(m, vec![0.5, 1.0]);
    }

    #[test]
    fn fitted_head_has_zero_bias_and_target_scale() {
        let m = toy_model(ViTConfig::toy_tiny(), 0).unwrap();
        assert!(m.param("head.bias").unwrap().data.iter().all(|&b| b == 0.0));
        let w = &m.param("head.weight").unwrap().data;
        let rms = (w.iter().map(|v| (v * v) as f64).sum::<f64>() / w.len() as f64).sqrt();
        assert!((rms - WEIGHT_STD as f64).abs() < 1e-6);
    }

    #[test]
    fn teacher_set_is_labelled_confident_and_spread() {
        let m = toy_model(ViTConfig::toy_tiny(), 0).unwrap();
        let b = teacher_dataset(&m, 32, 0).unwrap();
        assert_eq!(b.len(), 32);
        let labels = b.labels.clone().unwrap();
        assert_eq!(labels, m.predict(&b).unwrap());
        let distinct: std::collections::BTreeSet<_> = labels.iter().collect();
        assert!(distinct.len() >= 3);
        let again = teacher_dataset(&m, 32, 0).unwrap();
        assert!(b.images.bit_eq(&again.images));
    }
}
