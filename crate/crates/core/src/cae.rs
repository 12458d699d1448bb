//! Convolutional autoencoder whose encoder supplies latent vectors for class
//! decomposition.
//!
//! Encoder: `conv3x3(f1, stride 2) -> relu -> conv3x3(f2, stride 2) -> relu`.
//! Decoder: `upsample -> conv3x3(f1) -> relu -> upsample -> conv3x3(1) -> sigmoid`.
//! The latent vector is the flattened second encoder stage, of length
//! `f2 * (h / 4) * (w / 4)`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Grid;
use crate::decomposition::LatentVector;
use crate::nn::{accumulate_batch, mse, Adam, Network, NetworkBuilder, Tensor};
use crate::{seed, Error, Result};

const ENCODER_LAYERS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaeTrainConfig {
    pub filters: [usize; 2],
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for CaeTrainConfig {
    fn default() -> Self {
        Self {
            filters: [16, 8],
            lr: 0.001,
            epochs: 50,
            batch_size: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel {
    pub network: Network,
    pub latent_dim: usize,
}

#[derive(Clone, Debug)]
pub struct CaeOutcome {
    pub encoder: EncoderModel,
    /// Full autoencoder, for reconstruction checks.
    pub autoencoder: Network,
    /// Mean reconstruction loss per epoch.
    pub loss_history: Vec<f64>,
}

/// Builds the untrained autoencoder for `height x width` inputs. Both sides
/// must be multiples of 4 so the decoder reproduces the input shape.
pub fn build_autoencoder(height: usize, width: usize, filters: [usize; 2], seed: u64) -> Result<Network> {
    if height == 0 || width == 0 || !height.is_multiple_of(4) || !width.is_multiple_of(4) {
        return Err(Error::invalid(format!(
            "autoencoder input {height}x{width} must have sides divisible by 4"
        )));
    }
    if filters.contains(&0) {
        return Err(Error::invalid("filter counts must be positive"));
    }
    let net = NetworkBuilder::new(vec![1, height, width])
        .conv(filters[0], 2)?
        .relu()?
        .conv(filters[1], 2)?
        .relu()?
        .upsample()?
        .conv(filters[0], 1)?
        .relu()?
        .upsample()?
        .conv(1, 1)?
        .sigmoid()?
        .build(&mut seed::rng(seed));
    Ok(net)
}

fn split_encoder(autoencoder: &Network) -> Result<EncoderModel> {
    let network = Network::new(
        autoencoder.input_shape.clone(),
        autoencoder.layers[..ENCODER_LAYERS].to_vec(),
    )?;
    let latent_dim = network.output_shape()?.iter().product();
    Ok(EncoderModel { network, latent_dim })
}

/// Trains on all given images jointly with Adam on mean squared
/// reconstruction error and returns the encoder half.
pub fn train_cae(images: &[&Grid], cfg: &CaeTrainConfig, seed: u64, deterministic: bool) -> Result<CaeOutcome> {
    let first = images.first().ok_or_else(|| Error::invalid("no images to train the autoencoder on"))?;
    if !(cfg.lr > 0.0) || cfg.batch_size == 0 {
        return Err(Error::invalid("autoencoder lr and batch_size must be positive"));
    }
    let (h, w) = (first.height, first.width);
    if images.iter().any(|g| g.height != h || g.width != w) {
        return Err(Error::invalid("autoencoder images must share one size"));
    }
    let mut net = build_autoencoder(h, w, cfg.filters, seed::derive(seed, "init"))?;
    let inputs: Vec<Tensor> = images.iter().map(|g| Tensor::image(g)).collect();
    let batch = cfg.batch_size.min(inputs.len());
    let mut adam = Adam::new(&net, cfg.lr);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut loss_history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::rng(seed::derive_index(seed, epoch as u64)));
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let xs: Vec<&Tensor> = chunk.iter().map(|&i| &inputs[i]).collect();
            let (grads, loss) = accumulate_batch(&net, &xs, deterministic, |j, out| mse(out, xs[j]))?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("autoencoder loss at epoch {epoch}"),
                });
            }
            total += loss;
            adam.step(&mut net, &grads, chunk.len())?;
        }
        let mean = total / inputs.len() as f64;
        log::debug!("cae epoch {epoch}: mse {mean:.6}");
        loss_history.push(mean);
    }

    Ok(CaeOutcome {
        encoder: split_encoder(&net)?,
        autoencoder: net,
        loss_history,
    })
}

pub fn encode(model: &EncoderModel, image: &Grid) -> Result<LatentVector> {
    let out = model.network.forward(&Tensor::image(image))?;
    Ok(LatentVector(out.into_data()))
}

/// Mean squared reconstruction error of `images` under `autoencoder`.
pub fn reconstruction_error(autoencoder: &Network, images: &[&Grid]) -> Result<f64> {
    let mut total = 0.0;
    for g in images {
        let x = Tensor::image(g);
        total += mse(&autoencoder.forward(&x)?, &x)?.0;
    }
    Ok(total / images.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(epochs: usize) -> CaeTrainConfig {
        CaeTrainConfig {
            filters: [4, 2],
            lr: 0.01,
            epochs,
            batch_size: 8,
        }
    }

    #[test]
    fn decoder_restores_input_shape() {
        let net = build_autoencoder(12, 8, [4, 2], 0).unwrap();
        assert_eq!(net.output_shape().unwrap(), vec![1, 12, 8]);
        assert!(build_autoencoder(10, 8, [4, 2], 0).is_err());
    }

    #[test]
    fn zero_epochs_gives_a_seeded_random_encoder() {
        let g = Grid::filled(8, 8, 0.3);
        let a = train_cae(&[&g], &small_cfg(0), 5, true).unwrap();
        let b = train_cae(&[&g], &small_cfg(0), 5, true).unwrap();
        assert_eq!(a.encoder, b.encoder);
        assert!(a.loss_history.is_empty());
        assert_eq!(a.encoder.latent_dim, 2 * 2 * 2);
    }

    #[test]
    fn encoding_is_deterministic_with_expected_length() {
        let g = Grid::new(8, 8, (0..64).map(|i| f64::from(i) / 63.0).collect()).unwrap();
        let out = train_cae(&[&g], &small_cfg(1), 1, true).unwrap();
        let a = encode(&out.encoder, &g).unwrap();
        assert_eq!(a.len(), out.encoder.latent_dim);
        assert_eq!(a, encode(&out.encoder, &g).unwrap());
        assert!(encode(&out.encoder, &Grid::filled(4, 4, 0.0)).is_err());
    }

    #[test]
    fn zero_image_through_zero_bias_encoder_is_zero() {
        let out = train_cae(&[&Grid::filled(8, 8, 0.5)], &small_cfg(0), 2, true).unwrap();
        let z = encode(&out.encoder, &Grid::filled(8, 8, 0.0)).unwrap();
        assert!(z.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_images_reconstruct_well() {
        let g = Grid::new(8, 8, (0..64).map(|i| if i % 9 == 0 { 0.9 } else { 0.1 }).collect()).unwrap();
        let imgs: Vec<&Grid> = vec![&g; 16];
        let cfg = CaeTrainConfig {
            epochs: 150,
            lr: 0.01,
            ..small_cfg(0)
        };
        let out = train_cae(&imgs, &cfg, 3, true).unwrap();
        let last = *out.loss_history.last().unwrap();
        assert!(last < out.loss_history[0]);
        assert!(last < 5e-3, "final mse {last}");
        let z0 = encode(&out.encoder, &g).unwrap();
        for img in &imgs {
            let z = encode(&out.encoder, img).unwrap();
            assert!(z.0.iter().zip(&z0.0).all(|(a, b)| (a - b).abs() < 1e-6));
        }
    }
}
