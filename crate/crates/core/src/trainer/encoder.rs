//! Small affine encoder mapping raw feature vectors to unit-norm descriptors.
//!
//! Either a single affine layer or affine → tanh → affine, always followed by
//! L2 normalization. Parameters live in one flat vector so the optimizer can
//! treat them uniformly.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::embedding::{l2_norm, Descriptor, EmbeddingSet, MIN_NORM};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ISCW";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    d_in: usize,
    d_hidden: Option<usize>,
    d_out: usize,
    params: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    hidden: Option<Vec<f64>>,
    norm: f64,
    output: Descriptor,
}

impl ForwardCache {
    pub fn output(&self) -> &Descriptor {
        &self.output
    }
}

fn param_count(d_in: usize, d_hidden: Option<usize>, d_out: usize) -> usize {
    match d_hidden {
        None => d_in * d_out + d_out,
        Some(h) => d_in * h + h + h * d_out + d_out,
    }
}

impl Encoder {
    /// Random encoder: weights drawn from N(0, 1/fan_in), biases zero.
    pub fn new(d_in: usize, d_hidden: Option<usize>, d_out: usize, rng: &mut Rng) -> Result<Self> {
        if d_in == 0 || d_out == 0 || d_hidden == Some(0) {
            return Err(Error::InvalidConfig("encoder dims must be positive".into()));
        }
        let mut params = vec![0.0; param_count(d_in, d_hidden, d_out)];
        let mut fill = |offset: usize, rows: usize, cols: usize| {
            let scale = 1.0 / (rows as f64).sqrt();
            for p in &mut params[offset..offset + rows * cols] {
                let z: f64 = StandardNormal.sample(rng);
                *p = scale * z;
            }
        };
        match d_hidden {
            None => fill(0, d_in, d_out),
            Some(h) => {
                fill(0, d_in, h);
                fill(d_in * h + h, h, d_out);
            }
        }
        Ok(Encoder {
            d_in,
            d_hidden,
            d_out,
            params,
        })
    }

    /// Single-layer encoder with identity weights and zero bias.
    pub fn identity(dim: usize) -> Self {
        let mut params = vec![0.0; dim * dim + dim];
        for i in 0..dim {
            params[i * dim + i] = 1.0;
        }
        Encoder {
            d_in: dim,
            d_hidden: None,
            d_out: dim,
            params,
        }
    }

    pub fn from_params(
        d_in: usize,
        d_hidden: Option<usize>,
        d_out: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        let expected = param_count(d_in, d_hidden, d_out);
        if params.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                found: params.len(),
            });
        }
        Ok(Encoder {
            d_in,
            d_hidden,
            d_out,
            params,
        })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_hidden(&self) -> Option<usize> {
        self.d_hidden
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    /// Index ranges of the bias vectors inside [`Encoder::params`].
    pub fn bias_ranges(&self) -> Vec<std::ops::Range<usize>> {
        match self.d_hidden {
            None => {
                let b = self.d_in * self.d_out;
                std::iter::once(b..b + self.d_out).collect()
            }
            Some(h) => {
                let b2 = self.d_in * h + h + h * self.d_out;
                vec![self.d_in * h..self.d_in * h + h, b2..b2 + self.d_out]
            }
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn affine(x: &[f64], w: &[f64], b: &[f64], out: &mut [f64]) {
        let cols = b.len();
        out.copy_from_slice(b);
        for (i, &xi) in x.iter().enumerate() {
            let row = &w[i * cols..(i + 1) * cols];
            for (o, &wv) in out.iter_mut().zip(row) {
                *o += xi * wv;
            }
        }
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.d_in {
            return Err(Error::DimMismatch {
                expected: self.d_in,
                found: x.len(),
            });
        }
        let mut z = vec![0.0; self.d_out];
        let hidden = match self.d_hidden {
            None => {
                let (w, b) = self.params.split_at(self.d_in * self.d_out);
                Self::affine(x, w, b, &mut z);
                None
            }
            Some(h) => {
                let (w1, rest) = self.params.split_at(self.d_in * h);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(h * self.d_out);
                let mut a = vec![0.0; h];
                Self::affine(x, w1, b1, &mut a);
                for v in a.iter_mut() {
                    *v = v.tanh();
                }
                Self::affine(&a, w2, b2, &mut z);
                Some(a)
            }
        };
        let norm = l2_norm(&z);
        if !norm.is_finite() || norm < MIN_NORM {
            return Err(Error::ZeroVector);
        }
        let output = Descriptor::new(z.iter().map(|v| v / norm).collect())?;
        Ok(ForwardCache {
            input: x.to_vec(),
            hidden,
            norm,
            output,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Descriptor> {
        Ok(self.forward_cached(x)?.output)
    }

    /// Accumulates into `grad` the parameter gradient given `grad_out`, the
    /// gradient of the loss with respect to the normalized output.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let y = cache.output.as_slice();
        let proj: f64 = y.iter().zip(grad_out).map(|(a, b)| a * b).sum();
        let gz: Vec<f64> = grad_out
            .iter()
            .zip(y)
            .map(|(g, yv)| (g - yv * proj) / cache.norm)
            .collect();

        let outer = |inp: &[f64], g: &[f64], gw: &mut [f64]| {
            let cols = g.len();
            for (i, &xi) in inp.iter().enumerate() {
                for (w, &gv) in gw[i * cols..(i + 1) * cols].iter_mut().zip(g) {
                    *w += xi * gv;
                }
            }
        };
        match (self.d_hidden, &cache.hidden) {
            (None, _) => {
                let (gw, gb) = grad.split_at_mut(self.d_in * self.d_out);
                outer(&cache.input, &gz, gw);
                for (b, g) in gb.iter_mut().zip(&gz) {
                    *b += g;
                }
            }
            (Some(h), Some(act)) => {
                let w2 = &self.params[self.d_in * h + h..self.d_in * h + h + h * self.d_out];
                let (gw1, rest) = grad.split_at_mut(self.d_in * h);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(h * self.d_out);
                outer(act, &gz, gw2);
                for (b, g) in gb2.iter_mut().zip(&gz) {
                    *b += g;
                }
                let ga: Vec<f64> = (0..h)
                    .map(|j| {
                        let gh: f64 = w2[j * self.d_out..(j + 1) * self.d_out]
                            .iter()
                            .zip(&gz)
                            .map(|(w, g)| w * g)
                            .sum();
                        gh * (1.0 - act[j] * act[j])
                    })
                    .collect();
                outer(&cache.input, &ga, gw1);
                for (b, g) in gb1.iter_mut().zip(&ga) {
                    *b += g;
                }
            }
            (Some(_), None) => unreachable!("hidden cache missing"),
        }
    }

    /// Encodes every row of a raw set into a unit set with the same ids.
    pub fn encode_set(&self, raw: &EmbeddingSet) -> Result<EmbeddingSet> {
        let mut out = Vec::with_capacity(raw.len());
        for i in 0..raw.len() {
            let d = self.forward(&raw.row_f64(i)).map_err(|e| Error::Target {
                id: raw.id(i).to_owned(),
                source: Box::new(e),
            })?;
            out.push(d);
        }
        EmbeddingSet::from_descriptors(self.d_out, raw.ids().to_vec(), &out)
    }

    /// Writes `ISCW | version u32 | d_in u32 | d_hidden u32 (0 = none) | d_out u32 |
    /// params f32...`, little-endian.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        w.write_all(CHECKPOINT_MAGIC)?;
        for v in [
            CHECKPOINT_VERSION,
            self.d_in as u32,
            self.d_hidden.unwrap_or(0) as u32,
            self.d_out as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for &p in &self.params {
            w.write_all(&(p as f32).to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.len() < 20 || &bytes[0..4] != CHECKPOINT_MAGIC {
            return Err(Error::Format("not an encoder checkpoint".into()));
        }
        let word =
            |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        if word(0) != CHECKPOINT_VERSION as usize {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {}",
                word(0)
            )));
        }
        let (d_in, d_hidden, d_out) = (word(1), word(2), word(3));
        let d_hidden = (d_hidden > 0).then_some(d_hidden);
        let payload = &bytes[20..];
        let expected = param_count(d_in, d_hidden, d_out);
        if payload.len() != expected * 4 {
            return Err(Error::Format(format!(
                "checkpoint holds {} bytes of weights, expected {}",
                payload.len(),
                expected * 4
            )));
        }
        let params = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Encoder::from_params(d_in, d_hidden, d_out, params)
    }

    /// Rounds parameters to the precision a checkpoint stores.
    pub fn quantize_to_f32(&mut self) {
        for p in &mut self.params {
            *p = *p as f32 as f64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn identity_normalizes() {
        let e = Encoder::identity(2);
        let d = e.forward(&[3.0, 4.0]).unwrap();
        assert!((d.as_slice()[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn outputs_are_unit_norm() {
        let mut r = rng::stream(1, "enc");
        for hidden in [None, Some(5)] {
            let e = Encoder::new(6, hidden, 4, &mut r).unwrap();
            let d = e.forward(&[0.1, -2.0, 0.3, 1.0, 0.0, 4.0]).unwrap();
            assert!((d.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_input_with_zero_bias_is_error() {
        let e = Encoder::identity(3);
        assert!(matches!(
            e.forward(&[0.0, 0.0, 0.0]),
            Err(Error::ZeroVector)
        ));
        assert!(matches!(e.forward(&[1.0]), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.bin");
        let mut e = Encoder::new(5, Some(3), 2, &mut rng::stream(2, "enc")).unwrap();
        e.save(&path).unwrap();
        let back = Encoder::load(&path).unwrap();
        e.quantize_to_f32();
        assert_eq!(back, e);
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"ISCW");
    }

    #[test]
    fn truncated_checkpoint_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.bin");
        Encoder::identity(3).save(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(Encoder::load(&path), Err(Error::Format(_))));
    }
}
