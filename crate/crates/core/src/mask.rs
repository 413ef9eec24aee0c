//! Binary masks and their run-length encoding.
//!
//! Runs alternate zero/one over the row-major pixel order, always starting with
//! a zero run (which is `0` when the first pixel is set).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MaskError {
    #[error("mask resolution mismatch: {0}x{1} vs {2}x{3}")]
    ResolutionMismatch(u32, u32, u32, u32),
    #[error("run lengths sum to {got}, expected {expected}")]
    RunTotal { got: u64, expected: u64 },
    #[error("mask data has {got} pixels, expected {expected}")]
    DataLength { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    pub width: u32,
    pub height: u32,
    pub counts: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Rle", into = "Rle")]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(width: u32, height: u32) -> Self {
        BinaryMask { width, height, data: vec![false; width as usize * height as usize] }
    }

    pub fn from_vec(width: u32, height: u32, data: Vec<bool>) -> Result<Self, MaskError> {
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(MaskError::DataLength { got: data.len(), expected });
        }
        Ok(BinaryMask { width, height, data })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        BinaryMask { width, height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, u: u32, v: u32) -> bool {
        self.data[v as usize * self.width as usize + u as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, value: bool) {
        let w = self.width as usize;
        self.data[v as usize * w + u as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|b| *b)
    }

    pub fn same_shape(&self, other: &BinaryMask) -> Result<(), MaskError> {
        if self.width != other.width || self.height != other.height {
            return Err(MaskError::ResolutionMismatch(self.width, self.height, other.width, other.height));
        }
        Ok(())
    }

    pub fn encode(&self) -> Rle {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for &px in &self.data {
            if px == current {
                run += 1;
            } else {
                counts.push(run);
                current = px;
                run = 1;
            }
        }
        counts.push(run);
        Rle { width: self.width, height: self.height, counts }
    }

    pub fn decode(rle: &Rle) -> Result<Self, MaskError> {
        let expected = rle.width as u64 * rle.height as u64;
        let got: u64 = rle.counts.iter().map(|&c| c as u64).sum();
        if got != expected {
            return Err(MaskError::RunTotal { got, expected });
        }
        let mut data = Vec::with_capacity(expected as usize);
        for (i, &c) in rle.counts.iter().enumerate() {
            data.extend(std::iter::repeat_n(i % 2 == 1, c as usize));
        }
        Ok(BinaryMask { width: rle.width, height: rle.height, data })
    }
}

impl TryFrom<Rle> for BinaryMask {
    type Error = MaskError;
    fn try_from(rle: Rle) -> Result<Self, MaskError> {
        BinaryMask::decode(&rle)
    }
}

impl From<BinaryMask> for Rle {
    fn from(m: BinaryMask) -> Rle {
        m.encode()
    }
}
