//! In-place iterative radix-2 FFT over `Complex64`.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Precomputed twiddles and bit-reversal permutation for one power-of-two length.
#[derive(Debug, Clone)]
pub struct Radix2 {
    len: usize,
    twiddles: Vec<Complex64>,
    reversed: Vec<u32>,
}

impl Radix2 {
    pub fn new(len: usize) -> Result<Self> {
        if !len.is_power_of_two() || len > u32::MAX as usize {
            return Err(Error::domain(format!("FFT length {len} is not a power of two")));
        }
        let bits = len.trailing_zeros();
        let twiddles = (0..len / 2)
            .map(|k| {
                let angle = -2.0 * core::f64::consts::PI * k as f64 / len as f64;
                Complex64::new(libm::cos(angle), libm::sin(angle))
            })
            .collect();
        let reversed = (0..len as u32)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (32 - bits) })
            .collect();
        Ok(Radix2 {
            len,
            twiddles,
            reversed,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.process(buf, false);
    }

    /// Inverse transform, scaled by `1/len`.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.process(buf, true);
        let scale = 1.0 / self.len as f64;
        for x in buf.iter_mut() {
            *x *= scale;
        }
    }

    fn process(&self, buf: &mut [Complex64], inverse: bool) {
        assert_eq!(buf.len(), self.len, "buffer length must match the plan");
        for (i, &r) in self.reversed.iter().enumerate() {
            let r = r as usize;
            if i < r {
                buf.swap(i, r);
            }
        }
        let mut half = 1;
        while half < self.len {
            let stride = self.len / (2 * half);
            for block in buf.chunks_exact_mut(2 * half) {
                let (lo, hi) = block.split_at_mut(half);
                for (k, (a, b)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                    let mut w = self.twiddles[k * stride];
                    if inverse {
                        w = w.conj();
                    }
                    let t = *b * w;
                    *b = *a - t;
                    *a += t;
                }
            }
            half *= 2;
        }
    }
}
