//! Iterative radix-2 FFT with precomputed twiddles. Kept in-repo so the
//! spectral reference solver has no external transform dependency and the
//! transform itself stays unit-testable against the naive O(n²) sum.

use crate::error::{HkError, Result};
use crate::C64;

/// Reusable transform plan for a fixed power-of-two length.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    twiddles: Vec<C64>,
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(HkError::BadShape(format!(
                "FFT length must be a power of two, got {n}"
            )));
        }
        let twiddles = (0..n / 2)
            .map(|k| C64::from_polar(1.0, -2.0 * std::f64::consts::PI * k as f64 / n as f64))
            .collect();
        Ok(FftPlan { n, twiddles })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform: `X_k = Σ_j x_j e^{-2πi jk/n}`.
    pub fn forward(&self, buf: &mut [C64]) {
        self.transform(buf, false);
    }

    /// In-place inverse transform, normalized by `1/n`.
    pub fn inverse(&self, buf: &mut [C64]) {
        self.transform(buf, true);
        let scale = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, buf: &mut [C64], inverse: bool) {
        let n = self.n;
        assert_eq!(buf.len(), n, "buffer length must match plan length");
        if n == 1 {
            return;
        }

        let shift = (n - 1).leading_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> shift;
            if i < j {
                buf.swap(i, j);
            }
        }

        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let step = n / len;
            for block in (0..n).step_by(len) {
                for j in 0..half {
                    let mut w = self.twiddles[j * step];
                    if inverse {
                        w = w.conj();
                    }
                    let a = buf[block + j];
                    let b = buf[block + j + half] * w;
                    buf[block + j] = a + b;
                    buf[block + j + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}
