//! Online discrete convolution `y_m = sum_{j<m} K(m - j) f_j` for kernels known
//! in advance and data arriving one sample at a time.
//!
//! Pairs `(j, m)` inside the same leaf block are summed directly. Every other
//! pair is handled once, at the dyadic level where `j` and `m` fall into the
//! left and right halves of an aligned block of size `2s`: when the left half
//! `[l, l + s)` is complete its contribution to `[l + s, l + 2s)` is added with
//! one FFT product of size `2s`. Two real channels share one complex transform.
//! Work is `O(N log^2 N)` per channel.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

struct Level {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    spectra: Vec<Vec<Complex64>>,
}

pub struct OnlineConvolution {
    len: usize,
    channels: usize,
    leaf: usize,
    kernels: Vec<Vec<f64>>,
    data: Vec<Vec<f64>>,
    acc: Vec<Vec<Vec<f64>>>,
    levels: Vec<Level>,
    pushed: usize,
    buf: Vec<Complex64>,
    work: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl OnlineConvolution {
    /// `kernels[k][L]` is the weight at lag `L`; entry 0 is ignored. Each kernel
    /// must cover lags up to `len - 1`.
    pub fn new(kernels: Vec<Vec<f64>>, channels: usize, len: usize, leaf: usize) -> Result<Self> {
        if kernels.is_empty() || channels == 0 {
            return Err(Error::invalid("convolution needs at least one kernel and one channel"));
        }
        if !leaf.is_power_of_two() {
            return Err(Error::invalid("leaf size must be a power of two"));
        }
        if kernels.iter().any(|k| k.len() < len) {
            return Err(Error::invalid("kernel shorter than the convolution length"));
        }
        let mut planner = FftPlanner::new();
        let mut levels = Vec::new();
        let mut size = leaf;
        while size < len {
            let n = 2 * size;
            let forward = planner.plan_fft_forward(n);
            let inverse = planner.plan_fft_inverse(n);
            let mut scratch = vec![Complex64::new(0.0, 0.0); forward.get_inplace_scratch_len()];
            let spectra = kernels
                .iter()
                .map(|k| {
                    let mut v: Vec<Complex64> = (0..n)
                        .map(|l| {
                            let w = if l == 0 || l >= k.len() { 0.0 } else { k[l] };
                            Complex64::new(w / n as f64, 0.0)
                        })
                        .collect();
                    forward.process_with_scratch(&mut v, &mut scratch);
                    v
                })
                .collect();
            levels.push(Level {
                size,
                forward,
                inverse,
                spectra,
            });
            size *= 2;
        }
        let scratch_len = levels
            .iter()
            .map(|l| l.forward.get_inplace_scratch_len().max(l.inverse.get_inplace_scratch_len()))
            .max()
            .unwrap_or(0);
        let top = levels.last().map_or(0, |l| 2 * l.size);
        Ok(Self {
            len,
            channels,
            leaf,
            acc: vec![vec![vec![0.0; len]; channels]; kernels.len()],
            kernels,
            data: vec![vec![0.0; len]; channels],
            levels,
            pushed: 0,
            buf: vec![Complex64::new(0.0, 0.0); top],
            work: vec![Complex64::new(0.0, 0.0); top],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        })
    }

    pub fn pushed(&self) -> usize {
        self.pushed
    }

    /// Appends `f_j` for `j = pushed()`.
    pub fn push(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.channels, "channel count mismatch");
        assert!(self.pushed < self.len, "convolution length exceeded");
        let j = self.pushed;
        for (c, &v) in values.iter().enumerate() {
            self.data[c][j] = v;
        }
        self.pushed += 1;
        let m = self.pushed;
        for li in 0..self.levels.len() {
            let s = self.levels[li].size;
            if m >= s && m % (2 * s) == s && m < self.len {
                self.block(li, m - s);
            }
        }
    }

    fn block(&mut self, li: usize, start: usize) {
        let level = &self.levels[li];
        let s = level.size;
        let n = 2 * s;
        let targets = s.min(self.len - (start + s));
        let zero = Complex64::new(0.0, 0.0);
        let mut c = 0;
        while c < self.channels {
            let pair = c + 1 < self.channels;
            let buf = &mut self.buf[..n];
            for i in 0..s {
                let re = self.data[c][start + i];
                let im = if pair { self.data[c + 1][start + i] } else { 0.0 };
                buf[i] = Complex64::new(re, im);
            }
            buf[s..].fill(zero);
            level.forward.process_with_scratch(buf, &mut self.scratch);
            for (k, spectrum) in level.spectra.iter().enumerate() {
                let work = &mut self.work[..n];
                for i in 0..n {
                    work[i] = buf[i] * spectrum[i];
                }
                level.inverse.process_with_scratch(work, &mut self.scratch);
                let acc = &mut self.acc[k];
                for t in 0..targets {
                    let v = work[s + t];
                    acc[c][start + s + t] += v.re;
                    if pair {
                        acc[c + 1][start + s + t] += v.im;
                    }
                }
            }
            c += 2;
        }
    }

    /// Writes `sum_{j<m} K_k(m - j) f_j` for every channel, `m = pushed()`.
    pub fn current(&self, kernel: usize, out: &mut [f64]) {
        let m = self.pushed;
        assert!(m < self.len, "no target beyond the convolution length");
        let lo = (m / self.leaf) * self.leaf;
        let k = &self.kernels[kernel];
        for (c, o) in out.iter_mut().enumerate() {
            let data = &self.data[c];
            let mut sum = self.acc[kernel][c][m];
            for j in lo..m {
                sum += k[m - j] * data[j];
            }
            *o = sum;
        }
    }

    /// Stored sample `f_j` of a channel.
    pub fn sample(&self, channel: usize, j: usize) -> f64 {
        self.data[channel][j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct(kernel: &[f64], data: &[Vec<f64>], m: usize, c: usize) -> f64 {
        (0..m).map(|j| kernel[m - j] * data[c][j]).sum()
    }

    #[test]
    fn matches_direct_sum() {
        let len = 777;
        let k1: Vec<f64> = (0..len).map(|l| 1.0 / (1.0 + l as f64).powf(0.7)).collect();
        let k2: Vec<f64> = (0..len).map(|l| (l as f64 * 0.01).cos()).collect();
        for channels in [1usize, 2, 3] {
            let mut conv = OnlineConvolution::new(vec![k1.clone(), k2.clone()], channels, len, 4).unwrap();
            let mut data = vec![Vec::new(); channels];
            let mut out = vec![0.0; channels];
            for m in 0..len {
                for (kidx, kernel) in [&k1, &k2].iter().enumerate() {
                    conv.current(kidx, &mut out);
                    for c in 0..channels {
                        let want = direct(kernel, &data, m, c);
                        assert!((out[c] - want).abs() < 1e-10 * (1.0 + want.abs()), "m={m} c={c}");
                    }
                }
                let vals: Vec<f64> = (0..channels).map(|c| ((m * (c + 1)) as f64 * 0.13).sin()).collect();
                for c in 0..channels {
                    data[c].push(vals[c]);
                }
                if m + 1 < len {
                    conv.push(&vals);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_leaf() {
        assert!(OnlineConvolution::new(vec![vec![0.0; 10]], 1, 10, 3).is_err());
        assert!(OnlineConvolution::new(vec![vec![0.0; 5]], 1, 10, 4).is_err());
    }
}
