//! Multidimensional FFT and DST-I helpers over flat, x-fastest arrays.

use std::sync::Arc;

use rustfft::{Fft, FftDirection, FftPlanner};

use crate::grid::C64;

/// Smallest `m >= n` whose prime factors are all in {2, 3, 5}.
pub fn smooth_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Unnormalized FFT of a flat array with up to three axes, x fastest.
///
/// The inverse is unnormalized too; callers divide by [`FftNd::len`].
pub struct FftNd {
    dims: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    line: Vec<C64>,
    scratch: Vec<C64>,
}

impl FftNd {
    pub fn new(dims: &[usize]) -> Self {
        assert!(!dims.is_empty() && dims.iter().all(|&d| d > 0));
        let mut planner = FftPlanner::new();
        let forward: Vec<_> = dims.iter().map(|&d| planner.plan_fft(d, FftDirection::Forward)).collect();
        let inverse: Vec<_> = dims.iter().map(|&d| planner.plan_fft(d, FftDirection::Inverse)).collect();
        let scratch_len = forward
            .iter()
            .chain(inverse.iter())
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        let longest = *dims.iter().max().unwrap();
        Self {
            dims: dims.to_vec(),
            forward,
            inverse,
            line: vec![C64::new(0.0, 0.0); longest],
            scratch: vec![C64::new(0.0, 0.0); scratch_len],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn forward(&mut self, data: &mut [C64]) {
        self.run(data, FftDirection::Forward);
    }

    pub fn inverse(&mut self, data: &mut [C64]) {
        self.run(data, FftDirection::Inverse);
    }

    /// Inverse transform divided by the total length.
    pub fn inverse_normalized(&mut self, data: &mut [C64]) {
        self.inverse(data);
        let s = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }

    fn run(&mut self, data: &mut [C64], dir: FftDirection) {
        assert_eq!(data.len(), self.len(), "FFT buffer length");
        let plans = match dir {
            FftDirection::Forward => &self.forward,
            FftDirection::Inverse => &self.inverse,
        };
        let mut stride = 1;
        for (axis, &n) in self.dims.iter().enumerate() {
            let plan = &plans[axis];
            if n > 1 {
                if stride == 1 {
                    plan.process_with_scratch(data, &mut self.scratch);
                } else {
                    let block = stride * n;
                    let line = &mut self.line[..n];
                    for base in (0..data.len()).step_by(block) {
                        for off in 0..stride {
                            let start = base + off;
                            for (t, v) in line.iter_mut().enumerate() {
                                *v = data[start + t * stride];
                            }
                            plan.process_with_scratch(line, &mut self.scratch);
                            for (t, v) in line.iter().enumerate() {
                                data[start + t * stride] = *v;
                            }
                        }
                    }
                }
            }
            stride *= n;
        }
    }
}

/// DST-I of length `m`: `S_p = sum_{j=1}^{m} x_j sin(pi j p / (m + 1))`.
///
/// Applying it twice multiplies by `(m + 1) / 2`.
pub struct Dst1 {
    m: usize,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<C64>,
    scratch: Vec<C64>,
}

impl Dst1 {
    pub fn new(m: usize) -> Self {
        assert!(m > 0);
        let n = 2 * (m + 1);
        let fft = FftPlanner::new().plan_fft_forward(n);
        let scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        Self { m, fft, buf: vec![C64::new(0.0, 0.0); n], scratch }
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Transforms `x` (length `m`) in place.
    pub fn apply(&mut self, x: &mut [C64]) {
        let m = self.m;
        assert_eq!(x.len(), m);
        let n = 2 * (m + 1);
        self.buf[0] = C64::new(0.0, 0.0);
        self.buf[m + 1] = C64::new(0.0, 0.0);
        for j in 1..=m {
            self.buf[j] = x[j - 1];
            self.buf[n - j] = -x[j - 1];
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        let half_i = C64::new(0.0, 0.5);
        for p in 1..=m {
            x[p - 1] = self.buf[p] * half_i;
        }
    }

    /// Applies the transform to every line along an axis of stride `stride`
    /// in a flat array whose lines along that axis have length `m`.
    pub fn apply_strided(&mut self, data: &mut [C64], stride: usize) {
        let m = self.m;
        let block = stride * m;
        assert_eq!(data.len() % block, 0);
        let mut line = vec![C64::new(0.0, 0.0); m];
        for base in (0..data.len()).step_by(block) {
            for off in 0..stride {
                let start = base + off;
                for (t, v) in line.iter_mut().enumerate() {
                    *v = data[start + t * stride];
                }
                self.apply(&mut line);
                for (t, v) in line.iter().enumerate() {
                    data[start + t * stride] = *v;
                }
            }
        }
    }
}
