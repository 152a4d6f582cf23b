//! Valid (unpadded) 2-D convolution of square multi-channel images.
//!
//! All three schemes use the cross-correlation orientation (no filter flip):
//! `out[x, y, f] = Σ_{i, j, c} img[x + i, y + j, c] · filter_f[i, j, c]`
//! with output side `m = n − k + 1`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// `side × side × channels` image, stored row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    side: usize,
    channels: usize,
    values: Vec<f64>,
}

impl ImageTensor {
    pub fn new(side: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != side * side * channels {
            return Err(Error::InvalidDimensions(format!(
                "{side}×{side}×{channels} image needs {} values, got {}",
                side * side * channels,
                values.len()
            )));
        }
        Ok(ImageTensor {
            side,
            channels,
            values,
        })
    }

    pub fn zeros(side: usize, channels: usize) -> Self {
        ImageTensor {
            side,
            channels,
            values: vec![0.0; side * side * channels],
        }
    }

    pub fn from_fn(
        side: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(side * side * channels);
        for x in 0..side {
            for y in 0..side {
                for c in 0..channels {
                    values.push(f(x, y, c));
                }
            }
        }
        ImageTensor {
            side,
            channels,
            values,
        }
    }

    pub fn random(side: usize, channels: usize, rng: &mut impl Rng) -> Self {
        Self::from_fn(side, channels, |_, _, _| rng.random_range(-1.0..1.0))
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.values[(x * self.side + y) * self.channels + c]
    }

    fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.values[(x * self.side + y) * self.channels + c] = v;
    }

    /// Mean over channels.
    pub fn grayscale(&self) -> ImageTensor {
        let c = self.channels as f64;
        ImageTensor {
            side: self.side,
            channels: 1,
            values: self
                .values
                .chunks(self.channels)
                .map(|px| px.iter().sum::<f64>() / c)
                .collect(),
        }
    }
}

/// Bank of `b` filters, each `k × k × channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    size: usize,
    channels: usize,
    /// Per filter, `weights[(i * k + j) * channels + c]`.
    weights: Vec<Vec<f64>>,
    /// Per filter and channel, column and row factors: `w[i, j, c] = col[i] · row[j]`.
    factors: Option<Vec<Vec<(Vec<f64>, Vec<f64>)>>>,
}

impl FilterBank {
    pub fn new(size: usize, channels: usize, weights: Vec<Vec<f64>>) -> Result<Self> {
        if size == 0 || weights.iter().any(|w| w.len() != size * size * channels) {
            return Err(Error::InvalidDimensions(format!(
                "each filter needs {size}×{size}×{channels} weights"
            )));
        }
        Ok(FilterBank {
            size,
            channels,
            weights,
            factors: None,
        })
    }

    /// Separable bank from per-filter, per-channel `(col, row)` factors.
    pub fn separable(
        size: usize,
        channels: usize,
        factors: Vec<Vec<(Vec<f64>, Vec<f64>)>>,
    ) -> Result<Self> {
        let mut weights = Vec::with_capacity(factors.len());
        for f in &factors {
            if f.len() != channels || f.iter().any(|(c, r)| c.len() != size || r.len() != size) {
                return Err(Error::InvalidDimensions(
                    "separable factors have the wrong shape".into(),
                ));
            }
            let mut w = vec![0.0; size * size * channels];
            for i in 0..size {
                for j in 0..size {
                    for (c, (col, row)) in f.iter().enumerate() {
                        w[(i * size + j) * channels + c] = col[i] * row[j];
                    }
                }
            }
            weights.push(w);
        }
        Ok(FilterBank {
            size,
            channels,
            weights,
            factors: Some(factors),
        })
    }

    /// Deterministic random bank; separable banks are built from random factors.
    pub fn random(count: usize, size: usize, channels: usize, separable: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (size as f64);
        if separable {
            let factors = (0..count)
                .map(|_| {
                    (0..channels)
                        .map(|_| {
                            let col = (0..size)
                                .map(|_| rng.sample::<f64, _>(StandardNormal) * scale.sqrt())
                                .collect();
                            let row = (0..size)
                                .map(|_| rng.sample::<f64, _>(StandardNormal) * scale.sqrt())
                                .collect();
                            (col, row)
                        })
                        .collect()
                })
                .collect();
            Self::separable(size, channels, factors).expect("shapes are consistent")
        } else {
            let weights = (0..count)
                .map(|_| {
                    (0..size * size * channels)
                        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
                        .collect()
                })
                .collect();
            Self::new(size, channels, weights).expect("shapes are consistent")
        }
    }

    pub fn count(&self) -> usize {
        self.weights.len()
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn is_separable(&self) -> bool {
        self.factors.is_some()
    }

    pub fn weight(&self, f: usize, i: usize, j: usize, c: usize) -> f64 {
        self.weights[f][(i * self.size + j) * self.channels + c]
    }
}

fn check(img: &ImageTensor, bank: &FilterBank) -> Result<usize> {
    let (n, k) = (img.side(), bank.size());
    if k >= n {
        return Err(Error::InvalidDimensions(format!(
            "filter size {k} must be < image side {n}"
        )));
    }
    if img.channels() != bank.channels() {
        return Err(Error::InvalidDimensions(format!(
            "image has {} channels, filters expect {}",
            img.channels(),
            bank.channels()
        )));
    }
    Ok(n - k + 1)
}

/// im2col followed by one dense matrix-matrix product.
pub fn convolve_matmul(img: &ImageTensor, bank: &FilterBank) -> Result<ImageTensor> {
    let m = check(img, bank)?;
    let (k, d, b) = (bank.size(), img.channels(), bank.count());
    let patch = k * k * d;
    let cols = DMatrix::from_fn(m * m, patch, |p, q| {
        let (x, y) = (p / m, p % m);
        let (i, rest) = (q / (k * d), q % (k * d));
        let (j, c) = (rest / d, rest % d);
        img.get(x + i, y + j, c)
    });
    let w = DMatrix::from_fn(patch, b, |q, f| bank.weights[f][q]);
    let out = cols * w;
    Ok(ImageTensor::from_fn(m, b, |x, y, f| out[(x * m + y, f)]))
}

/// Row pass then column pass with the stored rank-1 factors of each filter.
pub fn convolve_separable(img: &ImageTensor, bank: &FilterBank) -> Result<ImageTensor> {
    let m = check(img, bank)?;
    let factors = bank.factors.as_ref().ok_or(Error::NotSeparable)?;
    let (n, k) = (img.side(), bank.size());
    let mut out = ImageTensor::zeros(m, factors.len());
    let mut rows = vec![0.0; n * m];
    for (f, per_channel) in factors.iter().enumerate() {
        for (c, (col, row)) in per_channel.iter().enumerate() {
            for x in 0..n {
                for y in 0..m {
                    rows[x * m + y] = (0..k).map(|j| img.get(x, y + j, c) * row[j]).sum();
                }
            }
            for x in 0..m {
                for y in 0..m {
                    let v: f64 = (0..k).map(|i| rows[(x + i) * m + y] * col[i]).sum();
                    let prev = out.get(x, y, f);
                    out.set(x, y, f, prev + v);
                }
            }
        }
    }
    Ok(out)
}

/// Counts of the work done by [`convolve_fft_counted`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FftOpCount {
    /// 2-D transforms of size `n × n` (forward and inverse).
    pub transforms: u64,
    /// Complex multiply-accumulates in the frequency domain.
    pub pointwise: u64,
}

pub fn convolve_fft(img: &ImageTensor, bank: &FilterBank) -> Result<ImageTensor> {
    convolve_fft_counted(img, bank).map(|(out, _)| out)
}

/// Circular cross-correlation on the `n × n` grid via the FFT, cropped to the
/// valid region. For `x, y ≤ n − k` the circular and linear results coincide,
/// so filters are zero-padded to `n × n` and no image padding is needed.
pub fn convolve_fft_counted(
    img: &ImageTensor,
    bank: &FilterBank,
) -> Result<(ImageTensor, FftOpCount)> {
    let m = check(img, bank)?;
    let (n, k, d, b) = (img.side(), bank.size(), img.channels(), bank.count());
    let mut planner = FftPlanner::<f64>::new();
    let fft = Fft2::new(&mut planner, n);
    let mut ops = FftOpCount::default();

    let spectra: Vec<Vec<Complex<f64>>> = (0..d)
        .map(|c| {
            let mut buf: Vec<Complex<f64>> = (0..n * n)
                .map(|p| Complex::new(img.get(p / n, p % n, c), 0.0))
                .collect();
            fft.forward(&mut buf);
            ops.transforms += 1;
            buf
        })
        .collect();

    let mut out = ImageTensor::zeros(m, b);
    let mut acc = vec![Complex::new(0.0, 0.0); n * n];
    let mut kernel = vec![Complex::new(0.0, 0.0); n * n];
    for f in 0..b {
        acc.iter_mut().for_each(|z| *z = Complex::new(0.0, 0.0));
        for (c, spec) in spectra.iter().enumerate() {
            kernel.iter_mut().for_each(|z| *z = Complex::new(0.0, 0.0));
            for i in 0..k {
                for j in 0..k {
                    kernel[i * n + j] = Complex::new(bank.weight(f, i, j, c), 0.0);
                }
            }
            fft.forward(&mut kernel);
            ops.transforms += 1;
            for ((a, s), w) in acc.iter_mut().zip(spec).zip(&kernel) {
                *a += s * w.conj();
            }
            ops.pointwise += (n * n) as u64;
        }
        fft.inverse(&mut acc);
        ops.transforms += 1;
        let scale = 1.0 / (n * n) as f64;
        for x in 0..m {
            for y in 0..m {
                out.set(x, y, f, acc[x * n + y].re * scale);
            }
        }
    }
    Ok((out, ops))
}

struct Fft2 {
    n: usize,
    fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Fft2 {
    fn new(planner: &mut FftPlanner<f64>, n: usize) -> Self {
        Fft2 {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    fn forward(&self, buf: &mut [Complex<f64>]) {
        self.apply(&*self.fwd, buf);
    }

    fn inverse(&self, buf: &mut [Complex<f64>]) {
        self.apply(&*self.inv, buf);
    }

    fn apply(&self, plan: &dyn rustfft::Fft<f64>, buf: &mut [Complex<f64>]) {
        let n = self.n;
        plan.process(buf);
        transpose(buf, n);
        plan.process(buf);
        transpose(buf, n);
    }
}

fn transpose(buf: &mut [Complex<f64>], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}
