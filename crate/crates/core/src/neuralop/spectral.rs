//! Truncated Fourier analysis and synthesis on the retained mode set.
//!
//! The retained set is `k ∈ [-(m-1), m-1]` on every axis, stored row-major
//! with index `j = k + m - 1`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Clone)]
pub struct SpectralTransform {
    extents: Vec<usize>,
    modes: usize,
    kept: usize,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for SpectralTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralTransform")
            .field("extents", &self.extents)
            .field("modes", &self.modes)
            .finish()
    }
}

impl SpectralTransform {
    pub fn new(extents: &[usize], modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::config("at least one Fourier mode must be retained"));
        }
        if let Some(n) = extents.iter().find(|&&n| modes > n / 2) {
            return Err(Error::config(format!(
                "{modes} modes per axis need extents >= {}, got {n}",
                2 * modes
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(SpectralTransform {
            extents: extents.to_vec(),
            modes,
            kept: 2 * modes - 1,
            forward: extents.iter().map(|&n| planner.plan_fft_forward(n)).collect(),
            inverse: extents.iter().map(|&n| planner.plan_fft_inverse(n)).collect(),
        })
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn cells(&self) -> usize {
        self.extents.iter().product()
    }

    /// Number of retained modes, `(2m - 1)^d`.
    pub fn len(&self) -> usize {
        self.kept.pow(self.extents.len() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Signed wavenumber vector of retained mode `idx`.
    pub fn wavenumber(&self, mut idx: usize) -> Vec<i64> {
        let d = self.extents.len();
        let mut k = vec![0i64; d];
        for a in (0..d).rev() {
            k[a] = (idx % self.kept) as i64 - (self.modes as i64 - 1);
            idx /= self.kept;
        }
        k
    }

    fn bin(&self, j: usize, n: usize) -> usize {
        (j as i64 - (self.modes as i64 - 1)).rem_euclid(n as i64) as usize
    }

    /// Flat index of the mode `-k`.
    pub fn negate(&self, idx: usize) -> usize {
        self.len() - 1 - idx
    }

    /// Truncated forward transform of complex data, one axis at a time from
    /// the last, with all lanes of an axis batched into one FFT call.
    fn forward_complex(&self, mut cur: Vec<Complex64>) -> Vec<Complex64> {
        let d = self.extents.len();
        let mut shape = self.extents.clone();
        let mut lanes = Vec::new();
        let mut scratch = Vec::new();
        for a in (0..d).rev() {
            let n = shape[a];
            let outer: usize = shape[..a].iter().product();
            let inner: usize = shape[a + 1..].iter().product();
            let plan = &self.forward[a];
            scratch.resize(plan.get_inplace_scratch_len(), Complex64::default());
            let buf = if inner == 1 {
                &mut cur
            } else {
                lanes.resize(outer * inner * n, Complex64::default());
                for o in 0..outer {
                    for i in 0..inner {
                        let lane = &mut lanes[(o * inner + i) * n..(o * inner + i + 1) * n];
                        for (j, v) in lane.iter_mut().enumerate() {
                            *v = cur[(o * n + j) * inner + i];
                        }
                    }
                }
                &mut lanes
            };
            plan.process_with_scratch(buf, &mut scratch);
            let mut next = vec![Complex64::default(); outer * self.kept * inner];
            for o in 0..outer {
                for i in 0..inner {
                    let lane = &buf[(o * inner + i) * n..(o * inner + i + 1) * n];
                    for j in 0..self.kept {
                        next[(o * self.kept + j) * inner + i] = lane[self.bin(j, n)];
                    }
                }
            }
            shape[a] = self.kept;
            cur = next;
        }
        cur
    }

    /// `Σ_k Y(k) e^{2πi k·x/N}` on the full grid.
    fn inverse_complex(&self, y: &[Complex64]) -> Vec<Complex64> {
        let d = self.extents.len();
        let mut shape = vec![self.kept; d];
        let mut cur = y.to_vec();
        let mut lanes = Vec::new();
        let mut scratch = Vec::new();
        for a in 0..d {
            let n = self.extents[a];
            let outer: usize = shape[..a].iter().product();
            let inner: usize = shape[a + 1..].iter().product();
            let plan = &self.inverse[a];
            scratch.resize(plan.get_inplace_scratch_len(), Complex64::default());
            lanes.clear();
            lanes.resize(outer * inner * n, Complex64::default());
            for o in 0..outer {
                for i in 0..inner {
                    let lane = &mut lanes[(o * inner + i) * n..(o * inner + i + 1) * n];
                    for j in 0..self.kept {
                        lane[self.bin(j, n)] = cur[(o * self.kept + j) * inner + i];
                    }
                }
            }
            plan.process_with_scratch(&mut lanes, &mut scratch);
            shape[a] = n;
            if inner == 1 {
                std::mem::swap(&mut cur, &mut lanes);
            } else {
                let mut next = vec![Complex64::default(); outer * n * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let lane = &lanes[(o * inner + i) * n..(o * inner + i + 1) * n];
                        for (j, v) in lane.iter().enumerate() {
                            next[(o * n + j) * inner + i] = *v;
                        }
                    }
                }
                cur = next;
            }
        }
        cur
    }

    /// `X(k) = Σ_x h(x) e^{-2πi k·x/N}` on the retained modes.
    pub fn analysis(&self, h: &[f64], out: &mut [Complex64]) {
        debug_assert_eq!(h.len(), self.cells());
        let z = self.forward_complex(h.iter().map(|&v| Complex64::new(v, 0.0)).collect());
        out.copy_from_slice(&z);
    }

    /// Two real analyses for the price of one complex transform.
    pub fn analysis_pair(&self, h1: &[f64], h2: &[f64], out1: &mut [Complex64], out2: &mut [Complex64]) {
        let packed = h1.iter().zip(h2).map(|(&a, &b)| Complex64::new(a, b)).collect();
        let z = self.forward_complex(packed);
        let half_i = Complex64::new(0.0, -0.5);
        for m in 0..z.len() {
            let zc = z[self.negate(m)].conj();
            out1[m] = (z[m] + zc) * 0.5;
            out2[m] = (z[m] - zc) * half_i;
        }
    }

    /// Analyses of consecutive channels `h[c*N..]` into `out[c*K..]`, two at a time.
    pub fn analysis_many(&self, h: &[f64], out: &mut [Complex64]) {
        let (n, k) = (self.cells(), self.len());
        let channels = h.len() / n;
        let mut c = 0;
        while c + 1 < channels {
            let (o1, o2) = out[c * k..(c + 2) * k].split_at_mut(k);
            self.analysis_pair(&h[c * n..(c + 1) * n], &h[(c + 1) * n..(c + 2) * n], o1, o2);
            c += 2;
        }
        if c < channels {
            self.analysis(&h[c * n..(c + 1) * n], &mut out[c * k..(c + 1) * k]);
        }
    }

    /// Syntheses of consecutive spectra `y[c*K..]` into `out[c*N..]`, two at a time.
    pub fn synthesis_many(&self, y: &[Complex64], out: &mut [f64]) {
        let (n, k) = (self.cells(), self.len());
        let channels = y.len() / k;
        let mut c = 0;
        while c + 1 < channels {
            let (o1, o2) = out[c * n..(c + 2) * n].split_at_mut(n);
            self.synthesis_pair(&y[c * k..(c + 1) * k], &y[(c + 1) * k..(c + 2) * k], o1, o2);
            c += 2;
        }
        if c < channels {
            self.synthesis(&y[c * k..(c + 1) * k], &mut out[c * n..(c + 1) * n]);
        }
    }

    /// `Re Σ_k Y(k) e^{2πi k·x/N}` over the retained modes, unnormalized.
    pub fn synthesis(&self, y: &[Complex64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.len());
        for (o, c) in out.iter_mut().zip(self.inverse_complex(y)) {
            *o = c.re;
        }
    }

    /// Two syntheses through one complex transform: each spectrum is made
    /// Hermitian (which leaves the real part unchanged) and the pair is
    /// packed as real and imaginary parts.
    pub fn synthesis_pair(&self, y1: &[Complex64], y2: &[Complex64], out1: &mut [f64], out2: &mut [f64]) {
        let i = Complex64::new(0.0, 1.0);
        let packed: Vec<Complex64> = (0..y1.len())
            .map(|m| {
                let nm = self.negate(m);
                let s1 = (y1[m] + y1[nm].conj()) * 0.5;
                let s2 = (y2[m] + y2[nm].conj()) * 0.5;
                s1 + i * s2
            })
            .collect();
        for ((a, b), c) in out1.iter_mut().zip(out2.iter_mut()).zip(self.inverse_complex(&packed)) {
            *a = c.re;
            *b = c.im;
        }
    }
}
