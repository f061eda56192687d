use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::KineticDataset;
use crate::error::{Error, Result};
use crate::field::DistributionField;
use crate::lattice::{LatticeModel, SymmetryGroup};

use super::spectral::SpectralTransform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Gelu,
    Relu,
    /// No nonlinearity; makes the whole operator a linear Fourier multiplier
    /// plus pointwise maps.
    Identity,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Value and derivative together, sharing the transcendental evaluation.
    pub fn apply_with_derivative(self, x: f64) -> (f64, f64) {
        match self {
            Activation::Gelu => {
                let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
                let d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                (0.5 * x * (1.0 + t), d)
            }
            _ => (self.apply(x), self.derivative(x)),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub lattice: LatticeModel,
    /// Training resolution.
    pub extents: Vec<usize>,
    pub width: usize,
    pub layers: usize,
    /// Retained Fourier modes per axis.
    pub modes: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl OperatorConfig {
    /// Width 32, 4 layers, 12 modes, GELU.
    pub fn default_for(lattice: LatticeModel, extents: &[usize]) -> Self {
        OperatorConfig {
            lattice,
            extents: extents.to_vec(),
            width: 32,
            layers: 4,
            modes: 12,
            activation: Activation::Gelu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.layers == 0 || self.modes == 0 {
            return Err(Error::config("width, layers and modes must all be at least 1"));
        }
        if self.extents.len() != self.lattice.dim() {
            return Err(Error::config(format!(
                "{} needs {} extents, got {:?}",
                self.lattice,
                self.lattice.dim(),
                self.extents
            )));
        }
        if let Some(n) = self.extents.iter().find(|&&n| self.modes > n / 2) {
            return Err(Error::config(format!(
                "modes = {} exceeds half the training extent {n}",
                self.modes
            )));
        }
        Ok(())
    }

    /// Retained modes per channel pair, `(2m - 1)^d`.
    pub fn mode_count(&self) -> usize {
        (2 * self.modes - 1).pow(self.lattice.dim() as u32)
    }

    pub fn param_count(&self) -> usize {
        Layout::new(self).len
    }
}

/// Offsets of every parameter block inside the flat parameter vector.
///
/// Order: lift weight `[width][q]`, lift bias, then per layer the spectral
/// weights `[in][out][mode][re, im]`, skip weight `[out][in]` and bias, then
/// projection weight `[q][width]` and bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub q: usize,
    pub width: usize,
    pub layers: usize,
    pub modes: usize,
    pub lift_w: usize,
    pub lift_b: usize,
    pub layer_base: Vec<usize>,
    pub proj_w: usize,
    pub proj_b: usize,
    pub len: usize,
}

impl Layout {
    pub fn new(cfg: &OperatorConfig) -> Self {
        let q = cfg.lattice.q();
        let w = cfg.width;
        let k = cfg.mode_count();
        let lift_w = 0;
        let lift_b = lift_w + w * q;
        let mut off = lift_b + w;
        let mut layer_base = Vec::with_capacity(cfg.layers);
        for _ in 0..cfg.layers {
            layer_base.push(off);
            off += 2 * w * w * k + w * w + w;
        }
        let proj_w = off;
        let proj_b = proj_w + q * w;
        Layout {
            q,
            width: w,
            layers: cfg.layers,
            modes: k,
            lift_w,
            lift_b,
            layer_base,
            proj_w,
            proj_b,
            len: proj_b + q,
        }
    }

    pub fn spectral(&self, l: usize) -> usize {
        self.layer_base[l]
    }

    pub fn skip_w(&self, l: usize) -> usize {
        self.layer_base[l] + 2 * self.width * self.width * self.modes
    }

    pub fn skip_b(&self, l: usize) -> usize {
        self.skip_w(l) + self.width * self.width
    }
}

/// Fixed affine map between raw populations and network inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(q: usize) -> Self {
        Normalizer {
            mean: vec![0.0; q],
            std: vec![1.0; q],
        }
    }

    /// Per-channel statistics of the training inputs, pooled over each orbit
    /// of the group's velocity permutations so that normalization commutes
    /// with the group action.
    pub fn fit(ds: &KineticDataset, group: &SymmetryGroup) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let q = ds.model.q();
        let orbit = orbits(group, q);
        let n_orbits = orbit.iter().max().map_or(0, |m| m + 1);
        let mut sum = vec![0.0; n_orbits];
        let mut count = vec![0.0; n_orbits];
        for s in &ds.samples {
            for i in 0..q {
                sum[orbit[i]] += s.input.channel(i).iter().sum::<f64>();
                count[orbit[i]] += s.input.cells() as f64;
            }
        }
        let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, c)| s / c).collect();
        let mut var = vec![0.0; n_orbits];
        for s in &ds.samples {
            for i in 0..q {
                let m = mean[orbit[i]];
                var[orbit[i]] += s.input.channel(i).iter().map(|v| (v - m) * (v - m)).sum::<f64>();
            }
        }
        let std: Vec<f64> = var
            .iter()
            .zip(&count)
            .map(|(v, c)| {
                let s = (v / c).sqrt();
                if s > 1e-12 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Normalizer {
            mean: (0..q).map(|i| mean[orbit[i]]).collect(),
            std: (0..q).map(|i| std[orbit[i]]).collect(),
        })
    }

    pub fn validate(&self, q: usize) -> Result<()> {
        if self.mean.len() != q || self.std.len() != q {
            return Err(Error::shape(format!("normalizer has {} channels, expected {q}", self.mean.len())));
        }
        if self.mean.iter().any(|v| !v.is_finite()) || self.std.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::numeric("normalizer statistics must be finite with positive scale"));
        }
        Ok(())
    }
}

/// Orbit label of every velocity index under the group.
pub fn orbits(group: &SymmetryGroup, q: usize) -> Vec<usize> {
    let mut label = vec![usize::MAX; q];
    let mut next = 0;
    for i in 0..q {
        if label[i] != usize::MAX {
            continue;
        }
        for e in group.elements() {
            label[e.perm()[i]] = next;
        }
        next += 1;
    }
    label
}

/// The learned operator: lift, spectral blocks, projection, with a fixed
/// input/output normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOperatorModel {
    pub config: OperatorConfig,
    pub seed: u64,
    pub normalizer: Normalizer,
    pub params: Vec<f64>,
}

/// Activations kept by a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    cells: usize,
    a: Vec<f64>,
    /// Input of each block.
    h: Vec<Vec<f64>>,
    /// Retained spectrum of each block input, `[channel][mode]`.
    xhat: Vec<Vec<Complex64>>,
    /// Activation slope at each hidden block's pre-activation.
    slope: Vec<Vec<f64>>,
    /// Output of the last block.
    last: Vec<f64>,
}

pub fn init_model(cfg: &OperatorConfig, seed: u64) -> Result<SpectralOperatorModel> {
    cfg.validate()?;
    let lay = Layout::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = vec![0.0; lay.len];
    let (q, w) = (lay.q, lay.width);
    let linear = |rng: &mut ChaCha8Rng, p: &mut [f64], fan_in: usize| {
        let b = 1.0 / (fan_in as f64).sqrt();
        p.iter_mut().for_each(|v| *v = rng.gen_range(-b..b));
    };
    linear(&mut rng, &mut params[lay.lift_w..lay.lift_b + w], q);
    for l in 0..lay.layers {
        let scale = 1.0 / (w * w) as f64;
        for v in &mut params[lay.spectral(l)..lay.skip_w(l)] {
            *v = scale * rng.gen::<f64>();
        }
        linear(&mut rng, &mut params[lay.skip_w(l)..lay.skip_b(l) + w], w);
    }
    linear(&mut rng, &mut params[lay.proj_w..lay.len], w);
    Ok(SpectralOperatorModel {
        config: cfg.clone(),
        seed,
        normalizer: Normalizer::identity(q),
        params,
    })
}

impl SpectralOperatorModel {
    pub fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.normalizer.validate(self.config.lattice.q())?;
        let expected = self.config.param_count();
        if self.params.len() != expected {
            return Err(Error::shape(format!(
                "{} parameters stored, configuration needs {expected}",
                self.params.len()
            )));
        }
        if self.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite parameter"));
        }
        Ok(())
    }

    pub fn transform_for(&self, extents: &[usize]) -> Result<SpectralTransform> {
        SpectralTransform::new(extents, self.config.modes)
    }

    fn check_input(&self, f: &DistributionField) -> Result<()> {
        if f.model() != self.config.lattice {
            return Err(Error::shape(format!(
                "model expects {} populations, got {}",
                self.config.lattice,
                f.model()
            )));
        }
        if !f.is_finite() {
            return Err(Error::numeric("non-finite input field"));
        }
        Ok(())
    }

    pub fn forward(&self, f: &DistributionField) -> Result<DistributionField> {
        self.check_input(f)?;
        let t = self.transform_for(f.extents())?;
        Ok(self.forward_tape(f, &t)?.0)
    }

    /// Forward pass that also returns the activations needed by [`Self::backward`].
    pub fn forward_tape(&self, f: &DistributionField, t: &SpectralTransform) -> Result<(DistributionField, Tape)> {
        self.check_input(f)?;
        if t.extents() != f.extents() {
            return Err(Error::shape("spectral transform built for a different grid"));
        }
        let lay = self.layout();
        let (q, w, n, k) = (lay.q, lay.width, f.cells(), lay.modes);
        let p = &self.params;
        let norm = &self.normalizer;

        let mut a = vec![0.0; q * n];
        for c in 0..q {
            let (m, s) = (norm.mean[c], norm.std[c]);
            for (dst, src) in a[c * n..(c + 1) * n].iter_mut().zip(f.channel(c)) {
                *dst = (src - m) / s;
            }
        }

        let mut h = vec![0.0; w * n];
        for o in 0..w {
            let row = &mut h[o * n..(o + 1) * n];
            row.fill(p[lay.lift_b + o]);
            for c in 0..q {
                axpy(p[lay.lift_w + o * q + c], &a[c * n..(c + 1) * n], row);
            }
        }

        let mut tape = Tape {
            cells: n,
            a,
            h: Vec::with_capacity(lay.layers),
            xhat: Vec::with_capacity(lay.layers),
            slope: Vec::with_capacity(lay.layers),
            last: Vec::new(),
        };
        let inv_n = 1.0 / n as f64;
        let mut y_modes = vec![Complex64::default(); w * k];
        let mut y = vec![0.0; w * n];
        let mut xhat = vec![Complex64::default(); w * k];
        let act = self.config.activation;
        for l in 0..lay.layers {
            t.analysis_many(&h, &mut xhat);
            let sw = lay.spectral(l);
            y_modes.fill(Complex64::default());
            for i in 0..w {
                let xi = &xhat[i * k..(i + 1) * k];
                for o in 0..w {
                    let wb = sw + 2 * ((i * w + o) * k);
                    let wo = &p[wb..wb + 2 * k];
                    for (m, ym) in y_modes[o * k..(o + 1) * k].iter_mut().enumerate() {
                        *ym += Complex64::new(wo[2 * m], wo[2 * m + 1]) * xi[m];
                    }
                }
            }
            t.synthesis_many(&y_modes, &mut y);
            let mut z = vec![0.0; w * n];
            for o in 0..w {
                let zo = &mut z[o * n..(o + 1) * n];
                let b = p[lay.skip_b(l) + o];
                for (zv, yv) in zo.iter_mut().zip(&y[o * n..(o + 1) * n]) {
                    *zv = yv * inv_n + b;
                }
                for i in 0..w {
                    axpy(p[lay.skip_w(l) + o * w + i], &h[i * n..(i + 1) * n], zo);
                }
            }
            tape.xhat.push(xhat.clone());
            if l + 1 < lay.layers {
                let mut slope = z;
                let mut next = vec![0.0; w * n];
                for (s, v) in slope.iter_mut().zip(next.iter_mut()) {
                    let (a, d) = act.apply_with_derivative(*s);
                    *v = a;
                    *s = d;
                }
                tape.h.push(std::mem::replace(&mut h, next));
                tape.slope.push(slope);
            } else {
                tape.h.push(std::mem::replace(&mut h, z));
            }
        }

        let mut out = DistributionField::zeros(f.model(), f.extents())?;
        for c in 0..q {
            let row = out.channel_mut(c);
            row.fill(p[lay.proj_b + c]);
            for i in 0..w {
                axpy(p[lay.proj_w + c * w + i], &h[i * n..(i + 1) * n], row);
            }
            let (m, s) = (norm.mean[c], norm.std[c]);
            row.iter_mut().for_each(|v| *v = *v * s + m);
        }
        if !out.is_finite() {
            return Err(Error::numeric("non-finite operator output"));
        }
        tape.last = h;
        Ok((out, tape))
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂output` in raw population units.
    pub fn backward(&self, tape: &Tape, t: &SpectralTransform, grad_out: &[f64], grad: &mut [f64]) {
        let lay = self.layout();
        let (q, w, n, k) = (lay.q, lay.width, tape.cells, lay.modes);
        let p = &self.params;
        let inv_n = 1.0 / n as f64;

        let h_last = &tape.last;
        let mut gh = vec![0.0; w * n];
        for c in 0..q {
            let s = self.normalizer.std[c];
            let go: Vec<f64> = grad_out[c * n..(c + 1) * n].iter().map(|g| g * s).collect();
            grad[lay.proj_b + c] += go.iter().sum::<f64>();
            for i in 0..w {
                let hi = &h_last[i * n..(i + 1) * n];
                grad[lay.proj_w + c * w + i] += dot(&go, hi);
                axpy(p[lay.proj_w + c * w + i], &go, &mut gh[i * n..(i + 1) * n]);
            }
        }

        // gh holds ∂L/∂z for the last block.
        let mut gz = gh;
        let mut g_modes = vec![Complex64::default(); w * k];
        let mut gx_modes = vec![Complex64::default(); w * k];
        let mut tmp = vec![0.0; w * n];
        for l in (0..lay.layers).rev() {
            let h = &tape.h[l];
            let xhat = &tape.xhat[l];
            let mut gh = vec![0.0; w * n];
            for o in 0..w {
                let gzo = &gz[o * n..(o + 1) * n];
                grad[lay.skip_b(l) + o] += gzo.iter().sum::<f64>();
                for i in 0..w {
                    let hi = &h[i * n..(i + 1) * n];
                    grad[lay.skip_w(l) + o * w + i] += dot(gzo, hi);
                    axpy(p[lay.skip_w(l) + o * w + i], gzo, &mut gh[i * n..(i + 1) * n]);
                }
            }
            t.analysis_many(&gz, &mut g_modes);
            g_modes.iter_mut().for_each(|v| *v *= inv_n);
            let sw = lay.spectral(l);
            gx_modes.fill(Complex64::default());
            for i in 0..w {
                let xi = &xhat[i * k..(i + 1) * k];
                let gxi = &mut gx_modes[i * k..(i + 1) * k];
                for o in 0..w {
                    let wb = sw + 2 * ((i * w + o) * k);
                    let go = &g_modes[o * k..(o + 1) * k];
                    for m in 0..k {
                        let gw = go[m] * xi[m].conj();
                        grad[wb + 2 * m] += gw.re;
                        grad[wb + 2 * m + 1] += gw.im;
                        let wm = Complex64::new(p[wb + 2 * m], p[wb + 2 * m + 1]);
                        gxi[m] += wm.conj() * go[m];
                    }
                }
            }
            t.synthesis_many(&gx_modes, &mut tmp);
            for (g, v) in gh.iter_mut().zip(&tmp) {
                *g += v;
            }
            if l > 0 {
                for (g, d) in gh.iter_mut().zip(&tape.slope[l - 1]) {
                    *g *= d;
                }
            }
            gz = gh;
        }

        for o in 0..w {
            let g0 = &gz[o * n..(o + 1) * n];
            grad[lay.lift_b + o] += g0.iter().sum::<f64>();
            for c in 0..q {
                grad[lay.lift_w + o * q + c] += dot(g0, &tape.a[c * n..(c + 1) * n]);
            }
        }
    }

    /// Applies the trained weights on a grid at least as fine as the
    /// training grid. Retained modes keep their wavenumbers; everything
    /// above them reaches the output only through the pointwise paths.
    pub fn infer_at_resolution(&self, f: &DistributionField) -> Result<DistributionField> {
        if f.model() != self.config.lattice {
            return Err(Error::shape(format!(
                "model expects {} populations, got {}",
                self.config.lattice,
                f.model()
            )));
        }
        if f.extents().iter().zip(&self.config.extents).any(|(a, b)| a < b) {
            return Err(Error::config(format!(
                "grid {:?} is coarser than the training grid {:?}",
                f.extents(),
                self.config.extents
            )));
        }
        self.forward(f)
    }
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
