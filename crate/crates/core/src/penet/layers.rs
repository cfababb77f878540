//! Layers operate on flat activations. Matrix-shaped activations are stored
//! row-major as `[i][j][channel]`; the matrix side is inferred from the length.

use super::tensor::Tensor;
use crate::numerics::Rng;
use crate::{Error, Result};

/// Number of weight matrices in the equivariant layer.
pub const PE_TERMS: usize = 15;

fn shape_err(expected: Vec<usize>, got: usize) -> Error {
    Error::ShapeMismatch {
        expected,
        got: vec![got],
    }
}

fn uniform_init(rng: &mut Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| (2.0 * rng.uniform() - 1.0) * bound).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    /// `out × in`, row-major.
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(rng: &mut Rng, in_features: usize, out_features: usize) -> Self {
        let bound = 1.0 / (in_features as f64).sqrt();
        Self {
            in_features,
            out_features,
            weight: Tensor::param(
                vec![out_features, in_features],
                uniform_init(rng, in_features * out_features, bound),
            ),
            bias: Tensor::param(vec![out_features], uniform_init(rng, out_features, bound)),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_features {
            return Err(shape_err(vec![self.in_features], x.len()));
        }
        let w = self.weight.values();
        Ok(self
            .bias
            .values()
            .iter()
            .enumerate()
            .map(|(o, b)| {
                let row = &w[o * self.in_features..(o + 1) * self.in_features];
                b + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect())
    }

    pub fn backward(&mut self, x: &[f64], gy: &[f64]) -> Vec<f64> {
        let n_in = self.in_features;
        let mut gx = vec![0.0; n_in];
        {
            let gw = self.weight.grad_mut();
            for (o, &g) in gy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                for (gwi, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                    *gwi += g * xi;
                }
            }
        }
        for (gb, g) in self.bias.grad_mut().iter_mut().zip(gy) {
            *gb += g;
        }
        let w = self.weight.values();
        for (o, &g) in gy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (gxi, wi) in gx.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                *gxi += g * wi;
            }
        }
        gx
    }

    pub fn parameter_count(&self) -> usize {
        self.in_features * self.out_features + self.out_features
    }
}

/// Permutation-equivariant linear map on `N × N × c` arrays:
///
/// ```text
/// Y_ij = X_ij w0 + X_ji w1 + R_i w2 + C_i w3 + C_j w4 + R_j w5 + T w6 + D w7
///      + X_ii w8 + X_jj w9
///      + δ_ij (X_ii w10 + D w11 + T w12 + R_i w13 + C_i w14 + b_diag) + b_all
/// ```
///
/// with row sums `R`, column sums `C`, total `T` and trace `D`. Every `w_k`
/// is a `c × d` matrix acting on the channel vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PeLinear {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `15 × c × d`, row-major.
    pub weight: Tensor,
    pub bias_all: Tensor,
    pub bias_diag: Tensor,
}

struct Aggregates {
    row: Vec<f64>,
    col: Vec<f64>,
    diag: Vec<f64>,
    total: Vec<f64>,
    trace: Vec<f64>,
}

fn aggregates(x: &[f64], n: usize, c: usize) -> Aggregates {
    let mut a = Aggregates {
        row: vec![0.0; n * c],
        col: vec![0.0; n * c],
        diag: vec![0.0; n * c],
        total: vec![0.0; c],
        trace: vec![0.0; c],
    };
    for i in 0..n {
        for j in 0..n {
            let cell = &x[(i * n + j) * c..(i * n + j + 1) * c];
            for (ch, &v) in cell.iter().enumerate() {
                a.row[i * c + ch] += v;
                a.col[j * c + ch] += v;
                a.total[ch] += v;
            }
            if i == j {
                a.diag[i * c..(i + 1) * c].copy_from_slice(cell);
                for (t, v) in a.trace.iter_mut().zip(cell) {
                    *t += v;
                }
            }
        }
    }
    a
}

impl PeLinear {
    pub fn new(rng: &mut Rng, in_channels: usize, out_channels: usize) -> Self {
        let bound = 1.0 / ((PE_TERMS * in_channels) as f64).sqrt();
        let nw = PE_TERMS * in_channels * out_channels;
        Self {
            in_channels,
            out_channels,
            weight: Tensor::param(
                vec![PE_TERMS, in_channels, out_channels],
                uniform_init(rng, nw, bound),
            ),
            bias_all: Tensor::param(vec![out_channels], uniform_init(rng, out_channels, bound)),
            bias_diag: Tensor::param(vec![out_channels], uniform_init(rng, out_channels, bound)),
        }
    }

    pub fn parameter_count(&self) -> usize {
        PE_TERMS * self.in_channels * self.out_channels + 2 * self.out_channels
    }

    /// Matrix side for an input of `len` values.
    pub fn side(&self, len: usize) -> Result<usize> {
        let c = self.in_channels;
        let cells = len / c;
        let n = (cells as f64).sqrt().round() as usize;
        if !len.is_multiple_of(c) || n * n != cells || n == 0 {
            return Err(shape_err(vec![n, n, c], len));
        }
        Ok(n)
    }

    fn w(&self, k: usize) -> &[f64] {
        let s = self.in_channels * self.out_channels;
        &self.weight.values()[k * s..(k + 1) * s]
    }

    /// `out += x · w_k`.
    fn apply(&self, k: usize, x: &[f64], out: &mut [f64]) {
        let d = self.out_channels;
        for (ch, &v) in x.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let row = &self.w(k)[ch * d..(ch + 1) * d];
            for (o, w) in out.iter_mut().zip(row) {
                *o += v * w;
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.side(x.len())?;
        let (c, d) = (self.in_channels, self.out_channels);
        let a = aggregates(x, n, c);

        let mut shared = self.bias_all.values().to_vec();
        self.apply(6, &a.total, &mut shared);
        self.apply(7, &a.trace, &mut shared);

        let mut rowv = vec![0.0; n * d];
        let mut colv = vec![0.0; n * d];
        let mut diagv = vec![0.0; n * d];
        for i in 0..n {
            let (r, cl, xd) = (&a.row[i * c..(i + 1) * c], &a.col[i * c..(i + 1) * c], &a.diag[i * c..(i + 1) * c]);
            let rv = &mut rowv[i * d..(i + 1) * d];
            self.apply(2, r, rv);
            self.apply(3, cl, rv);
            self.apply(8, xd, rv);
            let cv = &mut colv[i * d..(i + 1) * d];
            self.apply(4, cl, cv);
            self.apply(5, r, cv);
            self.apply(9, xd, cv);
            let dv = &mut diagv[i * d..(i + 1) * d];
            dv.copy_from_slice(self.bias_diag.values());
            self.apply(10, xd, dv);
            self.apply(11, &a.trace, dv);
            self.apply(12, &a.total, dv);
            self.apply(13, r, dv);
            self.apply(14, cl, dv);
        }

        let mut y = vec![0.0; n * n * d];
        for i in 0..n {
            for j in 0..n {
                let out = &mut y[(i * n + j) * d..(i * n + j + 1) * d];
                for e in 0..d {
                    out[e] = shared[e] + rowv[i * d + e] + colv[j * d + e];
                }
                if i == j {
                    for (o, v) in out.iter_mut().zip(&diagv[i * d..(i + 1) * d]) {
                        *o += v;
                    }
                }
                self.apply(0, &x[(i * n + j) * c..(i * n + j + 1) * c], out);
                self.apply(1, &x[(j * n + i) * c..(j * n + i + 1) * c], out);
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, x: &[f64], gy: &[f64]) -> Result<Vec<f64>> {
        let n = self.side(x.len())?;
        let (c, d) = (self.in_channels, self.out_channels);
        let a = aggregates(x, n, c);

        let mut g_row = vec![0.0; n * d];
        let mut g_col = vec![0.0; n * d];
        let mut g_diag = vec![0.0; n * d];
        let mut g_all = vec![0.0; d];
        for i in 0..n {
            for j in 0..n {
                let g = &gy[(i * n + j) * d..(i * n + j + 1) * d];
                for e in 0..d {
                    g_row[i * d + e] += g[e];
                    g_col[j * d + e] += g[e];
                    g_all[e] += g[e];
                }
                if i == j {
                    g_diag[i * d..(i + 1) * d].copy_from_slice(g);
                }
            }
        }
        let mut g_diag_sum = vec![0.0; d];
        for i in 0..n {
            for e in 0..d {
                g_diag_sum[e] += g_diag[i * d + e];
            }
        }

        let s = c * d;
        {
            let gw = self.weight.grad_mut();
            // gw_k += u ⊗ g
            let mut outer = |k: usize, u: &[f64], g: &[f64]| {
                let block = &mut gw[k * s..(k + 1) * s];
                for (ch, &uv) in u.iter().enumerate() {
                    if uv == 0.0 {
                        continue;
                    }
                    for (b, gv) in block[ch * d..(ch + 1) * d].iter_mut().zip(g) {
                        *b += uv * gv;
                    }
                }
            };
            for i in 0..n {
                for j in 0..n {
                    let g = &gy[(i * n + j) * d..(i * n + j + 1) * d];
                    outer(0, &x[(i * n + j) * c..(i * n + j + 1) * c], g);
                    outer(1, &x[(j * n + i) * c..(j * n + i + 1) * c], g);
                }
                let (r, cl, xd) = (&a.row[i * c..(i + 1) * c], &a.col[i * c..(i + 1) * c], &a.diag[i * c..(i + 1) * c]);
                let (gr, gc, gd) = (&g_row[i * d..(i + 1) * d], &g_col[i * d..(i + 1) * d], &g_diag[i * d..(i + 1) * d]);
                outer(2, r, gr);
                outer(3, cl, gr);
                outer(8, xd, gr);
                outer(4, cl, gc);
                outer(5, r, gc);
                outer(9, xd, gc);
                outer(10, xd, gd);
                outer(13, r, gd);
                outer(14, cl, gd);
            }
            outer(6, &a.total, &g_all);
            outer(7, &a.trace, &g_all);
            outer(11, &a.trace, &g_diag_sum);
            outer(12, &a.total, &g_diag_sum);
        }
        for (b, g) in self.bias_all.grad_mut().iter_mut().zip(&g_all) {
            *b += g;
        }
        for (b, g) in self.bias_diag.grad_mut().iter_mut().zip(&g_diag_sum) {
            *b += g;
        }

        // out += w_k · g (channel-space transpose)
        let w = self.weight.values();
        let back = |k: usize, g: &[f64], out: &mut [f64]| {
            let block = &w[k * s..(k + 1) * s];
            for (ch, o) in out.iter_mut().enumerate() {
                *o += block[ch * d..(ch + 1) * d].iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
            }
        };
        let mut g_r = vec![0.0; n * c];
        let mut g_c = vec![0.0; n * c];
        let mut g_xd = vec![0.0; n * c];
        for i in 0..n {
            let (gr, gc, gd) = (&g_row[i * d..(i + 1) * d], &g_col[i * d..(i + 1) * d], &g_diag[i * d..(i + 1) * d]);
            let out = &mut g_r[i * c..(i + 1) * c];
            back(2, gr, out);
            back(5, gc, out);
            back(13, gd, out);
            let out = &mut g_c[i * c..(i + 1) * c];
            back(3, gr, out);
            back(4, gc, out);
            back(14, gd, out);
            let out = &mut g_xd[i * c..(i + 1) * c];
            back(8, gr, out);
            back(9, gc, out);
            back(10, gd, out);
        }
        let mut g_t = vec![0.0; c];
        back(6, &g_all, &mut g_t);
        back(12, &g_diag_sum, &mut g_t);
        let mut g_d = vec![0.0; c];
        back(7, &g_all, &mut g_d);
        back(11, &g_diag_sum, &mut g_d);

        let mut gx = vec![0.0; n * n * c];
        for i in 0..n {
            for j in 0..n {
                let cell = &mut gx[(i * n + j) * c..(i * n + j + 1) * c];
                back(0, &gy[(i * n + j) * d..(i * n + j + 1) * d], cell);
                back(1, &gy[(j * n + i) * d..(j * n + i + 1) * d], cell);
                for ch in 0..c {
                    cell[ch] += g_r[i * c + ch] + g_c[j * c + ch] + g_t[ch];
                    if i == j {
                        cell[ch] += g_d[ch] + g_xd[i * c + ch];
                    }
                }
            }
        }
        Ok(gx)
    }
}

/// Inverted dropout: kept activations are scaled by `1/(1-p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dropout {
    pub p: f64,
}

impl Dropout {
    pub fn mask(&self, rng: &mut Rng, len: usize) -> Vec<f64> {
        let keep = 1.0 / (1.0 - self.p);
        (0..len)
            .map(|_| if rng.bernoulli(self.p) { 0.0 } else { keep })
            .collect()
    }
}

/// `N × N × 2` grid to the flat `N²` layout: channel 0 of the diagonal, then
/// both channels of each upper-triangle cell in row-major order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Readout;

impl Readout {
    fn side(len: usize) -> Result<usize> {
        let n = ((len / 2) as f64).sqrt().round() as usize;
        if 2 * n * n != len || n == 0 {
            return Err(shape_err(vec![n, n, 2], len));
        }
        Ok(n)
    }

    pub fn forward(x: &[f64]) -> Result<Vec<f64>> {
        let n = Self::side(x.len())?;
        let mut y = Vec::with_capacity(n * n);
        y.extend((0..n).map(|i| x[(i * n + i) * 2]));
        for i in 0..n {
            for j in i + 1..n {
                y.push(x[(i * n + j) * 2]);
                y.push(x[(i * n + j) * 2 + 1]);
            }
        }
        Ok(y)
    }

    pub fn backward(x_len: usize, gy: &[f64]) -> Result<Vec<f64>> {
        let n = Self::side(x_len)?;
        let mut gx = vec![0.0; x_len];
        for i in 0..n {
            gx[(i * n + i) * 2] = gy[i];
        }
        let mut k = n;
        for i in 0..n {
            for j in i + 1..n {
                gx[(i * n + j) * 2] = gy[k];
                gx[(i * n + j) * 2 + 1] = gy[k + 1];
                k += 2;
            }
        }
        Ok(gx)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Linear(Linear),
    PeLinear(PeLinear),
    Relu,
    Dropout(Dropout),
    Readout,
}

impl Layer {
    pub fn parameter_count(&self) -> usize {
        match self {
            Layer::Linear(l) => l.parameter_count(),
            Layer::PeLinear(l) => l.parameter_count(),
            _ => 0,
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            Layer::PeLinear(l) => vec![&l.weight, &l.bias_all, &l.bias_diag],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            Layer::PeLinear(l) => vec![&mut l.weight, &mut l.bias_all, &mut l.bias_diag],
            _ => vec![],
        }
    }

    /// Forward pass; `mask` is the dropout mask in training mode.
    pub(crate) fn forward(&self, x: &[f64], mask: Option<&[f64]>) -> Result<Vec<f64>> {
        match self {
            Layer::Linear(l) => l.forward(x),
            Layer::PeLinear(l) => l.forward(x),
            Layer::Relu => Ok(x.iter().map(|&v| v.max(0.0)).collect()),
            Layer::Dropout(_) => Ok(match mask {
                Some(m) => x.iter().zip(m).map(|(a, b)| a * b).collect(),
                None => x.to_vec(),
            }),
            Layer::Readout => Readout::forward(x),
        }
    }

    pub(crate) fn backward(&mut self, x: &[f64], gy: &[f64], mask: Option<&[f64]>) -> Result<Vec<f64>> {
        match self {
            Layer::Linear(l) => Ok(l.backward(x, gy)),
            Layer::PeLinear(l) => l.backward(x, gy),
            Layer::Relu => Ok(x.iter().zip(gy).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect()),
            Layer::Dropout(_) => Ok(match mask {
                Some(m) => gy.iter().zip(m).map(|(a, b)| a * b).collect(),
                None => gy.to_vec(),
            }),
            Layer::Readout => Readout::backward(x.len(), gy),
        }
    }
}
