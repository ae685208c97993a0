use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;

/// Layer widths of the network.
///
/// `feature` is the width of the shared representation `r_t` and of the first
/// output layer; `hidden` is the LSTM state width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub input: usize,
    pub feature: usize,
    pub hidden: usize,
    pub window: usize,
}

impl Dims {
    /// 186 → 128 → 64, ten-step window.
    pub const FULL: Dims = Dims {
        input: 186,
        feature: 128,
        hidden: 64,
        window: 10,
    };

    /// Small model with the full input width, used for gradient checks.
    pub const MICRO: Dims = Dims {
        input: 186,
        feature: 8,
        hidden: 4,
        window: 10,
    };

    pub fn lstm_input(&self) -> usize {
        self.hidden + self.feature
    }

    pub fn param_count(&self) -> usize {
        let (m, f, h) = (self.input, self.feature, self.hidden);
        let lstm = 4 * h * (h + f) + 4 * h;
        f * m + f + 2 * lstm + f * h + f + m * f + m
    }
}

/// One LSTM layer. Gate blocks are stacked row-wise in the order
/// input, forget, output, candidate; each block is `hidden` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<T> {
    /// `4·hidden × (hidden + feature)`, columns ordered `[h_prev, r_t]`.
    pub w: Array2<T>,
    pub b: Array1<T>,
}

impl<T: Scalar> LstmParams<T> {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            w: Array2::zeros((4 * hidden, hidden + input)),
            b: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b.len() / 4
    }
}

/// Every trainable tensor of the denoising autoencoder.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub dims: Dims,
    /// Integration layer, `feature × input`.
    pub w_m: Array2<T>,
    pub b_m: Array1<T>,
    pub enc: LstmParams<T>,
    pub dec: LstmParams<T>,
    /// First output layer, `feature × hidden`.
    pub w_d1: Array2<T>,
    pub b_d1: Array1<T>,
    /// Second output layer, `input × feature`.
    pub w_d2: Array2<T>,
    pub b_d2: Array1<T>,
}

/// Gradients share the parameter layout.
pub type Gradients<T> = ModelParams<T>;

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(dims: Dims) -> Self {
        let Dims {
            input: m,
            feature: f,
            hidden: h,
            ..
        } = dims;
        Self {
            dims,
            w_m: Array2::zeros((f, m)),
            b_m: Array1::zeros(f),
            enc: LstmParams::zeros(h, f),
            dec: LstmParams::zeros(h, f),
            w_d1: Array2::zeros((f, h)),
            b_d1: Array1::zeros(f),
            w_d2: Array2::zeros((m, f)),
            b_d2: Array1::zeros(m),
        }
    }

    /// Glorot-uniform weights, zero biases.
    ///
    /// Each LSTM gate block is initialised as its own `hidden × (hidden + feature)`
    /// matrix.
    pub fn glorot<R: Rng + ?Sized>(dims: Dims, rng: &mut R) -> Self {
        let mut p = Self::zeros(dims);
        glorot_fill(&mut p.w_m, rng);
        for lstm in [&mut p.enc, &mut p.dec] {
            let h = lstm.hidden();
            for gate in 0..4 {
                let mut block = lstm.w.slice_mut(ndarray::s![gate * h..(gate + 1) * h, ..]);
                let (rows, cols) = block.dim();
                let limit = (6.0 / (rows + cols) as f64).sqrt();
                block.mapv_inplace(|_| T::of(rng.gen_range(-limit..limit)));
            }
        }
        glorot_fill(&mut p.w_d1, rng);
        glorot_fill(&mut p.w_d2, rng);
        p
    }

    /// Tensors in checkpoint order:
    /// `W_m, b_m, enc W_i, W_f, W_o, W_c, b_i, b_f, b_o, b_c, dec (same), W_d1, b_d1, W_d2, b_d2`.
    ///
    /// LSTM gate matrices are contiguous row blocks of the stacked matrix, so
    /// the stacked slice already lists them in i, f, o, c order.
    pub fn tensors(&self) -> [&[T]; 10] {
        [
            self.w_m.as_slice().expect("standard layout"),
            self.b_m.as_slice().expect("standard layout"),
            self.enc.w.as_slice().expect("standard layout"),
            self.enc.b.as_slice().expect("standard layout"),
            self.dec.w.as_slice().expect("standard layout"),
            self.dec.b.as_slice().expect("standard layout"),
            self.w_d1.as_slice().expect("standard layout"),
            self.b_d1.as_slice().expect("standard layout"),
            self.w_d2.as_slice().expect("standard layout"),
            self.b_d2.as_slice().expect("standard layout"),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [T]; 10] {
        [
            self.w_m.as_slice_mut().expect("standard layout"),
            self.b_m.as_slice_mut().expect("standard layout"),
            self.enc.w.as_slice_mut().expect("standard layout"),
            self.enc.b.as_slice_mut().expect("standard layout"),
            self.dec.w.as_slice_mut().expect("standard layout"),
            self.dec.b.as_slice_mut().expect("standard layout"),
            self.w_d1.as_slice_mut().expect("standard layout"),
            self.b_d1.as_slice_mut().expect("standard layout"),
            self.w_d2.as_slice_mut().expect("standard layout"),
            self.b_d2.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn tensor_names() -> [&'static str; 10] {
        [
            "w_m", "b_m", "enc.w", "enc.b", "dec.w", "dec.b", "w_d1", "b_d1", "w_d2", "b_d2",
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Checks every tensor against `dims`.
    pub fn validate(&self) -> Result<()> {
        let expected = Self::zeros(self.dims);
        for ((name, a), b) in Self::tensor_names()
            .iter()
            .zip(self.tensors())
            .zip(expected.tensors())
        {
            if a.len() != b.len() {
                return Err(shape_err(
                    format!("{name} with {} entries", b.len()),
                    a.len(),
                ));
            }
        }
        if self.w_m.dim() != expected.w_m.dim()
            || self.enc.w.dim() != expected.enc.w.dim()
            || self.dec.w.dim() != expected.dec.w.dim()
            || self.w_d1.dim() != expected.w_d1.dim()
            || self.w_d2.dim() != expected.w_d2.dim()
        {
            return Err(shape_err(format!("{:?}", self.dims), "mismatched matrix dims"));
        }
        Ok(())
    }

    /// Element type conversion, e.g. `f64` training weights to `f32` serving.
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let c2 = |a: &Array2<T>| a.mapv(|v| U::of(v.as_f64()));
        let c1 = |a: &Array1<T>| a.mapv(|v| U::of(v.as_f64()));
        ModelParams {
            dims: self.dims,
            w_m: c2(&self.w_m),
            b_m: c1(&self.b_m),
            enc: LstmParams {
                w: c2(&self.enc.w),
                b: c1(&self.enc.b),
            },
            dec: LstmParams {
                w: c2(&self.dec.w),
                b: c1(&self.dec.b),
            },
            w_d1: c2(&self.w_d1),
            b_d1: c1(&self.b_d1),
            w_d2: c2(&self.w_d2),
            b_d2: c1(&self.b_d2),
        }
    }

    pub fn fill(&mut self, value: T) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = value);
        }
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x = *x + *y);
        }
    }

    pub fn scale(&mut self, k: T) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = *v * k);
        }
    }
}

fn glorot_fill<T: Scalar, R: Rng + ?Sized>(w: &mut Array2<T>, rng: &mut R) {
    let (rows, cols) = w.dim();
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    w.mapv_inplace(|_| T::of(rng.gen_range(-limit..limit)));
}
