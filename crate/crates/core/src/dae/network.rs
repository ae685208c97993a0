//! Forward and backward passes of the skip-connected LSTM denoising autoencoder.
//!
//! All passes are batched: a batch of `B` windows is laid out step-major, so
//! step `j` of window `b` lives in row `j·B + b` of the stacked input. A single
//! window is simply a batch of one.
//!
//! Encoder step (gates on `[h_{t-1}, r_t]`):
//!
//! ```text
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t) + h_{t-2}
//! ```
//!
//! with `h_{-1} = h_{-2} = 0`. The additive skip term is not clipped, so `h`
//! is unbounded in principle. The decoder runs one plain LSTM step from the
//! final encoder `(h, c)` on the last `r_t`, followed by
//! `x̂ = σ(W_d2 · GELU(W_d1 h_dec + b_d1) + b_d2)`.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use super::activation::{gelu, gelu_grad, sigmoid};
use super::params::{Gradients, LstmParams, ModelParams};
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;

/// Number of leading output entries holding the control vector.
pub const CI_WIDTH: usize = 2;

/// Encoder state after a step: `h_t`, `c_t` and `h_{t-1}` (the skip source
/// for the following step).
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderState<T> {
    pub h: Array1<T>,
    pub c: Array1<T>,
    pub h_prev: Array1<T>,
}

impl<T: Scalar> EncoderState<T> {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: Array1::zeros(hidden),
            c: Array1::zeros(hidden),
            h_prev: Array1::zeros(hidden),
        }
    }
}

/// Output of a forward pass over one window.
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction<T> {
    /// Full reconstruction of the current input row.
    pub x_hat: Array1<T>,
    /// Denoised control, `x_hat[0..2]`.
    pub c_hat: [T; 2],
}

/// Cached activations of one LSTM step for a batch.
#[derive(Clone, Debug)]
struct LstmCache<T> {
    z: Array2<T>,
    /// Activated gates, blocks `[i | f | o | g]`.
    gates: Array2<T>,
    c_prev: Array2<T>,
    tanh_c: Array2<T>,
    c: Array2<T>,
    h: Array2<T>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct BatchTrace<T> {
    batch: usize,
    x: Array2<T>,
    a: Array2<T>,
    r: Array2<T>,
    enc: Vec<LstmCache<T>>,
    dec: LstmCache<T>,
    u: Array2<T>,
    q: Array2<T>,
    /// `B × input` reconstructions.
    pub out: Array2<T>,
}

fn lstm_forward<T: Scalar>(
    p: &LstmParams<T>,
    h_prev: ArrayView2<T>,
    c_prev: ArrayView2<T>,
    r: ArrayView2<T>,
    skip: Option<ArrayView2<T>>,
) -> LstmCache<T> {
    let hid = p.hidden();
    let z = concatenate![Axis(1), h_prev, r];
    let mut gates = z.dot(&p.w.t());
    gates += &p.b;
    gates
        .slice_mut(s![.., ..3 * hid])
        .mapv_inplace(sigmoid);
    gates.slice_mut(s![.., 3 * hid..]).mapv_inplace(|v| v.tanh());

    let i = gates.slice(s![.., ..hid]);
    let f = gates.slice(s![.., hid..2 * hid]);
    let o = gates.slice(s![.., 2 * hid..3 * hid]);
    let g = gates.slice(s![.., 3 * hid..]);

    let mut c = Array2::zeros(c_prev.raw_dim());
    Zip::from(&mut c)
        .and(&f)
        .and(&c_prev)
        .and(&i)
        .and(&g)
        .for_each(|c, &f, &cp, &i, &g| *c = f * cp + i * g);
    let tanh_c = c.mapv(|v| v.tanh());
    let mut h = &o * &tanh_c;
    if let Some(skip) = skip {
        h += &skip;
    }
    LstmCache {
        z,
        c_prev: c_prev.to_owned(),
        gates,
        tanh_c,
        c,
        h,
    }
}

/// Backward through one LSTM step. `dh` is the gradient reaching the gated
/// part of `h` (the skip identity is handled by the caller). Returns
/// `(dz, dc_prev)` and accumulates parameter gradients into `grad`.
fn lstm_backward<T: Scalar>(
    p: &LstmParams<T>,
    cache: &LstmCache<T>,
    dh: ArrayView2<T>,
    dc_next: ArrayView2<T>,
    grad: &mut LstmParams<T>,
) -> (Array2<T>, Array2<T>) {
    let hid = p.hidden();
    let batch = dh.nrows();
    let one = T::one();
    let gates = &cache.gates;
    let i = gates.slice(s![.., ..hid]);
    let f = gates.slice(s![.., hid..2 * hid]);
    let o = gates.slice(s![.., 2 * hid..3 * hid]);
    let g = gates.slice(s![.., 3 * hid..]);

    // dc = dc_next + dh ⊙ o ⊙ (1 − tanh²c)
    let mut dc = dc_next.to_owned();
    Zip::from(&mut dc)
        .and(&dh)
        .and(&o)
        .and(&cache.tanh_c)
        .for_each(|dc, &dh, &o, &t| *dc = *dc + dh * o * (one - t * t));

    let mut da = Array2::<T>::zeros((batch, 4 * hid));
    Zip::from(da.slice_mut(s![.., ..hid]))
        .and(&dc)
        .and(&g)
        .and(&i)
        .for_each(|d, &dc, &g, &i| *d = dc * g * i * (one - i));
    Zip::from(da.slice_mut(s![.., hid..2 * hid]))
        .and(&dc)
        .and(&cache.c_prev)
        .and(&f)
        .for_each(|d, &dc, &cp, &f| *d = dc * cp * f * (one - f));
    Zip::from(da.slice_mut(s![.., 2 * hid..3 * hid]))
        .and(&dh)
        .and(&cache.tanh_c)
        .and(&o)
        .for_each(|d, &dh, &t, &o| *d = dh * t * o * (one - o));
    Zip::from(da.slice_mut(s![.., 3 * hid..]))
        .and(&dc)
        .and(&i)
        .and(&g)
        .for_each(|d, &dc, &i, &g| *d = dc * i * (one - g * g));

    let dc_prev = &dc * &f;
    grad.w += &da.t().dot(&cache.z);
    grad.b += &da.sum_axis(Axis(0));
    let dz = da.dot(&p.w);
    (dz, dc_prev)
}

fn check_window<T>(params_dims: &super::params::Dims, w: &ArrayView2<T>) -> Result<()> {
    if w.nrows() != params_dims.window || w.ncols() != params_dims.input {
        return Err(shape_err(
            format!("{}×{} window", params_dims.window, params_dims.input),
            format!("{}×{}", w.nrows(), w.ncols()),
        ));
    }
    Ok(())
}

/// Integration layer for a single row: `GELU(W_m x + b_m)`.
pub fn integrate<T: Scalar>(x: ArrayView1<T>, params: &ModelParams<T>) -> Result<Array1<T>> {
    if x.len() != params.dims.input {
        return Err(shape_err(params.dims.input, x.len()));
    }
    let mut a = params.w_m.dot(&x);
    a += &params.b_m;
    Ok(a.mapv(gelu))
}

/// One skip-connected encoder step.
pub fn encoder_step<T: Scalar>(
    r: ArrayView1<T>,
    prev: &EncoderState<T>,
    params: &ModelParams<T>,
) -> EncoderState<T> {
    let row = |v: &Array1<T>| v.view().insert_axis(Axis(0)).to_owned();
    let cache = lstm_forward(
        &params.enc,
        row(&prev.h).view(),
        row(&prev.c).view(),
        r.insert_axis(Axis(0)),
        Some(row(&prev.h_prev).view()),
    );
    EncoderState {
        h: cache.h.row(0).to_owned(),
        c: cache.c.row(0).to_owned(),
        h_prev: prev.h.clone(),
    }
}

/// Decoder step seeded with the final encoder `(h, c)`, then both output layers.
pub fn decode<T: Scalar>(
    r: ArrayView1<T>,
    enc: &EncoderState<T>,
    params: &ModelParams<T>,
) -> Array1<T> {
    let h = enc.h.view().insert_axis(Axis(0));
    let c = enc.c.view().insert_axis(Axis(0));
    let cache = lstm_forward(&params.dec, h, c, r.insert_axis(Axis(0)), None);
    let (_, _, out) = output_layers(cache.h.view(), params);
    out.row(0).to_owned()
}

fn output_layers<T: Scalar>(
    h_dec: ArrayView2<T>,
    params: &ModelParams<T>,
) -> (Array2<T>, Array2<T>, Array2<T>) {
    let mut u = h_dec.dot(&params.w_d1.t());
    u += &params.b_d1;
    let q = u.mapv(gelu);
    let mut y = q.dot(&params.w_d2.t());
    y += &params.b_d2;
    y.mapv_inplace(sigmoid);
    (u, q, y)
}

/// Forward pass over a batch of windows, keeping the trace for backprop.
pub fn forward_batch<T: Scalar>(
    windows: &[ArrayView2<T>],
    params: &ModelParams<T>,
) -> Result<BatchTrace<T>> {
    let dims = params.dims;
    let batch = windows.len();
    if batch == 0 {
        return Err(shape_err("non-empty batch", 0));
    }
    for w in windows {
        check_window(&dims, w)?;
    }
    let (k, hid) = (dims.window, dims.hidden);

    let mut x = Array2::<T>::zeros((k * batch, dims.input));
    for (b, w) in windows.iter().enumerate() {
        for j in 0..k {
            x.row_mut(j * batch + b).assign(&w.row(j));
        }
    }
    let mut a = x.dot(&params.w_m.t());
    a += &params.b_m;
    let r = a.mapv(gelu);

    let zeros = Array2::<T>::zeros((batch, hid));
    let mut enc: Vec<LstmCache<T>> = Vec::with_capacity(k);
    for j in 0..k {
        let r_j = r.slice(s![j * batch..(j + 1) * batch, ..]);
        let (h_prev, c_prev) = match enc.last() {
            Some(prev) => (prev.h.view(), prev.c.view()),
            None => (zeros.view(), zeros.view()),
        };
        let skip = if j >= 2 {
            enc[j - 2].h.view()
        } else {
            zeros.view()
        };
        let cache = lstm_forward(&params.enc, h_prev, c_prev, r_j, Some(skip));
        enc.push(cache);
    }

    let last = enc.last().expect("window has at least one step");
    let r_last = r.slice(s![(k - 1) * batch.., ..]);
    let dec = lstm_forward(&params.dec, last.h.view(), last.c.view(), r_last, None);
    let (u, q, out) = output_layers(dec.h.view(), params);

    Ok(BatchTrace {
        batch,
        x,
        a,
        r,
        enc,
        dec,
        u,
        q,
        out,
    })
}

/// Backpropagation through the whole network given `∂L/∂x̂` (`B × input`).
pub fn backward<T: Scalar>(
    trace: &BatchTrace<T>,
    d_out: ArrayView2<T>,
    params: &ModelParams<T>,
) -> Gradients<T> {
    let dims = params.dims;
    let (k, hid, batch) = (dims.window, dims.hidden, trace.batch);
    let mut g = Gradients::zeros(dims);
    let one = T::one();

    let mut dy = d_out.to_owned();
    Zip::from(&mut dy)
        .and(&trace.out)
        .for_each(|d, &y| *d = *d * y * (one - y));
    g.w_d2 = dy.t().dot(&trace.q);
    g.b_d2 = dy.sum_axis(Axis(0));
    let mut du = dy.dot(&params.w_d2);
    Zip::from(&mut du)
        .and(&trace.u)
        .for_each(|d, &u| *d = *d * gelu_grad(u));
    g.w_d1 = du.t().dot(&trace.dec.h);
    g.b_d1 = du.sum_axis(Axis(0));
    let dh_dec = du.dot(&params.w_d1);

    let zeros = Array2::<T>::zeros((batch, hid));
    let (dz_dec, dc_last) = lstm_backward(
        &params.dec,
        &trace.dec,
        dh_dec.view(),
        zeros.view(),
        &mut g.dec,
    );

    let mut dr = Array2::<T>::zeros(trace.r.raw_dim());
    let mut dh: Vec<Array2<T>> = vec![zeros.clone(); k];
    dh[k - 1] += &dz_dec.slice(s![.., ..hid]);
    dr.slice_mut(s![(k - 1) * batch.., ..])
        .assign(&dz_dec.slice(s![.., hid..]));

    let mut dc = dc_last;
    for j in (0..k).rev() {
        let dh_j = std::mem::replace(&mut dh[j], zeros.clone());
        let (dz, dc_prev) = lstm_backward(
            &params.enc,
            &trace.enc[j],
            dh_j.view(),
            dc.view(),
            &mut g.enc,
        );
        if j >= 1 {
            dh[j - 1] += &dz.slice(s![.., ..hid]);
        }
        if j >= 2 {
            dh[j - 2] += &dh_j;
        }
        let mut dr_j = dr.slice_mut(s![j * batch..(j + 1) * batch, ..]);
        dr_j += &dz.slice(s![.., hid..]);
        dc = dc_prev;
    }

    Zip::from(&mut dr)
        .and(&trace.a)
        .for_each(|d, &a| *d = *d * gelu_grad(a));
    g.w_m = dr.t().dot(&trace.x);
    g.b_m = dr.sum_axis(Axis(0));
    g
}

/// Reconstruct the current row of a single window.
pub fn forward_window<T: Scalar>(
    window: ArrayView2<T>,
    params: &ModelParams<T>,
) -> Result<Reconstruction<T>> {
    let trace = forward_batch(&[window], params)?;
    let x_hat = trace.out.row(0).to_owned();
    let c_hat = [x_hat[0], x_hat[1]];
    Ok(Reconstruction { x_hat, c_hat })
}

/// Mean-squared error over the control slice, averaged over the batch, and
/// its exact gradient.
pub fn loss_and_grad_batch<T: Scalar>(
    windows: &[ArrayView2<T>],
    targets: &[[T; 2]],
    params: &ModelParams<T>,
) -> Result<(T, Gradients<T>)> {
    if windows.len() != targets.len() {
        return Err(shape_err(windows.len(), targets.len()));
    }
    let trace = forward_batch(windows, params)?;
    let batch = T::of(windows.len() as f64);
    let width = T::of(CI_WIDTH as f64);
    let mut d_out = Array2::<T>::zeros(trace.out.raw_dim());
    let mut loss = T::zero();
    for (b, target) in targets.iter().enumerate() {
        for (j, &t) in target.iter().enumerate() {
            let e = trace.out[[b, j]] - t;
            loss = loss + e * e;
            d_out[[b, j]] = T::of(2.0) * e / (width * batch);
        }
    }
    loss = loss / (width * batch);
    let grads = backward(&trace, d_out.view(), params);
    Ok((loss, grads))
}

/// Single-window loss and gradient.
pub fn loss_and_grad<T: Scalar>(
    window: ArrayView2<T>,
    target: [T; 2],
    params: &ModelParams<T>,
) -> Result<(T, Gradients<T>)> {
    loss_and_grad_batch(&[window], &[target], params)
}

/// Batch loss without gradients.
pub fn loss_batch<T: Scalar>(
    windows: &[ArrayView2<T>],
    targets: &[[T; 2]],
    params: &ModelParams<T>,
) -> Result<T> {
    let trace = forward_batch(windows, params)?;
    let mut loss = T::zero();
    for (b, target) in targets.iter().enumerate() {
        for (j, &t) in target.iter().enumerate() {
            let e = trace.out[[b, j]] - t;
            loss = loss + e * e;
        }
    }
    Ok(loss / T::of((CI_WIDTH * targets.len()) as f64))
}
