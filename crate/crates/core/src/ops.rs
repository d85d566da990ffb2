//! Forward kernels and vector-Jacobian products for every primitive the
//! grounding model uses.
//!
//! Layout conventions (all row-major):
//! - sequences `[T, C]`, time-major
//! - conv kernels `[C_out, C_in, K]`
//! - recurrent input weights `[G*H, D]`, hidden weights `[G*H, H]`, biases
//!   `[G*H]`, with gate blocks stacked along rows (GRU: r, z, n; LSTM:
//!   i, f, g, o — the PyTorch convention)
//!
//! Forward functions validate shapes and return fresh tensors; `*_vjp`
//! functions take the upstream gradient and return per-input gradient
//! buffers. The graph in [`crate::graph`] wires these together; frozen
//! (post-training) inference calls the forward kernels directly, so both
//! paths are bit-identical.

use alloc::vec;
use alloc::vec::Vec;

use crate::num;
use crate::tensor::{Tensor, TensorError};

/// Lower clamp for BCE inputs; the upper clamp is `1 - BCE_CLAMP`.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Output length T (zero padding, split (K-1)/2 left).
    Same,
    /// Output length T - K + 1.
    Valid,
}

// ── small dense helpers ──────────────────────────────────────────────

/// out[r] += m[r, :] · v for an r×c row-major matrix slice.
fn addmv(out: &mut [f64], m: &[f64], cols: usize, v: &[f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        let row = &m[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(v) {
            acc += a * b;
        }
        *o += acc;
    }
}

/// out[c] += mᵀ[c, :] · v = Σ_r m[r, c]·v[r].
fn addmv_t(out: &mut [f64], m: &[f64], cols: usize, v: &[f64]) {
    for (r, &vr) in v.iter().enumerate() {
        let row = &m[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * vr;
        }
    }
}

/// dm[r, c] += u[r]·v[c].
fn addouter(dm: &mut [f64], u: &[f64], v: &[f64]) {
    let cols = v.len();
    for (r, &ur) in u.iter().enumerate() {
        let row = &mut dm[r * cols..(r + 1) * cols];
        for (o, b) in row.iter_mut().zip(v) {
            *o += ur * b;
        }
    }
}

fn addv(out: &mut [f64], v: &[f64]) {
    for (o, a) in out.iter_mut().zip(v) {
        *o += a;
    }
}

// ── conv1d ───────────────────────────────────────────────────────────

fn conv1d_check(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    padding: Padding,
) -> Result<(usize, usize, usize, usize, usize), TensorError> {
    let (t, cin) = (x.rows(), x.cols());
    if w.shape().len() != 3 {
        return Err(TensorError::Param {
            op: "conv1d",
            name: "kernels",
            why: "expected rank-3 [c_out, c_in, k]",
        });
    }
    let (cout, wcin, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    if wcin != cin {
        return Err(TensorError::Dim {
            op: "conv1d",
            axis: "in_channels",
            expected: cin,
            actual: wcin,
        });
    }
    if b.numel() != cout {
        return Err(TensorError::Dim {
            op: "conv1d",
            axis: "out_channels",
            expected: cout,
            actual: b.numel(),
        });
    }
    if k == 0 {
        return Err(TensorError::Param {
            op: "conv1d",
            name: "kernel_size",
            why: "must be >= 1",
        });
    }
    if matches!(padding, Padding::Valid) && k > t {
        return Err(TensorError::Dim {
            op: "conv1d",
            axis: "time",
            expected: k,
            actual: t,
        });
    }
    Ok((t, cin, cout, k, pad_left(padding, k)))
}

fn pad_left(padding: Padding, k: usize) -> usize {
    match padding {
        Padding::Same => (k - 1) / 2,
        Padding::Valid => 0,
    }
}

/// Cross-correlation (no kernel flip) over the time axis.
pub fn conv1d(x: &Tensor, w: &Tensor, b: &Tensor, padding: Padding) -> Result<Tensor, TensorError> {
    let (t, cin, cout, k, pad) = conv1d_check(x, w, b, padding)?;
    let t_out = match padding {
        Padding::Same => t,
        Padding::Valid => t - k + 1,
    };
    let xd = x.data();
    let wd = w.data();
    let bd = b.data();
    let mut out = vec![0.0; t_out * cout];
    for to in 0..t_out {
        let o = &mut out[to * cout..(to + 1) * cout];
        for (co, oc) in o.iter_mut().enumerate() {
            let mut acc = bd[co];
            for kk in 0..k {
                let ti = to as isize + kk as isize - pad as isize;
                if ti < 0 || ti >= t as isize {
                    continue;
                }
                let xrow = &xd[ti as usize * cin..(ti as usize + 1) * cin];
                let wbase = (co * cin) * k + kk;
                for (ci, xv) in xrow.iter().enumerate() {
                    acc += xv * wd[wbase + ci * k];
                }
            }
            *oc = acc;
        }
    }
    Tensor::matrix(t_out, cout, out)
}

pub(crate) fn conv1d_vjp(
    x: &Tensor,
    w: &Tensor,
    padding: Padding,
    dy: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (t, cin) = (x.rows(), x.cols());
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let pad = pad_left(padding, k);
    let t_out = match padding {
        Padding::Same => t,
        Padding::Valid => t - k + 1,
    };
    let xd = x.data();
    let wd = w.data();
    let mut dx = vec![0.0; t * cin];
    let mut dw = vec![0.0; cout * cin * k];
    let mut db = vec![0.0; cout];
    for to in 0..t_out {
        let g = &dy[to * cout..(to + 1) * cout];
        for (co, &gc) in g.iter().enumerate() {
            db[co] += gc;
            for kk in 0..k {
                let ti = to as isize + kk as isize - pad as isize;
                if ti < 0 || ti >= t as isize {
                    continue;
                }
                let ti = ti as usize;
                let wbase = (co * cin) * k + kk;
                for ci in 0..cin {
                    dx[ti * cin + ci] += gc * wd[wbase + ci * k];
                    dw[wbase + ci * k] += gc * xd[ti * cin + ci];
                }
            }
        }
    }
    (dx, dw, db)
}

// ── Lp pooling ───────────────────────────────────────────────────────

fn lp_pool_check(p: f64, window: usize) -> Result<(), TensorError> {
    if p.is_nan() || p < 1.0 {
        return Err(TensorError::Param {
            op: "lp_pool",
            name: "p",
            why: "must be >= 1",
        });
    }
    if window == 0 {
        return Err(TensorError::Param {
            op: "lp_pool",
            name: "window",
            why: "must be >= 1",
        });
    }
    Ok(())
}

/// Windowed p-norm mean over time: out = (mean |x|^p)^(1/p). The tail
/// window repeats the last frame, so no trailing audio is dropped.
pub fn lp_pool(x: &Tensor, p: f64, window: usize) -> Result<Tensor, TensorError> {
    lp_pool_check(p, window)?;
    let (t, c) = (x.rows(), x.cols());
    let t_out = t.div_ceil(window);
    let xd = x.data();
    let mut out = vec![0.0; t_out * c];
    for u in 0..t_out {
        for cc in 0..c {
            let mut acc = 0.0;
            for j in 0..window {
                let ti = (u * window + j).min(t - 1);
                acc += num::powf(num::abs(xd[ti * c + cc]), p);
            }
            out[u * c + cc] = num::powf(acc / window as f64, 1.0 / p);
        }
    }
    Tensor::matrix(t_out, c, out)
}

pub(crate) fn lp_pool_vjp(x: &Tensor, p: f64, window: usize, dy: &[f64]) -> Vec<f64> {
    let (t, c) = (x.rows(), x.cols());
    let t_out = t.div_ceil(window);
    let xd = x.data();
    let mut dx = vec![0.0; t * c];
    for u in 0..t_out {
        for cc in 0..c {
            let mut m = 0.0;
            for j in 0..window {
                let ti = (u * window + j).min(t - 1);
                m += num::powf(num::abs(xd[ti * c + cc]), p);
            }
            m /= window as f64;
            if m == 0.0 {
                continue; // output 0, subgradient 0
            }
            let base = dy[u * c + cc] * num::powf(m, 1.0 / p - 1.0) / window as f64;
            for j in 0..window {
                let ti = (u * window + j).min(t - 1);
                let v = xd[ti * c + cc];
                let s = if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                dx[ti * c + cc] += base * num::powf(num::abs(v), p - 1.0) * s;
            }
        }
    }
    dx
}

// ── linear upsampling ────────────────────────────────────────────────

/// Source position of output row `i` under endpoint alignment.
fn upsample_pos(i: usize, t: usize, target: usize) -> (usize, usize, f64) {
    if t == 1 || target == 1 {
        return (0, 0, 0.0);
    }
    let pos = i as f64 * (t - 1) as f64 / (target - 1) as f64;
    let lo = num::floor(pos) as usize;
    let lo = lo.min(t - 1);
    let hi = (lo + 1).min(t - 1);
    (lo, hi, pos - lo as f64)
}

/// Endpoint-aligned linear interpolation along time; first and last rows
/// are preserved exactly.
pub fn upsample_linear(x: &Tensor, target: usize) -> Result<Tensor, TensorError> {
    if target == 0 {
        return Err(TensorError::Param {
            op: "upsample_linear",
            name: "target_len",
            why: "must be >= 1",
        });
    }
    let (t, c) = (x.rows(), x.cols());
    let xd = x.data();
    let mut out = vec![0.0; target * c];
    for i in 0..target {
        let (lo, hi, frac) = upsample_pos(i, t, target);
        let a = &xd[lo * c..(lo + 1) * c];
        let b = &xd[hi * c..(hi + 1) * c];
        let o = &mut out[i * c..(i + 1) * c];
        for cc in 0..c {
            o[cc] = (1.0 - frac) * a[cc] + frac * b[cc];
        }
    }
    Tensor::matrix(target, c, out)
}

pub(crate) fn upsample_linear_vjp(x: &Tensor, target: usize, dy: &[f64]) -> Vec<f64> {
    let (t, c) = (x.rows(), x.cols());
    let mut dx = vec![0.0; t * c];
    for i in 0..target {
        let (lo, hi, frac) = upsample_pos(i, t, target);
        let g = &dy[i * c..(i + 1) * c];
        for cc in 0..c {
            dx[lo * c + cc] += (1.0 - frac) * g[cc];
            dx[hi * c + cc] += frac * g[cc];
        }
    }
    dx
}

// ── affine (time-distributed linear) ─────────────────────────────────

pub fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    let (t, f) = (x.rows(), x.cols());
    let (wf, g) = (w.rows(), w.cols());
    if wf != f {
        return Err(TensorError::Dim {
            op: "affine",
            axis: "in_features",
            expected: f,
            actual: wf,
        });
    }
    if b.numel() != g {
        return Err(TensorError::Dim {
            op: "affine",
            axis: "out_features",
            expected: g,
            actual: b.numel(),
        });
    }
    let xd = x.data();
    let wd = w.data();
    let mut out = vec![0.0; t * g];
    for ti in 0..t {
        let o = &mut out[ti * g..(ti + 1) * g];
        o.copy_from_slice(b.data());
        let xrow = &xd[ti * f..(ti + 1) * f];
        for (fi, &xv) in xrow.iter().enumerate() {
            let wrow = &wd[fi * g..(fi + 1) * g];
            for (oc, wv) in o.iter_mut().zip(wrow) {
                *oc += xv * wv;
            }
        }
    }
    Tensor::matrix(t, g, out)
}

pub(crate) fn affine_vjp(
    x: &Tensor,
    w: &Tensor,
    dy: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (t, f) = (x.rows(), x.cols());
    let g = w.cols();
    let xd = x.data();
    let wd = w.data();
    let mut dx = vec![0.0; t * f];
    let mut dw = vec![0.0; f * g];
    let mut db = vec![0.0; g];
    for ti in 0..t {
        let grow = &dy[ti * g..(ti + 1) * g];
        addv(&mut db, grow);
        let xrow = &xd[ti * f..(ti + 1) * f];
        let dxrow = &mut dx[ti * f..(ti + 1) * f];
        for fi in 0..f {
            let wrow = &wd[fi * g..(fi + 1) * g];
            let mut acc = 0.0;
            for (gv, wv) in grow.iter().zip(wrow) {
                acc += gv * wv;
            }
            dxrow[fi] += acc;
            let dwrow = &mut dw[fi * g..(fi + 1) * g];
            let xv = xrow[fi];
            for (dwv, gv) in dwrow.iter_mut().zip(grow) {
                *dwv += xv * gv;
            }
        }
    }
    (dx, dw, db)
}

// ── relu ─────────────────────────────────────────────────────────────

pub fn relu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

pub(crate) fn relu_vjp(x: &Tensor, dy: &[f64]) -> Vec<f64> {
    x.data()
        .iter()
        .zip(dy)
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect()
}

// ── recurrent cells ──────────────────────────────────────────────────

pub const GRU_GATES: usize = 3; // r, z, n
pub const LSTM_GATES: usize = 4; // i, f, g, o

fn recurrent_check(
    op: &'static str,
    gates: usize,
    x: &Tensor,
    w_ih: &Tensor,
    w_hh: &Tensor,
    b_ih: &Tensor,
    b_hh: &Tensor,
) -> Result<(usize, usize, usize), TensorError> {
    let (t, d) = (x.rows(), x.cols());
    let gh = w_ih.rows();
    if gh == 0 || !gh.is_multiple_of(gates) {
        return Err(TensorError::Param {
            op,
            name: "w_ih",
            why: "row count must be a positive multiple of the gate count",
        });
    }
    let h = gh / gates;
    if w_ih.cols() != d {
        return Err(TensorError::Dim {
            op,
            axis: "input_size",
            expected: d,
            actual: w_ih.cols(),
        });
    }
    if w_hh.rows() != gh || w_hh.cols() != h {
        return Err(TensorError::Dim {
            op,
            axis: "hidden_size",
            expected: h,
            actual: w_hh.cols(),
        });
    }
    if b_ih.numel() != gh || b_hh.numel() != gh {
        return Err(TensorError::Dim {
            op,
            axis: "bias",
            expected: gh,
            actual: if b_ih.numel() != gh {
                b_ih.numel()
            } else {
                b_hh.numel()
            },
        });
    }
    Ok((t, d, h))
}

/// GRU over the full sequence, initial hidden state zero.
///
/// Returns the hidden sequence `[T, H]` and a cache of `[r, z, n, hn]`
/// rows (4H per step) needed by the backward pass, where
/// `hn = W_hn·h_prev + b_hn`.
pub fn gru_forward(
    x: &Tensor,
    w_ih: &Tensor,
    w_hh: &Tensor,
    b_ih: &Tensor,
    b_hh: &Tensor,
) -> Result<(Tensor, Vec<f64>), TensorError> {
    let (t, _d, h) = recurrent_check("gru", GRU_GATES, x, w_ih, w_hh, b_ih, b_hh)?;
    let mut hs = vec![0.0; t * h];
    let mut cache = vec![0.0; t * 4 * h];
    let mut h_prev = vec![0.0; h];
    let mut a = vec![0.0; 3 * h];
    let mut hp = vec![0.0; 3 * h];
    for ti in 0..t {
        a.copy_from_slice(b_ih.data());
        addmv(&mut a, w_ih.data(), x.cols(), x.row(ti));
        hp.copy_from_slice(b_hh.data());
        addmv(&mut hp, w_hh.data(), h, &h_prev);
        let crow = &mut cache[ti * 4 * h..(ti + 1) * 4 * h];
        let hrow = &mut hs[ti * h..(ti + 1) * h];
        for j in 0..h {
            let r = num::sigmoid(a[j] + hp[j]);
            let z = num::sigmoid(a[h + j] + hp[h + j]);
            let hn = hp[2 * h + j];
            let n = num::tanh(a[2 * h + j] + r * hn);
            crow[j] = r;
            crow[h + j] = z;
            crow[2 * h + j] = n;
            crow[3 * h + j] = hn;
            hrow[j] = (1.0 - z) * n + z * h_prev[j];
        }
        h_prev.copy_from_slice(hrow);
    }
    Ok((Tensor::matrix(t, h, hs)?, cache))
}

/// Gradient bundle for a recurrent cell: (dx, dw_ih, dw_hh, db_ih, db_hh).
pub(crate) type RecurrentGrads = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

#[allow(clippy::too_many_arguments)]
pub(crate) fn gru_vjp(
    x: &Tensor,
    w_ih: &Tensor,
    w_hh: &Tensor,
    h_seq: &Tensor,
    cache: &[f64],
    dy: &[f64],
) -> RecurrentGrads {
    let (t, d) = (x.rows(), x.cols());
    let h = h_seq.cols();
    let mut dx = vec![0.0; t * d];
    let mut dw_ih = vec![0.0; 3 * h * d];
    let mut dw_hh = vec![0.0; 3 * h * h];
    let mut db_ih = vec![0.0; 3 * h];
    let mut db_hh = vec![0.0; 3 * h];
    let zeros = vec![0.0; h];
    let mut dh_next = vec![0.0; h];
    let mut da = vec![0.0; 3 * h]; // gradients wrt input-side pre-activations
    let mut dhp = vec![0.0; 3 * h]; // gradients wrt hidden-side pre-activations
    for ti in (0..t).rev() {
        let crow = &cache[ti * 4 * h..(ti + 1) * 4 * h];
        let h_prev: &[f64] = if ti == 0 { &zeros } else { h_seq.row(ti - 1) };
        let gout = &dy[ti * h..(ti + 1) * h];
        let mut dh_prev = vec![0.0; h];
        for j in 0..h {
            let dh = gout[j] + dh_next[j];
            let (r, z, n, hn) = (crow[j], crow[h + j], crow[2 * h + j], crow[3 * h + j]);
            let dn = dh * (1.0 - z);
            let dz = dh * (h_prev[j] - n);
            dh_prev[j] += dh * z;
            let da_n = dn * (1.0 - n * n);
            let dr = da_n * hn;
            let dhn = da_n * r;
            let da_z = dz * z * (1.0 - z);
            let da_r = dr * r * (1.0 - r);
            da[j] = da_r;
            da[h + j] = da_z;
            da[2 * h + j] = da_n;
            dhp[j] = da_r;
            dhp[h + j] = da_z;
            dhp[2 * h + j] = dhn;
        }
        addmv_t(&mut dx[ti * d..(ti + 1) * d], w_ih.data(), d, &da);
        addouter(&mut dw_ih, &da, x.row(ti));
        addv(&mut db_ih, &da);
        addmv_t(&mut dh_prev, w_hh.data(), h, &dhp);
        addouter(&mut dw_hh, &dhp, h_prev);
        addv(&mut db_hh, &dhp);
        dh_next = dh_prev;
    }
    (dx, dw_ih, dw_hh, db_ih, db_hh)
}

/// LSTM over the full sequence, initial hidden and cell state zero.
///
/// Returns the hidden sequence `[T, H]` and a cache of `[i, f, g, o, c]`
/// rows (5H per step).
pub fn lstm_forward(
    x: &Tensor,
    w_ih: &Tensor,
    w_hh: &Tensor,
    b_ih: &Tensor,
    b_hh: &Tensor,
) -> Result<(Tensor, Vec<f64>), TensorError> {
    let (t, _d, h) = recurrent_check("lstm", LSTM_GATES, x, w_ih, w_hh, b_ih, b_hh)?;
    let mut hs = vec![0.0; t * h];
    let mut cache = vec![0.0; t * 5 * h];
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    let mut a = vec![0.0; 4 * h];
    for ti in 0..t {
        a.copy_from_slice(b_ih.data());
        addv(&mut a, b_hh.data());
        addmv(&mut a, w_ih.data(), x.cols(), x.row(ti));
        addmv(&mut a, w_hh.data(), h, &h_prev);
        let crow = &mut cache[ti * 5 * h..(ti + 1) * 5 * h];
        let hrow = &mut hs[ti * h..(ti + 1) * h];
        for j in 0..h {
            let i = num::sigmoid(a[j]);
            let f = num::sigmoid(a[h + j]);
            let g = num::tanh(a[2 * h + j]);
            let o = num::sigmoid(a[3 * h + j]);
            let c = f * c_prev[j] + i * g;
            crow[j] = i;
            crow[h + j] = f;
            crow[2 * h + j] = g;
            crow[3 * h + j] = o;
            crow[4 * h + j] = c;
            hrow[j] = o * num::tanh(c);
        }
        for j in 0..h {
            c_prev[j] = crow[4 * h + j];
        }
        h_prev.copy_from_slice(hrow);
    }
    Ok((Tensor::matrix(t, h, hs)?, cache))
}

pub(crate) fn lstm_vjp(
    x: &Tensor,
    w_ih: &Tensor,
    w_hh: &Tensor,
    h_seq: &Tensor,
    cache: &[f64],
    dy: &[f64],
) -> RecurrentGrads {
    let (t, d) = (x.rows(), x.cols());
    let h = h_seq.cols();
    let mut dx = vec![0.0; t * d];
    let mut dw_ih = vec![0.0; 4 * h * d];
    let mut dw_hh = vec![0.0; 4 * h * h];
    let mut db = vec![0.0; 4 * h]; // b_ih and b_hh receive identical gradients
    let zeros = vec![0.0; h];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut da = vec![0.0; 4 * h];
    for ti in (0..t).rev() {
        let crow = &cache[ti * 5 * h..(ti + 1) * 5 * h];
        let h_prev: &[f64] = if ti == 0 { &zeros } else { h_seq.row(ti - 1) };
        let c_prev: &[f64] = if ti == 0 {
            &zeros
        } else {
            &cache[(ti - 1) * 5 * h + 4 * h..(ti - 1) * 5 * h + 5 * h]
        };
        let gout = &dy[ti * h..(ti + 1) * h];
        let mut dh_prev = vec![0.0; h];
        let mut dc_prev = vec![0.0; h];
        for j in 0..h {
            let dh = gout[j] + dh_next[j];
            let (i, f, g, o, c) = (
                crow[j],
                crow[h + j],
                crow[2 * h + j],
                crow[3 * h + j],
                crow[4 * h + j],
            );
            let tc = num::tanh(c);
            let dov = dh * tc;
            let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
            let div = dc * g;
            let dfv = dc * c_prev[j];
            let dgv = dc * i;
            dc_prev[j] = dc * f;
            da[j] = div * i * (1.0 - i);
            da[h + j] = dfv * f * (1.0 - f);
            da[2 * h + j] = dgv * (1.0 - g * g);
            da[3 * h + j] = dov * o * (1.0 - o);
        }
        addmv_t(&mut dx[ti * d..(ti + 1) * d], w_ih.data(), d, &da);
        addouter(&mut dw_ih, &da, x.row(ti));
        addmv_t(&mut dh_prev, w_hh.data(), h, &da);
        addouter(&mut dw_hh, &da, h_prev);
        addv(&mut db, &da);
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
    let db_hh = db.clone();
    (dx, dw_ih, dw_hh, db, db_hh)
}

// ── embedding mean ───────────────────────────────────────────────────

/// Mean of the table rows selected by `indices` (duplicates allowed).
pub fn embed_mean(table: &Tensor, indices: &[usize]) -> Result<Tensor, TensorError> {
    if indices.is_empty() {
        return Err(TensorError::Param {
            op: "embed_mean",
            name: "indices",
            why: "must select at least one row",
        });
    }
    let (v, d) = (table.rows(), table.cols());
    let mut out = vec![0.0; d];
    for &idx in indices {
        if idx >= v {
            return Err(TensorError::Dim {
                op: "embed_mean",
                axis: "vocab",
                expected: v,
                actual: idx,
            });
        }
        addv(&mut out, table.row(idx));
    }
    let k = indices.len() as f64;
    for o in &mut out {
        *o /= k;
    }
    Tensor::vector(out)
}

pub(crate) fn embed_mean_vjp(table: &Tensor, indices: &[usize], dy: &[f64]) -> Vec<f64> {
    let (v, d) = (table.rows(), table.cols());
    let mut dt = vec![0.0; v * d];
    let k = indices.len() as f64;
    for &idx in indices {
        for (j, g) in dy.iter().enumerate() {
            dt[idx * d + j] += g / k;
        }
    }
    dt
}

// ── exp(−L2) similarity ──────────────────────────────────────────────

/// s_t = exp(−‖e_A[t] − e_P‖₂): the frame similarity of Eq-style
/// grounding models. Output is in (0, 1], hitting 1 only at zero distance.
pub fn exp_neg_l2(e_a: &Tensor, e_p: &Tensor) -> Result<Tensor, TensorError> {
    let (t, d) = (e_a.rows(), e_a.cols());
    if e_p.numel() != d {
        return Err(TensorError::Dim {
            op: "exp_neg_l2",
            axis: "embed_dim",
            expected: d,
            actual: e_p.numel(),
        });
    }
    let pd = e_p.data();
    let mut out = vec![0.0; t];
    for (ti, o) in out.iter_mut().enumerate() {
        let row = e_a.row(ti);
        let mut sq = 0.0;
        for (a, p) in row.iter().zip(pd) {
            let diff = a - p;
            sq += diff * diff;
        }
        *o = num::exp(-num::sqrt(sq));
    }
    Tensor::vector(out)
}

pub(crate) fn exp_neg_l2_vjp(
    e_a: &Tensor,
    e_p: &Tensor,
    s: &[f64],
    dy: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let (t, d) = (e_a.rows(), e_a.cols());
    let pd = e_p.data();
    let mut da = vec![0.0; t * d];
    let mut dp = vec![0.0; d];
    for ti in 0..t {
        let row = e_a.row(ti);
        let mut sq = 0.0;
        for (a, p) in row.iter().zip(pd) {
            let diff = a - p;
            sq += diff * diff;
        }
        let dist = num::sqrt(sq);
        if dist < 1e-12 {
            continue; // non-differentiable point; subgradient 0
        }
        let coef = -dy[ti] * s[ti] / dist;
        for j in 0..d {
            let diff = row[j] - pd[j];
            da[ti * d + j] += coef * diff;
            dp[j] -= coef * diff;
        }
    }
    (da, dp)
}

// ── BCE ──────────────────────────────────────────────────────────────

/// Mean binary cross-entropy of scores against {0,1} labels, with scores
/// clamped to [BCE_CLAMP, 1−BCE_CLAMP] before the logs.
pub fn bce_mean(s: &Tensor, y: &[f64]) -> Result<Tensor, TensorError> {
    if s.numel() != y.len() {
        return Err(TensorError::Dim {
            op: "bce_mean",
            axis: "length",
            expected: s.numel(),
            actual: y.len(),
        });
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(TensorError::Param {
            op: "bce_mean",
            name: "labels",
            why: "must be 0 or 1",
        });
    }
    let t = y.len() as f64;
    let mut acc = 0.0;
    for (&sv, &yv) in s.data().iter().zip(y) {
        let sc = sv.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        acc -= yv * num::ln(sc) + (1.0 - yv) * num::ln(1.0 - sc);
    }
    Tensor::vector(vec![acc / t])
}

// NaN scores must reach the gradient formula (matching the forward clamp,
// which propagates NaN), not land in the flat branch and vanish.
#[allow(clippy::manual_range_contains)]
pub(crate) fn bce_mean_vjp(s: &Tensor, y: &[f64], dy: f64) -> Vec<f64> {
    let t = y.len() as f64;
    s.data()
        .iter()
        .zip(y)
        .map(|(&sv, &yv)| {
            if sv < BCE_CLAMP || sv > 1.0 - BCE_CLAMP {
                0.0 // clamped region: flat
            } else {
                dy * (-(yv / sv) + (1.0 - yv) / (1.0 - sv)) / t
            }
        })
        .collect()
}

// ── scalar reductions (loss heads and test scalarizers) ──────────────

pub fn sum(x: &Tensor) -> Tensor {
    Tensor::vector(vec![x.data().iter().sum()]).expect("finite by construction")
}

pub fn sum_squares(x: &Tensor) -> Tensor {
    Tensor::vector(vec![x.data().iter().map(|v| v * v).sum()]).expect("finite by construction")
}

/// Σ w_i·x_i with fixed weights; scalarizes arbitrary outputs for
/// gradient checks without the blind spots of a plain sum.
pub fn weighted_sum(x: &Tensor, weights: &[f64]) -> Result<Tensor, TensorError> {
    if weights.len() != x.numel() {
        return Err(TensorError::Dim {
            op: "weighted_sum",
            axis: "length",
            expected: x.numel(),
            actual: weights.len(),
        });
    }
    let acc = x.data().iter().zip(weights).map(|(a, b)| a * b).sum();
    Tensor::vector(vec![acc])
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn t1(data: &[f64]) -> Tensor {
        Tensor::matrix(data.len(), 1, data.to_vec()).unwrap()
    }

    // ── conv1d ──

    #[test]
    fn conv_valid_hand_case() {
        // [1,2,3] ⋆ [1,0,−1], valid: 1·1 + 2·0 + 3·(−1) = −2.
        let x = t1(&[1.0, 2.0, 3.0]);
        let w = Tensor::new(vec![1, 1, 3], vec![1.0, 0.0, -1.0]).unwrap();
        let b = Tensor::vector(vec![0.0]).unwrap();
        let y = conv1d(&x, &w, &b, Padding::Valid).unwrap();
        assert_eq!(y.shape(), &[1, 1]);
        assert_eq!(y.data(), &[-2.0]);
    }

    #[test]
    fn conv_identity_kernel() {
        let x = Tensor::matrix(4, 2, vec![1.0, -2.0, 3.0, 0.5, -1.5, 2.5, 0.0, 9.0]).unwrap();
        // One kernel per channel picking out that channel.
        let w = Tensor::new(vec![2, 2, 1], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::vector(vec![0.0, 0.0]).unwrap();
        let y = conv1d(&x, &w, &b, Padding::Same).unwrap();
        assert_eq!(y.data(), x.data());
    }

    /// Independent formulation: explicitly zero-pad the input, then run a
    /// plain dot product at every position.
    fn conv_oracle(x: &Tensor, w: &Tensor, b: &Tensor, padding: Padding) -> Vec<f64> {
        let (t, cin) = (x.rows(), x.cols());
        let (cout, k) = (w.shape()[0], w.shape()[2]);
        let (pad_l, t_out) = match padding {
            Padding::Same => ((k - 1) / 2, t),
            Padding::Valid => (0, t - k + 1),
        };
        let padded_len = t + k; // generous; out-of-range reads below stay in bounds
        let mut padded = vec![0.0; padded_len * cin];
        for ti in 0..t {
            for ci in 0..cin {
                padded[(ti + pad_l) * cin + ci] = x.at2(ti, ci);
            }
        }
        let mut out = vec![0.0; t_out * cout];
        for to in 0..t_out {
            for co in 0..cout {
                let mut acc = b.data()[co];
                for ci in 0..cin {
                    for kk in 0..k {
                        acc += padded[(to + kk) * cin + ci] * w.data()[(co * cin + ci) * k + kk];
                    }
                }
                out[to * cout + co] = acc;
            }
        }
        out
    }

    #[test]
    fn conv_matches_padded_oracle() {
        use rand::Rng;
        let mut rng = crate::rng::sub_rng(11, "test/conv-oracle");
        for &padding in &[Padding::Same, Padding::Valid] {
            let x = Tensor::from_fn(vec![8, 2], |_| rng.random_range(-1.0..1.0)).unwrap();
            let w = Tensor::from_fn(vec![3, 2, 3], |_| rng.random_range(-1.0..1.0)).unwrap();
            let b = Tensor::from_fn(vec![3], |_| rng.random_range(-1.0..1.0)).unwrap();
            let y = conv1d(&x, &w, &b, padding).unwrap();
            let oracle = conv_oracle(&x, &w, &b, padding);
            assert_eq!(y.numel(), oracle.len());
            for (a, o) in y.data().iter().zip(&oracle) {
                assert!((a - o).abs() < 1e-12, "{a} vs {o}");
            }
        }
    }

    #[test]
    fn conv_shape_errors_name_axis() {
        let x = Tensor::matrix(4, 2, vec![0.0; 8]).unwrap();
        let w = Tensor::new(vec![1, 3, 2], vec![0.0; 6]).unwrap();
        let b = Tensor::vector(vec![0.0]).unwrap();
        let err = conv1d(&x, &w, &b, Padding::Same).unwrap_err();
        assert_eq!(
            err,
            TensorError::Dim {
                op: "conv1d",
                axis: "in_channels",
                expected: 2,
                actual: 3
            }
        );
        // Valid padding with kernel longer than the input.
        let x = t1(&[1.0, 2.0]);
        let w = Tensor::new(vec![1, 1, 3], vec![1.0, 1.0, 1.0]).unwrap();
        let b = Tensor::vector(vec![0.0]).unwrap();
        assert!(conv1d(&x, &w, &b, Padding::Valid).is_err());
    }

    // ── lp_pool ──

    #[test]
    fn lp_pool_hand_cases() {
        // Constant input is a fixed point for any p.
        let y = lp_pool(&t1(&[1.0, 1.0]), 4.0, 2).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-15);
        // [0,2], p=4, window 2: (mean(0, 16))^(1/4) = 8^(1/4).
        let y = lp_pool(&t1(&[0.0, 2.0]), 4.0, 2).unwrap();
        assert!((y.data()[0] - 1.681_792_830_507_429_2).abs() < 1e-14);
        // p=1, window=1 is the identity on non-negative input.
        let x = t1(&[0.5, 2.0, 0.25]);
        let y = lp_pool(&x, 1.0, 1).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn lp_pool_tail_repeats_last_frame() {
        // [1,2,3], window 2: windows {1,2} and {3,3} → p=1 means [1.5, 3].
        let y = lp_pool(&t1(&[1.0, 2.0, 3.0]), 1.0, 2).unwrap();
        assert_eq!(y.shape(), &[2, 1]);
        assert!((y.data()[0] - 1.5).abs() < 1e-15);
        assert!((y.data()[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn lp_pool_rejects_p_below_one() {
        let err = lp_pool(&t1(&[1.0]), 0.5, 1).unwrap_err();
        assert!(matches!(err, TensorError::Param { name: "p", .. }));
    }

    // ── upsample ──

    #[test]
    fn upsample_hand_case() {
        let y = upsample_linear(&t1(&[1.0, 3.0]), 4).unwrap();
        let expect = [1.0, 5.0 / 3.0, 7.0 / 3.0, 3.0];
        for (a, e) in y.data().iter().zip(&expect) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn upsample_identity_and_constant_extension() {
        let x = Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = upsample_linear(&x, 3).unwrap();
        assert_eq!(y.data(), x.data());
        let y = upsample_linear(&t1(&[5.0]), 3).unwrap();
        assert_eq!(y.data(), &[5.0, 5.0, 5.0]);
    }

    #[test]
    fn upsample_preserves_endpoints() {
        use rand::Rng;
        let mut rng = crate::rng::sub_rng(11, "test/upsample-endpoints");
        for t in 1..6usize {
            for target in 1..9usize {
                let x = Tensor::from_fn(vec![t, 2], |_| rng.random_range(-1.0..1.0)).unwrap();
                let y = upsample_linear(&x, target).unwrap();
                assert_eq!(y.rows(), target);
                assert_eq!(y.row(0), x.row(0));
                if target > 1 {
                    assert_eq!(y.row(target - 1), x.row(t - 1));
                }
            }
        }
    }

    // ── recurrent ──

    #[test]
    fn gru_zero_weights_is_zero() {
        let x = Tensor::matrix(4, 3, vec![1.0; 12]).unwrap();
        let w_ih = Tensor::zeros(vec![6, 3]);
        let w_hh = Tensor::zeros(vec![6, 2]);
        let b_ih = Tensor::zeros(vec![6]);
        let b_hh = Tensor::zeros(vec![6]);
        let (h, _) = gru_forward(&x, &w_ih, &w_hh, &b_ih, &b_hh).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_zero_weights_is_zero() {
        let x = Tensor::matrix(4, 3, vec![1.0; 12]).unwrap();
        let w_ih = Tensor::zeros(vec![8, 3]);
        let w_hh = Tensor::zeros(vec![8, 2]);
        let b_ih = Tensor::zeros(vec![8]);
        let b_hh = Tensor::zeros(vec![8]);
        let (h, _) = lstm_forward(&x, &w_ih, &w_hh, &b_ih, &b_hh).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    /// Step-by-step scalar re-derivation of the GRU, written against the
    /// cell equations rather than the batched matvec helpers.
    fn gru_oracle(x: &Tensor, w_ih: &Tensor, w_hh: &Tensor, b_ih: &Tensor, b_hh: &Tensor) -> Vec<f64> {
        let (t, d) = (x.rows(), x.cols());
        let h = w_hh.cols();
        let dot = |m: &Tensor, row: usize, v: &[f64], n: usize| -> f64 {
            (0..n).map(|c| m.at2(row, c) * v[c]).sum()
        };
        let mut out = vec![0.0; t * h];
        let mut hp = vec![0.0; h];
        for ti in 0..t {
            let xt: Vec<f64> = x.row(ti).to_vec();
            let mut hnew = vec![0.0; h];
            for j in 0..h {
                let r = num::sigmoid(
                    dot(w_ih, j, &xt, d) + b_ih.data()[j] + dot(w_hh, j, &hp, h) + b_hh.data()[j],
                );
                let z = num::sigmoid(
                    dot(w_ih, h + j, &xt, d)
                        + b_ih.data()[h + j]
                        + dot(w_hh, h + j, &hp, h)
                        + b_hh.data()[h + j],
                );
                let n = num::tanh(
                    dot(w_ih, 2 * h + j, &xt, d)
                        + b_ih.data()[2 * h + j]
                        + r * (dot(w_hh, 2 * h + j, &hp, h) + b_hh.data()[2 * h + j]),
                );
                hnew[j] = (1.0 - z) * n + z * hp[j];
            }
            out[ti * h..(ti + 1) * h].copy_from_slice(&hnew);
            hp = hnew;
        }
        out
    }

    #[test]
    fn gru_matches_scalar_oracle() {
        use rand::Rng;
        let mut rng = crate::rng::sub_rng(11, "test/gru-oracle");
        let h = 4usize;
        let x = Tensor::from_fn(vec![5, 3], |_| rng.random_range(-1.0..1.0)).unwrap();
        let w_ih = Tensor::from_fn(vec![3 * h, 3], |_| rng.random_range(-1.0..1.0)).unwrap();
        let w_hh = Tensor::from_fn(vec![3 * h, h], |_| rng.random_range(-1.0..1.0)).unwrap();
        let b_ih = Tensor::from_fn(vec![3 * h], |_| rng.random_range(-1.0..1.0)).unwrap();
        let b_hh = Tensor::from_fn(vec![3 * h], |_| rng.random_range(-1.0..1.0)).unwrap();
        let (hs, _) = gru_forward(&x, &w_ih, &w_hh, &b_ih, &b_hh).unwrap();
        let oracle = gru_oracle(&x, &w_ih, &w_hh, &b_ih, &b_hh);
        for (a, o) in hs.data().iter().zip(&oracle) {
            assert!((a - o).abs() < 1e-10, "{a} vs {o}");
        }
    }

    #[test]
    fn recurrent_t1_equals_single_step() {
        use rand::Rng;
        let mut rng = crate::rng::sub_rng(11, "test/gru-t1");
        let h = 3usize;
        let x = Tensor::from_fn(vec![1, 2], |_| rng.random_range(-1.0..1.0)).unwrap();
        let w_ih = Tensor::from_fn(vec![3 * h, 2], |_| rng.random_range(-1.0..1.0)).unwrap();
        let w_hh = Tensor::from_fn(vec![3 * h, h], |_| rng.random_range(-1.0..1.0)).unwrap();
        let b_ih = Tensor::from_fn(vec![3 * h], |_| rng.random_range(-1.0..1.0)).unwrap();
        let b_hh = Tensor::from_fn(vec![3 * h], |_| rng.random_range(-1.0..1.0)).unwrap();
        let (hs, _) = gru_forward(&x, &w_ih, &w_hh, &b_ih, &b_hh).unwrap();
        let oracle = gru_oracle(&x, &w_ih, &w_hh, &b_ih, &b_hh);
        for (a, o) in hs.data().iter().zip(&oracle) {
            assert!((a - o).abs() < 1e-12);
        }
    }

    // ── embedding mean ──

    #[test]
    fn embed_mean_basics() {
        let table =
            Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        // Single index: that row.
        assert_eq!(embed_mean(&table, &[1]).unwrap().data(), &[3.0, 4.0]);
        // Duplicated word equals the single word.
        assert_eq!(
            embed_mean(&table, &[2, 2]).unwrap().data(),
            embed_mean(&table, &[2]).unwrap().data()
        );
        // Three words vs explicit sum/3.
        let m = embed_mean(&table, &[0, 1, 2]).unwrap();
        assert!((m.data()[0] - 3.0).abs() < 1e-12);
        assert!((m.data()[1] - 4.0).abs() < 1e-12);
        // Out-of-vocab index errors.
        assert!(embed_mean(&table, &[3]).is_err());
        assert!(embed_mean(&table, &[]).is_err());
    }

    // ── exp(−L2) ──

    #[test]
    fn exp_neg_l2_hand_cases() {
        let e_p = Tensor::vector(vec![0.5, -0.5]).unwrap();
        // Equal vectors → 1.
        let e_a = Tensor::matrix(1, 2, vec![0.5, -0.5]).unwrap();
        assert_eq!(exp_neg_l2(&e_a, &e_p).unwrap().data(), &[1.0]);
        // Distance 1 → e^{-1}.
        let e_a = Tensor::matrix(1, 2, vec![1.5, -0.5]).unwrap();
        let s = exp_neg_l2(&e_a, &e_p).unwrap();
        assert!((s.data()[0] - num::exp(-1.0)).abs() < 1e-15);
    }

    #[test]
    fn exp_neg_l2_scaling_squares_similarity() {
        let e_p = Tensor::vector(vec![0.3, 0.4]).unwrap();
        let e_a = Tensor::matrix(1, 2, vec![0.9, -0.2]).unwrap();
        let s1 = exp_neg_l2(&e_a, &e_p).unwrap().data()[0];
        let e_p2 = Tensor::vector(vec![0.6, 0.8]).unwrap();
        let e_a2 = Tensor::matrix(1, 2, vec![1.8, -0.4]).unwrap();
        let s2 = exp_neg_l2(&e_a2, &e_p2).unwrap().data()[0];
        assert!((s2 - s1 * s1).abs() < 1e-12);
    }

    #[test]
    fn exp_neg_l2_range() {
        use rand::Rng;
        let mut rng = crate::rng::sub_rng(11, "test/expnegl2-range");
        let e_a = Tensor::from_fn(vec![16, 4], |_| rng.random_range(-3.0..3.0)).unwrap();
        let e_p = Tensor::from_fn(vec![4], |_| rng.random_range(-3.0..3.0)).unwrap();
        let s = exp_neg_l2(&e_a, &e_p).unwrap();
        assert!(s.data().iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    // ── bce ──

    #[test]
    fn bce_hand_cases() {
        // s = 0.5 everywhere → ln 2 for any labels.
        let s = Tensor::vector(vec![0.5; 4]).unwrap();
        let l = bce_mean(&s, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((l.data()[0] - core::f64::consts::LN_2).abs() < 1e-12);
        // Perfect prediction: loss vanishes up to the clamp floor.
        let s = Tensor::vector(vec![1.0, 0.0, 1.0]).unwrap();
        let l = bce_mean(&s, &[1.0, 0.0, 1.0]).unwrap();
        assert!(l.data()[0] >= 0.0 && l.data()[0] < 2e-5);
    }

    #[test]
    fn bce_contract_errors() {
        let s = Tensor::vector(vec![0.5; 3]).unwrap();
        assert!(matches!(
            bce_mean(&s, &[1.0, 0.0]),
            Err(TensorError::Dim { op: "bce_mean", .. })
        ));
        assert!(matches!(
            bce_mean(&s, &[1.0, 0.5, 0.0]),
            Err(TensorError::Param { op: "bce_mean", .. })
        ));
    }

    // ── affine / relu / reductions ──

    #[test]
    fn affine_hand_case() {
        // [1,2]·[[1,0],[0,1]] + [10, 20] = [11, 22].
        let x = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        let w = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::vector(vec![10.0, 20.0]).unwrap();
        let y = affine(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[11.0, 22.0]);
    }

    #[test]
    fn relu_clips_negatives() {
        let x = Tensor::vector(vec![-1.0, 0.0, 2.5]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.5]);
    }

    #[test]
    fn reductions() {
        let x = Tensor::vector(vec![1.0, 2.0]).unwrap();
        assert_eq!(sum(&x).data(), &[3.0]);
        assert_eq!(sum_squares(&x).data(), &[5.0]);
        assert_eq!(weighted_sum(&x, &[2.0, -1.0]).unwrap().data(), &[0.0]);
        assert!(weighted_sum(&x, &[1.0]).is_err());
    }
}
