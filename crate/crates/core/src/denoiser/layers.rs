//! Channel-major (`[channels x length]`) building blocks with hand-written
//! backward passes.

pub(crate) const NORM_EPS: f64 = 1e-5;

/// `c = alpha * a * b + beta * c` on row-major buffers with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the strides describe in-bounds views of `a` (m x k), `b` (k x n)
    // and the row-major `c` (m x n); every caller passes buffers of those sizes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub len: usize,
}

impl ConvShape {
    fn rows(&self) -> usize {
        self.cin * self.kernel
    }
}

/// Unfolds `x` (`cin x len`) into `(cin*kernel) x len` with zero padding so
/// the output keeps the input length.
pub(crate) fn im2col(x: &[f64], s: &ConvShape) -> Vec<f64> {
    let half = (s.kernel / 2) as isize;
    let len = s.len as isize;
    let mut col = vec![0.0; s.rows() * s.len];
    for ci in 0..s.cin {
        let src = &x[ci * s.len..(ci + 1) * s.len];
        for j in 0..s.kernel {
            let shift = (j as isize - half) * s.dilation as isize;
            let dst = &mut col[(ci * s.kernel + j) * s.len..(ci * s.kernel + j + 1) * s.len];
            let lo = (-shift).clamp(0, len) as usize;
            let hi = (len - shift).clamp(0, len) as usize;
            if lo < hi {
                let from = (lo as isize + shift) as usize;
                dst[lo..hi].copy_from_slice(&src[from..from + (hi - lo)]);
            }
        }
    }
    col
}

fn col2im(col: &[f64], s: &ConvShape) -> Vec<f64> {
    let half = (s.kernel / 2) as isize;
    let len = s.len as isize;
    let mut x = vec![0.0; s.cin * s.len];
    for ci in 0..s.cin {
        let dst = &mut x[ci * s.len..(ci + 1) * s.len];
        for j in 0..s.kernel {
            let shift = (j as isize - half) * s.dilation as isize;
            let src = &col[(ci * s.kernel + j) * s.len..(ci * s.kernel + j + 1) * s.len];
            let lo = (-shift).clamp(0, len) as usize;
            let hi = (len - shift).clamp(0, len) as usize;
            if lo < hi {
                let from = (lo as isize + shift) as usize;
                for (d, v) in dst[from..from + (hi - lo)].iter_mut().zip(&src[lo..hi]) {
                    *d += v;
                }
            }
        }
    }
    x
}

/// Returns `(output, unfolded input)`; the unfolded input is kept for the
/// backward pass. Pointwise convs reuse `x` directly.
pub(crate) fn conv_forward(x: &[f64], w: &[f64], b: &[f64], s: &ConvShape) -> (Vec<f64>, Option<Vec<f64>>) {
    let col = (s.kernel > 1).then(|| im2col(x, s));
    let input = col.as_deref().unwrap_or(x);
    let mut out = vec![0.0; s.cout * s.len];
    for (co, row) in out.chunks_mut(s.len).enumerate() {
        row.fill(b[co]);
    }
    let r = s.rows();
    gemm(s.cout, r, s.len, w, (r as isize, 1), input, (s.len as isize, 1), 1.0, &mut out);
    (out, col)
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// `need_input` is set.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    x: &[f64],
    col: Option<&[f64]>,
    w: &[f64],
    dout: &[f64],
    s: &ConvShape,
    dw: &mut [f64],
    db: &mut [f64],
    need_input: bool,
) -> Option<Vec<f64>> {
    let input = col.unwrap_or(x);
    let r = s.rows();
    // dW (cout x r) += dout (cout x len) * input^T (len x r)
    gemm(s.cout, s.len, r, dout, (s.len as isize, 1), input, (1, s.len as isize), 1.0, dw);
    for (co, row) in dout.chunks(s.len).enumerate() {
        db[co] += row.iter().sum::<f64>();
    }
    if !need_input {
        return None;
    }
    // dcol (r x len) = W^T (r x cout) * dout (cout x len)
    let mut dcol = vec![0.0; r * s.len];
    gemm(r, s.cout, s.len, w, (1, r as isize), dout, (s.len as isize, 1), 0.0, &mut dcol);
    Some(if s.kernel > 1 { col2im(&dcol, s) } else { dcol })
}

/// Per-group statistics kept for the backward pass.
pub(crate) struct NormCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub(crate) fn group_norm_forward(
    x: &[f64],
    channels: usize,
    len: usize,
    groups: usize,
    scale: &[f64],
    shift: &[f64],
) -> (Vec<f64>, NormCache) {
    let per = channels / groups;
    let n = (per * len) as f64;
    let mut y = vec![0.0; channels * len];
    let mut xhat = vec![0.0; channels * len];
    let mut inv_std = vec![0.0; groups];
    for g in 0..groups {
        let span = g * per * len..(g + 1) * per * len;
        let seg = &x[span.clone()];
        let mean = seg.iter().sum::<f64>() / n;
        let var = seg.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let istd = 1.0 / (var + NORM_EPS).sqrt();
        inv_std[g] = istd;
        for c in g * per..(g + 1) * per {
            for t in 0..len {
                let k = c * len + t;
                let h = (x[k] - mean) * istd;
                xhat[k] = h;
                y[k] = scale[c] * h + shift[c];
            }
        }
    }
    (y, NormCache { xhat, inv_std })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn group_norm_backward(
    dy: &[f64],
    cache: &NormCache,
    channels: usize,
    len: usize,
    groups: usize,
    scale: &[f64],
    dscale: &mut [f64],
    dshift: &mut [f64],
) -> Vec<f64> {
    let per = channels / groups;
    let n = (per * len) as f64;
    let mut dx = vec![0.0; channels * len];
    for g in 0..groups {
        let (mut sum_d, mut sum_dx) = (0.0, 0.0);
        for c in g * per..(g + 1) * per {
            let row = c * len..(c + 1) * len;
            let (mut ds, mut dsh) = (0.0, 0.0);
            for (d, h) in dy[row.clone()].iter().zip(&cache.xhat[row]) {
                ds += d * h;
                dsh += d;
            }
            dscale[c] += ds;
            dshift[c] += dsh;
            sum_d += scale[c] * dsh;
            sum_dx += scale[c] * ds;
        }
        let istd = cache.inv_std[g];
        for c in g * per..(g + 1) * per {
            for t in 0..len {
                let k = c * len + t;
                let dh = dy[k] * scale[c];
                dx[k] = istd / n * (n * dh - sum_d - cache.xhat[k] * sum_dx);
            }
        }
    }
    dx
}

fn softplus(x: f64) -> f64 {
    if x > 20.0 {
        x
    } else if x < -20.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn mish(x: f64) -> f64 {
    x * softplus(x).tanh()
}

pub fn mish_grad(x: f64) -> f64 {
    let t = softplus(x).tanh();
    let sig = 1.0 / (1.0 + (-x).exp());
    t + x * sig * (1.0 - t * t)
}

/// Sinusoidal features of the diffusion index.
pub(crate) fn timestep_features(i: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let scale = (10_000f64).ln() / (half.max(2) - 1) as f64;
    let mut out = vec![0.0; dim];
    for j in 0..half {
        let arg = i as f64 * (-(j as f64) * scale).exp();
        out[j] = arg.sin();
        out[half + j] = arg.cos();
    }
    out
}
