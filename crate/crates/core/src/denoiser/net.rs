//! Forward and reverse passes of the temporal residual denoiser.
//!
//! Each block is `conv -> group norm -> mish`, plus the block's timestep
//! embedding, then `conv -> group norm -> mish`, with an identity skip around
//! the whole block. Inputs and outputs are `horizon x 6` row-major grids;
//! internally activations are channel-major.

use super::layers::{
    conv_backward, conv_forward, group_norm_backward, group_norm_forward, mish, mish_grad,
    timestep_features, ConvShape, NormCache,
};
use super::params::{Architecture, DenoiserParams};
use crate::diffusion::{Grid, NoiseModel, Prediction, TrainableModel, STATE_DIM, TRANSITION_DIM};
use crate::error::{Error, Result};

struct BlockTape {
    input: Vec<f64>,
    col1: Option<Vec<f64>>,
    norm1: NormCache,
    pre1: Vec<f64>,
    hidden: Vec<f64>,
    col2: Option<Vec<f64>>,
    norm2: NormCache,
    pre2: Vec<f64>,
}

struct Tape {
    len: usize,
    input: Vec<f64>,
    col_in: Option<Vec<f64>>,
    features: Vec<f64>,
    blocks: Vec<BlockTape>,
    last: Vec<f64>,
}

fn to_channel_major(x: &Grid) -> Vec<f64> {
    let (rows, cols) = x.shape();
    let mut out = vec![0.0; rows * cols];
    for t in 0..rows {
        for c in 0..cols {
            out[c * rows + t] = x.get(t, c);
        }
    }
    out
}

/// Channel-major network input: the grid's columns, then (optionally) the
/// first and last rows' states broadcast along the horizon, then (optionally)
/// the relative row position.
fn network_input(x: &Grid, arch: &Architecture) -> Vec<f64> {
    let mut out = to_channel_major(x);
    let rows = x.rows();
    if arch.endpoint_channels {
        for r in [0, rows - 1] {
            for c in 0..STATE_DIM {
                out.extend(std::iter::repeat_n(x.get(r, c), rows));
            }
        }
    }
    if arch.time_channel {
        let span = (rows - 1).max(1) as f64;
        out.extend((0..rows).map(|t| 2.0 * t as f64 / span - 1.0));
    }
    out
}

fn to_row_major(x: &[f64], rows: usize, cols: usize) -> Grid {
    Grid::from_fn(rows, cols, |t, c| x[c * rows + t])
}

impl DenoiserParams {
    fn slice(&self, at: usize, len: usize) -> &[f64] {
        &self.data[at..at + len]
    }

    fn conv_shape(&self, cin: usize, cout: usize, kernel: usize, dilation: usize, len: usize) -> ConvShape {
        ConvShape {
            cin,
            cout,
            kernel,
            dilation,
            len,
        }
    }

    fn run(&self, x: &Grid, i: usize, keep: bool) -> Result<(Grid, Option<Tape>)> {
        if x.cols() != TRANSITION_DIM || x.rows() == 0 {
            return Err(Error::shape(
                format!("L x {TRANSITION_DIM}"),
                format!("{}x{}", x.rows(), x.cols()),
            ));
        }
        let a = &self.arch;
        let (w, k, len) = (a.width, a.kernel_size, x.rows());
        let groups = a.group_count();
        let o = &self.offsets;
        let input = network_input(x, a);
        let cin = a.input_channels();
        let features = timestep_features(i, a.embed_dim);

        let s_in = self.conv_shape(cin, w, k, 1, len);
        let (mut h, col_in) = conv_forward(
            &input,
            self.slice(o.in_w, w * cin * k),
            self.slice(o.in_b, w),
            &s_in,
        );
        let mut blocks = Vec::with_capacity(if keep { a.blocks } else { 0 });
        for (b, bo) in o.blocks.iter().enumerate() {
            let s1 = self.conv_shape(w, w, k, a.dilation(b, 0), len);
            let (c1, col1) = conv_forward(&h, self.slice(bo.conv1_w, w * w * k), self.slice(bo.conv1_b, w), &s1);
            let (n1, norm1) = group_norm_forward(
                &c1,
                w,
                len,
                groups,
                self.slice(bo.norm1_scale, w),
                self.slice(bo.norm1_shift, w),
            );
            let tw = self.slice(bo.time_w, w * a.embed_dim);
            let tb = self.slice(bo.time_b, w);
            let mut hidden = vec![0.0; w * len];
            for c in 0..w {
                let emb = tb[c]
                    + tw[c * a.embed_dim..(c + 1) * a.embed_dim]
                        .iter()
                        .zip(&features)
                        .map(|(p, f)| p * f)
                        .sum::<f64>();
                for t in 0..len {
                    hidden[c * len + t] = mish(n1[c * len + t]) + emb;
                }
            }
            let s2 = self.conv_shape(w, w, k, a.dilation(b, 1), len);
            let (c2, col2) = conv_forward(&hidden, self.slice(bo.conv2_w, w * w * k), self.slice(bo.conv2_b, w), &s2);
            let (n2, norm2) = group_norm_forward(
                &c2,
                w,
                len,
                groups,
                self.slice(bo.norm2_scale, w),
                self.slice(bo.norm2_shift, w),
            );
            let out: Vec<f64> = h.iter().zip(&n2).map(|(r, v)| r + mish(*v)).collect();
            if keep {
                blocks.push(BlockTape {
                    input: std::mem::replace(&mut h, out),
                    col1,
                    norm1,
                    pre1: n1,
                    hidden,
                    col2,
                    norm2,
                    pre2: n2,
                });
            } else {
                h = out;
            }
        }
        let s_out = self.conv_shape(w, TRANSITION_DIM, 1, 1, len);
        let (y, _) = conv_forward(&h, self.slice(o.out_w, TRANSITION_DIM * w), self.slice(o.out_b, TRANSITION_DIM), &s_out);
        let out = to_row_major(&y, len, TRANSITION_DIM);
        let tape = keep.then(|| Tape {
            len,
            input,
            col_in,
            features,
            blocks,
            last: h,
        });
        Ok((out, tape))
    }

    pub fn forward(&self, x: &Grid, i: usize) -> Result<Grid> {
        Ok(self.run(x, i, false)?.0)
    }

    fn backward(&self, tape: &Tape, dout: &Grid) -> Vec<f64> {
        let a = &self.arch;
        let (w, k, len) = (a.width, a.kernel_size, tape.len);
        let groups = a.group_count();
        let o = &self.offsets;
        let mut grad = vec![0.0; self.data.len()];
        let dy = to_channel_major(dout);

        let s_out = self.conv_shape(w, TRANSITION_DIM, 1, 1, len);
        let (dw_out, rest) = grad[o.out_w..].split_at_mut(TRANSITION_DIM * w);
        let mut dh = conv_backward(
            &tape.last,
            None,
            self.slice(o.out_w, TRANSITION_DIM * w),
            &dy,
            &s_out,
            dw_out,
            &mut rest[..TRANSITION_DIM],
            true,
        )
        .expect("input gradient requested");

        for (b, (bo, bt)) in o.blocks.iter().zip(&tape.blocks).enumerate().rev() {
            // out = input + mish(n2)
            let dn2: Vec<f64> = dh.iter().zip(&bt.pre2).map(|(d, v)| d * mish_grad(*v)).collect();
            let dc2 = {
                let (ds, dsh) = two_slices(&mut grad, bo.norm2_scale, bo.norm2_shift, w);
                group_norm_backward(&dn2, &bt.norm2, w, len, groups, self.slice(bo.norm2_scale, w), ds, dsh)
            };
            let s2 = self.conv_shape(w, w, k, a.dilation(b, 1), len);
            let dhidden = {
                let (dw, dbias) = two_slices_sized(&mut grad, bo.conv2_w, w * w * k, bo.conv2_b, w);
                conv_backward(&bt.hidden, bt.col2.as_deref(), self.slice(bo.conv2_w, w * w * k), &dc2, &s2, dw, dbias, true)
                    .expect("input gradient requested")
            };
            // hidden = mish(n1) + W_t f + b_t
            for c in 0..w {
                let de: f64 = dhidden[c * len..(c + 1) * len].iter().sum();
                grad[bo.time_b + c] += de;
                let row = bo.time_w + c * a.embed_dim;
                for (gw, f) in grad[row..row + a.embed_dim].iter_mut().zip(&tape.features) {
                    *gw += de * f;
                }
            }
            let dn1: Vec<f64> = dhidden.iter().zip(&bt.pre1).map(|(d, v)| d * mish_grad(*v)).collect();
            let dc1 = {
                let (ds, dsh) = two_slices(&mut grad, bo.norm1_scale, bo.norm1_shift, w);
                group_norm_backward(&dn1, &bt.norm1, w, len, groups, self.slice(bo.norm1_scale, w), ds, dsh)
            };
            let s1 = self.conv_shape(w, w, k, a.dilation(b, 0), len);
            let dinput = {
                let (dw, dbias) = two_slices_sized(&mut grad, bo.conv1_w, w * w * k, bo.conv1_b, w);
                conv_backward(&bt.input, bt.col1.as_deref(), self.slice(bo.conv1_w, w * w * k), &dc1, &s1, dw, dbias, true)
                    .expect("input gradient requested")
            };
            for (d, extra) in dh.iter_mut().zip(&dinput) {
                *d += extra;
            }
        }

        let cin = a.input_channels();
        let s_in = self.conv_shape(cin, w, k, 1, len);
        let (dw, dbias) = two_slices_sized(&mut grad, o.in_w, w * cin * k, o.in_b, w);
        conv_backward(
            &tape.input,
            tape.col_in.as_deref(),
            self.slice(o.in_w, w * cin * k),
            &dh,
            &s_in,
            dw,
            dbias,
            false,
        );
        grad
    }
}

/// Two disjoint `len`-sized windows of `buf`, the first before the second.
fn two_slices(buf: &mut [f64], a: usize, b: usize, len: usize) -> (&mut [f64], &mut [f64]) {
    two_slices_sized(buf, a, len, b, len)
}

fn two_slices_sized(buf: &mut [f64], a: usize, alen: usize, b: usize, blen: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a + alen <= b);
    let (head, tail) = buf.split_at_mut(b);
    (&mut head[a..a + alen], &mut tail[..blen])
}

impl NoiseModel for DenoiserParams {
    fn predict(&self, x: &Grid, i: usize) -> Result<Grid> {
        self.forward(x, i)
    }

    fn prediction(&self) -> Prediction {
        self.arch.prediction
    }
}

impl TrainableModel for DenoiserParams {
    type Grad = Vec<f64>;

    fn zero_grad(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }

    fn add_grad(into: &mut Vec<f64>, other: &Vec<f64>) {
        for (a, b) in into.iter_mut().zip(other) {
            *a += b;
        }
    }

    fn forward_backward(&self, x: &Grid, i: usize, upstream: &dyn Fn(&Grid) -> Grid) -> Result<(Grid, Vec<f64>)> {
        let (out, tape) = self.run(x, i, true)?;
        let tape = tape.expect("tape requested");
        let dout = upstream(&out);
        out.check_same_shape(&dout)?;
        let grad = self.backward(&tape, &dout);
        Ok((out, grad))
    }
}
