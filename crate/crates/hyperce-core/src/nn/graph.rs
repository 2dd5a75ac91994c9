//! Computation graph with reverse-mode differentiation.
//!
//! A [`Graph`] owns every tensor produced during one forward pass. Leaf
//! tensors enter via [`Graph::leaf`]; operations are methods that compute
//! the output immediately and, when any input has `requires_grad`, record
//! themselves on a tape. [`Graph::backward`] walks the tape once in reverse
//! execution order — a valid topological order because operations only ever
//! consume previously created tensors — accumulating gradients into every
//! tracked tensor.
//!
//! Tensors are immutable once inside the graph; a training step therefore
//! builds a fresh graph per forward/backward pass and reads parameter
//! gradients out at the end. When nothing requires gradients, no tape entry
//! and no gradient buffer is ever allocated.

use crate::{Error, Result};

use super::kernels::{col2im_3x3_acc, im2col_3x3, matmul_abt_acc, matmul_acc, matmul_atb_acc};
use super::tensor::{lit, Scalar, Tensor};

/// Handle to a tensor stored in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(pub(crate) usize);

/// One recorded operation: the produced tensor plus what backward needs.
struct Recorded<T: Scalar> {
    output: TensorId,
    op: OpKind<T>,
}

/// Backward dispatch data per operation.
enum OpKind<T: Scalar> {
    Conv2d {
        input: TensorId,
        weight: TensorId,
        bias: TensorId,
    },
    ConvTranspose2d {
        input: TensorId,
        weight: TensorId,
        bias: TensorId,
    },
    MaxPool2 {
        input: TensorId,
        /// Flat input index that won each output element (first on ties).
        argmax: Vec<usize>,
    },
    FullyConnected {
        input: TensorId,
        weight: TensorId,
        bias: TensorId,
    },
    Relu {
        input: TensorId,
    },
    Sigmoid {
        input: TensorId,
    },
    GlobalAvgPool {
        input: TensorId,
    },
    ConcatChannels {
        a: TensorId,
        b: TensorId,
    },
    ScaleChannels {
        input: TensorId,
        scale: TensorId,
    },
    ChannelDropout {
        input: TensorId,
        /// Multiplier per (batch, channel): 0 for dropped, 1/(1-p) for kept.
        mult: Vec<T>,
    },
    MseLoss {
        pred: TensorId,
        target: TensorId,
    },
    Add {
        a: TensorId,
        b: TensorId,
    },
    Reshape {
        input: TensorId,
    },
    SliceFlat {
        input: TensorId,
        start: usize,
    },
}

/// SplitMix64 finalizer; drives the counter-based dropout mask generator.
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic uniform value in [0, 1) for a (seed, counter) pair.
fn unit_uniform(seed: u64, counter: u64) -> f64 {
    let z = splitmix64(seed ^ splitmix64(counter));
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// An arena of tensors plus the tape of recorded operations.
pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Tensor<T>>,
    tape: Vec<Recorded<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    /// An empty graph.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            tape: Vec::new(),
        }
    }

    /// Insert a leaf tensor (input or parameter) and return its handle.
    pub fn leaf(&mut self, t: Tensor<T>) -> TensorId {
        self.nodes.push(t);
        TensorId(self.nodes.len() - 1)
    }

    /// The tensor behind a handle.
    pub fn tensor(&self, id: TensorId) -> &Tensor<T> {
        &self.nodes[id.0]
    }

    /// Shortcut for the data slice behind a handle.
    pub fn data(&self, id: TensorId) -> &[T] {
        self.nodes[id.0].data()
    }

    /// Accumulated gradient of a tensor, if any.
    pub fn grad(&self, id: TensorId) -> Option<&[T]> {
        self.nodes[id.0].grad()
    }

    /// Remove and return the gradient of a tensor (for optimizer handoff).
    pub fn take_grad(&mut self, id: TensorId) -> Option<Vec<T>> {
        self.nodes[id.0].take_grad()
    }

    /// Number of recorded operations on the tape.
    pub fn tape_len(&self) -> usize {
        self.tape.len()
    }

    /// Whether any stored tensor currently holds gradient storage.
    pub fn any_grad_allocated(&self) -> bool {
        self.nodes.iter().any(|n| n.grad().is_some())
    }

    fn any_requires_grad(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad())
    }

    /// Store an op output, recording it on the tape when tracked.
    fn push_output(
        &mut self,
        shape: Vec<usize>,
        data: Vec<T>,
        inputs: &[TensorId],
        op: impl FnOnce() -> OpKind<T>,
    ) -> TensorId {
        let tracked = self.any_requires_grad(inputs);
        let mut t = Tensor::from_vec(shape, data).expect("op output shape is consistent");
        if tracked {
            t = t.with_requires_grad();
        }
        let id = self.leaf(t);
        if tracked {
            self.tape.push(Recorded { output: id, op: op() });
        }
        id
    }

    fn accumulate(&mut self, id: TensorId, delta: &[T]) {
        let node = &mut self.nodes[id.0];
        if !node.requires_grad() {
            return;
        }
        for (g, d) in node.grad_mut_or_init().iter_mut().zip(delta) {
            *g = *g + *d;
        }
    }

    // -----------------------------------------------------------------------
    // Convolutions
    // -----------------------------------------------------------------------

    /// 3×3 cross-correlation with zero padding 1 and stride 1.
    ///
    /// `input` is `[B, Cin, H, W]`, `weight` is `[Cout, Cin, 3, 3]`, `bias`
    /// is `[Cout]`; the output is `[B, Cout, H, W]`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::ShapeMismatch`] for inconsistent shapes.
    pub fn conv2d(&mut self, input: TensorId, weight: TensorId, bias: TensorId) -> Result<TensorId> {
        let (bs, cin, h, w) = self.tensor(input).dims4()?;
        let wshape = self.tensor(weight).shape().to_vec();
        let (cout, wcin) = match wshape[..] {
            [co, ci, 3, 3] => (co, ci),
            _ => {
                return Err(Error::ShapeMismatch(format!(
                    "conv2d weight must be [Cout, Cin, 3, 3], got {wshape:?}"
                )))
            }
        };
        if wcin != cin {
            return Err(Error::ShapeMismatch(format!(
                "conv2d input has {cin} channels but weight expects {wcin}"
            )));
        }
        if self.tensor(bias).shape() != [cout] {
            return Err(Error::ShapeMismatch(format!(
                "conv2d bias must be [{cout}], got {:?}",
                self.tensor(bias).shape()
            )));
        }

        // Lowered to matmul over an im2col buffer: the flattened weight is
        // already the [Cout, Cin·9] matrix, so out_b = W · cols_b + bias.
        let x = self.data(input);
        let k = self.data(weight);
        let b = self.data(bias);
        let hw = h * w;
        let kdim = cin * 9;
        let mut out = vec![T::zero(); bs * cout * hw];
        let mut cols = vec![T::zero(); kdim * hw];
        for bi in 0..bs {
            im2col_3x3(&x[bi * cin * hw..(bi + 1) * cin * hw], cin, h, w, &mut cols);
            let out_b = &mut out[bi * cout * hw..(bi + 1) * cout * hw];
            for co in 0..cout {
                for v in out_b[co * hw..(co + 1) * hw].iter_mut() {
                    *v = b[co];
                }
            }
            matmul_acc(out_b, k, &cols, cout, kdim, hw);
        }
        Ok(self.push_output(vec![bs, cout, h, w], out, &[input, weight, bias], || {
            OpKind::Conv2d { input, weight, bias }
        }))
    }

    fn backward_conv2d(&mut self, input: TensorId, weight: TensorId, bias: TensorId, gout: &[T]) {
        let (bs, cin, h, w) = self.tensor(input).dims4().expect("validated in forward");
        let cout = self.tensor(bias).len();
        let hw = h * w;
        let kdim = cin * 9;
        let (d_in, d_w, d_b) = {
            let x = self.data(input);
            let k = self.data(weight);
            let mut d_in = vec![T::zero(); x.len()];
            let mut d_w = vec![T::zero(); k.len()];
            let mut d_b = vec![T::zero(); cout];
            let mut cols = vec![T::zero(); kdim * hw];
            let mut d_cols = vec![T::zero(); kdim * hw];
            for bi in 0..bs {
                let g_b = &gout[bi * cout * hw..(bi + 1) * cout * hw];
                for co in 0..cout {
                    for g in &g_b[co * hw..(co + 1) * hw] {
                        d_b[co] = d_b[co] + *g;
                    }
                }
                // dW += g_b · cols_bᵀ and d_cols = Wᵀ · g_b, folded back
                // onto the image by the im2col adjoint.
                im2col_3x3(&x[bi * cin * hw..(bi + 1) * cin * hw], cin, h, w, &mut cols);
                matmul_abt_acc(&mut d_w, g_b, &cols, cout, hw, kdim);
                for v in d_cols.iter_mut() {
                    *v = T::zero();
                }
                matmul_atb_acc(&mut d_cols, k, g_b, cout, kdim, hw);
                col2im_3x3_acc(&d_cols, cin, h, w, &mut d_in[bi * cin * hw..(bi + 1) * cin * hw]);
            }
            (d_in, d_w, d_b)
        };
        self.accumulate(input, &d_in);
        self.accumulate(weight, &d_w);
        self.accumulate(bias, &d_b);
    }

    /// Transposed convolution with 2×2 kernel and stride 2; doubles the
    /// spatial dimensions.
    ///
    /// `input` is `[B, Cin, H, W]`, `weight` is `[Cin, Cout, 2, 2]`, `bias`
    /// is `[Cout]`; the output is `[B, Cout, 2H, 2W]`. Each input element
    /// paints a 2×2 output block, exactly transposing a stride-2 kernel-2
    /// convolution.
    ///
    /// # Errors
    ///
    /// Returns [`Error::ShapeMismatch`] for inconsistent shapes.
    pub fn conv_transpose2d(
        &mut self,
        input: TensorId,
        weight: TensorId,
        bias: TensorId,
    ) -> Result<TensorId> {
        let (bs, cin, h, w) = self.tensor(input).dims4()?;
        let wshape = self.tensor(weight).shape().to_vec();
        let (wcin, cout) = match wshape[..] {
            [ci, co, 2, 2] => (ci, co),
            _ => {
                return Err(Error::ShapeMismatch(format!(
                    "conv_transpose2d weight must be [Cin, Cout, 2, 2], got {wshape:?}"
                )))
            }
        };
        if wcin != cin {
            return Err(Error::ShapeMismatch(format!(
                "conv_transpose2d input has {cin} channels but weight expects {wcin}"
            )));
        }
        if self.tensor(bias).shape() != [cout] {
            return Err(Error::ShapeMismatch(format!(
                "conv_transpose2d bias must be [{cout}], got {:?}",
                self.tensor(bias).shape()
            )));
        }

        let (oh, ow) = (2 * h, 2 * w);
        let x = self.data(input);
        let k = self.data(weight);
        let b = self.data(bias);
        let mut out = vec![T::zero(); bs * cout * oh * ow];
        for bi in 0..bs {
            for co in 0..cout {
                let out_base = (bi * cout + co) * oh * ow;
                for v in out[out_base..out_base + oh * ow].iter_mut() {
                    *v = b[co];
                }
                for ci in 0..cin {
                    let in_base = (bi * cin + ci) * h * w;
                    let k_base = (ci * cout + co) * 4;
                    for i in 0..h {
                        for j in 0..w {
                            let xv = x[in_base + i * w + j];
                            for di in 0..2usize {
                                for dj in 0..2usize {
                                    let oi = out_base + (2 * i + di) * ow + (2 * j + dj);
                                    out[oi] = out[oi] + xv * k[k_base + di * 2 + dj];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(self.push_output(vec![bs, cout, oh, ow], out, &[input, weight, bias], || {
            OpKind::ConvTranspose2d { input, weight, bias }
        }))
    }

    fn backward_conv_transpose2d(
        &mut self,
        input: TensorId,
        weight: TensorId,
        bias: TensorId,
        gout: &[T],
    ) {
        let (bs, cin, h, w) = self.tensor(input).dims4().expect("validated in forward");
        let cout = self.tensor(bias).len();
        let (oh, ow) = (2 * h, 2 * w);
        let (d_in, d_w, d_b) = {
            let x = self.data(input);
            let k = self.data(weight);
            let mut d_in = vec![T::zero(); x.len()];
            let mut d_w = vec![T::zero(); k.len()];
            let mut d_b = vec![T::zero(); cout];
            for bi in 0..bs {
                for co in 0..cout {
                    let out_base = (bi * cout + co) * oh * ow;
                    for g in &gout[out_base..out_base + oh * ow] {
                        d_b[co] = d_b[co] + *g;
                    }
                    for ci in 0..cin {
                        let in_base = (bi * cin + ci) * h * w;
                        let k_base = (ci * cout + co) * 4;
                        for i in 0..h {
                            for j in 0..w {
                                let xi = in_base + i * w + j;
                                for di in 0..2usize {
                                    for dj in 0..2usize {
                                        let g = gout[out_base + (2 * i + di) * ow + (2 * j + dj)];
                                        let ki = k_base + di * 2 + dj;
                                        d_in[xi] = d_in[xi] + g * k[ki];
                                        d_w[ki] = d_w[ki] + g * x[xi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            (d_in, d_w, d_b)
        };
        self.accumulate(input, &d_in);
        self.accumulate(weight, &d_w);
        self.accumulate(bias, &d_b);
    }

    // -----------------------------------------------------------------------
    // Pooling
    // -----------------------------------------------------------------------

    /// 2×2 non-overlapping max pooling; halves both spatial dimensions.
    ///
    /// Backward routes the gradient to the element that achieved the
    /// maximum, taking the first in row-major window order on ties.
    ///
    /// # Errors
    ///
    /// Returns [`Error::ShapeMismatch`] unless the input is 4-D with even
    /// height and width.
    pub fn maxpool2(&mut self, input: TensorId) -> Result<TensorId> {
        let (bs, c, h, w) = self.tensor(input).dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::ShapeMismatch(format!(
                "maxpool2 needs even spatial dims, got {h}x{w}"
            )));
        }
        let (oh, ow) = (h / 2, w / 2);
        let x = self.data(input);
        let mut out = vec![T::zero(); bs * c * oh * ow];
        let mut argmax = vec![0usize; out.len()];
        for bc in 0..bs * c {
            let in_base = bc * h * w;
            let out_base = bc * oh * ow;
            for i in 0..oh {
                for j in 0..ow {
                    let mut best_idx = in_base + (2 * i) * w + 2 * j;
                    let mut best = x[best_idx];
                    for di in 0..2usize {
                        for dj in 0..2usize {
                            let idx = in_base + (2 * i + di) * w + (2 * j + dj);
                            // Strict comparison keeps the first index on ties.
                            if x[idx] > best {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out[out_base + i * ow + j] = best;
                    argmax[out_base + i * ow + j] = best_idx;
                }
            }
        }
        Ok(self.push_output(vec![bs, c, oh, ow], out, &[input], move || OpKind::MaxPool2 {
            input,
            argmax,
        }))
    }

    fn backward_maxpool2(&mut self, input: TensorId, argmax: &[usize], gout: &[T]) {
        let mut d_in = vec![T::zero(); self.tensor(input).len()];
        for (g, &src) in gout.iter().zip(argmax) {
            d_in[src] = d_in[src] + *g;
        }
        self.accumulate(input, &d_in);
    }

    // -----------------------------------------------------------------------
    // Dense layers and activations
    // -----------------------------------------------------------------------

    /// Affine map over the last dimension: `out = input · weightᵀ + bias`.
    ///
    /// `input` is `[..., Din]` (leading dimensions are batch-like), `weight`
    /// is `[Dout, Din]`, `bias` is `[Dout]`; the output keeps the leading
    /// dimensions and replaces the last with `Dout`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::ShapeMismatch`] for inconsistent shapes.
    pub fn fully_connected(
        &mut self,
        input: TensorId,
        weight: TensorId,
        bias: TensorId,
    ) -> Result<TensorId> {
        let in_shape = self.tensor(input).shape().to_vec();
        let din = *in_shape.last().expect("tensor shapes are non-empty");
        let (dout, wdin) = self.tensor(weight).dims2()?;
        if wdin != din {
            return Err(Error::ShapeMismatch(format!(
                "fully_connected input dim {din} does not match weight {:?}",
                self.tensor(weight).shape()
            )));
        }
        if self.tensor(bias).shape() != [dout] {
            return Err(Error::ShapeMismatch(format!(
                "fully_connected bias must be [{dout}], got {:?}",
                self.tensor(bias).shape()
            )));
        }
        let rows = self.tensor(input).len() / din;
        let x = self.data(input);
        let wm = self.data(weight);
        let b = self.data(bias);
        let mut out = vec![T::zero(); rows * dout];
        for r in 0..rows {
            for o in 0..dout {
                let mut acc = b[o];
                for d in 0..din {
                    acc = acc + x[r * din + d] * wm[o * din + d];
                }
                out[r * dout + o] = acc;
            }
        }
        let mut out_shape = in_shape;
        *out_shape.last_mut().expect("non-empty") = dout;
        Ok(self.push_output(out_shape, out, &[input, weight, bias], || {
            OpKind::FullyConnected { input, weight, bias }
        }))
    }

    fn backward_fully_connected(
        &mut self,
        input: TensorId,
        weight: TensorId,
        bias: TensorId,
        gout: &[T],
    ) {
        let (dout, din) = self.tensor(weight).dims2().expect("validated in forward");
        let rows = self.tensor(input).len() / din;
        let (d_in, d_w, d_b) = {
            let x = self.data(input);
            let wm = self.data(weight);
            let mut d_in = vec![T::zero(); x.len()];
            let mut d_w = vec![T::zero(); wm.len()];
            let mut d_b = vec![T::zero(); dout];
            for r in 0..rows {
                for o in 0..dout {
                    let g = gout[r * dout + o];
                    d_b[o] = d_b[o] + g;
                    for d in 0..din {
                        d_in[r * din + d] = d_in[r * din + d] + g * wm[o * din + d];
                        d_w[o * din + d] = d_w[o * din + d] + g * x[r * din + d];
                    }
                }
            }
            (d_in, d_w, d_b)
        };
        self.accumulate(input, &d_in);
        self.accumulate(weight, &d_w);
        self.accumulate(bias, &d_b);
    }

    /// Elementwise rectified linear unit `max(x, 0)`.
    pub fn relu(&mut self, input: TensorId) -> TensorId {
        let out: Vec<T> = self
            .data(input)
            .iter()
            .map(|&v| if v > T::zero() { v } else { T::zero() })
            .collect();
        let shape = self.tensor(input).shape().to_vec();
        self.push_output(shape, out, &[input], || OpKind::Relu { input })
    }

    /// Elementwise logistic sigmoid `1 / (1 + e^{-x})`.
    pub fn sigmoid(&mut self, input: TensorId) -> TensorId {
        let one = T::one();
        let out: Vec<T> = self
            .data(input)
            .iter()
            .map(|&v| one / (one + (-v).exp()))
            .collect();
        let shape = self.tensor(input).shape().to_vec();
        self.push_output(shape, out, &[input], || OpKind::Sigmoid { input })
    }

    // -----------------------------------------------------------------------
    // Channel operations
    // -----------------------------------------------------------------------

    /// Mean over the spatial dimensions: `[B, C, H, W] → [B, C]`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::ShapeMismatch`] unless the input is 4-D.
    pub fn global_avg_pool(&mut self, input: TensorId) -> Result<TensorId> {
        let (bs, c, h, w) = self.tensor(input).dims4()?;
        let x = self.data(input);
        let inv = lit::<T>(1.0 / (h * w) as f64);
        let mut out = vec![T::zero(); bs * c];
        for bc in 0..bs * c {
            let mut acc = T::zero();
            for v in &x[bc * h * w..(bc + 1) * h * w] {
                acc = acc + *v;
            }
            out[bc] = acc * inv;
        }
        Ok(self.push_output(vec![bs, c], out, &[input], || OpKind::GlobalAvgPool { input }))
    }

    /// Concatenate along the channel dimension:
    /// `[B, C1, H, W] ⊕ [B, C2, H, W] → [B, C1+C2, H, W]`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::ShapeMismatch`] if batch or spatial dims differ.
    pub fn concat_channels(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (ba, ca, ha, wa) = self.tensor(a).dims4()?;
        let (bb, cb, hb, wb) = self.tensor(b).dims4()?;
        if (ba, ha, wa) != (bb, hb, wb) {
            return Err(Error::ShapeMismatch(format!(
                "concat_channels needs matching batch and spatial dims, got {:?} and {:?}",
                self.tensor(a).shape(),
                self.tensor(b).shape()
            )));
        }
        let (xa, xb) = (self.data(a), self.data(b));
        let hw = ha * wa;
        let mut out = vec![T::zero(); ba * (ca + cb) * hw];
        for bi in 0..ba {
            let out_base = bi * (ca + cb) * hw;
            out[out_base..out_base + ca * hw]
                .copy_from_slice(&xa[bi * ca * hw..(bi + 1) * ca * hw]);
            out[out_base + ca * hw..out_base + (ca + cb) * hw]
                .copy_from_slice(&xb[bi * cb * hw..(bi + 1) * cb * hw]);
        }
        Ok(self.push_output(vec![ba, ca + cb, ha, wa], out, &[a, b], || {
            OpKind::ConcatChannels { a, b }
        }))
    }

    fn backward_concat_channels(&mut self, a: TensorId, b: TensorId, gout: &[T]) {
        let (ba, ca, ha, wa) = self.tensor(a).dims4().expect("validated in forward");
        let cb = self.tensor(b).dims4().expect("validated in forward").1;
        let hw = ha * wa;
        let mut d_a = vec![T::zero(); ba * ca * hw];
        let mut d_b = vec![T::zero(); ba * cb * hw];
        for bi in 0..ba {
            let out_base = bi * (ca + cb) * hw;
            d_a[bi * ca * hw..(bi + 1) * ca * hw]
                .copy_from_slice(&gout[out_base..out_base + ca * hw]);
            d_b[bi * cb * hw..(bi + 1) * cb * hw]
                .copy_from_slice(&gout[out_base + ca * hw..out_base + (ca + cb) * hw]);
        }
        self.accumulate(a, &d_a);
        self.accumulate(b, &d_b);
    }

    /// Scale every channel plane by a per-(batch, channel) factor:
    /// `out[b,c,i,j] = x[b,c,i,j] · s[b,c]`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::ShapeMismatch`] unless `x` is `[B, C, H, W]` and `s`
    /// is `[B, C]`.
    pub fn scale_channels(&mut self, input: TensorId, scale: TensorId) -> Result<TensorId> {
        let (bs, c, h, w) = self.tensor(input).dims4()?;
        let (sb, sc) = self.tensor(scale).dims2()?;
        if (sb, sc) != (bs, c) {
            return Err(Error::ShapeMismatch(format!(
                "scale_channels needs scale [{bs}, {c}], got {:?}",
                self.tensor(scale).shape()
            )));
        }
        let x = self.data(input);
        let s = self.data(scale);
        let hw = h * w;
        let mut out = vec![T::zero(); x.len()];
        for bc in 0..bs * c {
            let sv = s[bc];
            for (o, v) in out[bc * hw..(bc + 1) * hw]
                .iter_mut()
                .zip(&x[bc * hw..(bc + 1) * hw])
            {
                *o = *v * sv;
            }
        }
        Ok(self.push_output(vec![bs, c, h, w], out, &[input, scale], || {
            OpKind::ScaleChannels { input, scale }
        }))
    }

    fn backward_scale_channels(&mut self, input: TensorId, scale: TensorId, gout: &[T]) {
        let (bs, c, h, w) = self.tensor(input).dims4().expect("validated in forward");
        let hw = h * w;
        let (d_in, d_s) = {
            let x = self.data(input);
            let s = self.data(scale);
            let mut d_in = vec![T::zero(); x.len()];
            let mut d_s = vec![T::zero(); bs * c];
            for bc in 0..bs * c {
                let sv = s[bc];
                let mut acc = T::zero();
                for idx in bc * hw..(bc + 1) * hw {
                    d_in[idx] = gout[idx] * sv;
                    acc = acc + gout[idx] * x[idx];
                }
                d_s[bc] = acc;
            }
            (d_in, d_s)
        };
        self.accumulate(input, &d_in);
        self.accumulate(scale, &d_s);
    }

    /// Channel dropout: zero whole channel planes with probability `p` and
    /// scale survivors by `1/(1-p)` when training; identity otherwise.
    ///
    /// The mask is drawn from a counter-based generator keyed by `seed` and
    /// the (batch, channel) index, so identical seeds reproduce identical
    /// masks bit-for-bit.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidConfig`] unless `p ∈ [0, 1)`, and
    /// [`Error::ShapeMismatch`] for non-4-D input.
    pub fn channel_dropout(
        &mut self,
        input: TensorId,
        p: f64,
        training: bool,
        seed: u64,
    ) -> Result<TensorId> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidConfig(format!(
                "dropout probability must be in [0, 1), got {p}"
            )));
        }
        let (bs, c, h, w) = self.tensor(input).dims4()?;
        let keep = lit::<T>(1.0 / (1.0 - p));
        let mult: Vec<T> = (0..bs * c)
            .map(|bc| {
                if !training {
                    T::one()
                } else if unit_uniform(seed, bc as u64) < p {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let x = self.data(input);
        let hw = h * w;
        let mut out = vec![T::zero(); x.len()];
        for bc in 0..bs * c {
            let m = mult[bc];
            for (o, v) in out[bc * hw..(bc + 1) * hw]
                .iter_mut()
                .zip(&x[bc * hw..(bc + 1) * hw])
            {
                *o = *v * m;
            }
        }
        Ok(self.push_output(vec![bs, c, h, w], out, &[input], move || {
            OpKind::ChannelDropout { input, mult }
        }))
    }

    fn backward_channel_dropout(&mut self, input: TensorId, mult: &[T], gout: &[T]) {
        let (_, _, h, w) = self.tensor(input).dims4().expect("validated in forward");
        let hw = h * w;
        let mut d_in = vec![T::zero(); self.tensor(input).len()];
        for (bc, &m) in mult.iter().enumerate() {
            for idx in bc * hw..(bc + 1) * hw {
                d_in[idx] = gout[idx] * m;
            }
        }
        self.accumulate(input, &d_in);
    }

    // -----------------------------------------------------------------------
    // Loss and shape plumbing
    // -----------------------------------------------------------------------

    /// Mean squared error: sum of squared differences divided by the batch
    /// size (the leading dimension of `pred`). Output is a scalar tensor.
    ///
    /// The sum is accumulated in f64 so the loss value (and gradient checks
    /// against it) are not limited by accumulation order at 32-bit.
    ///
    /// # Errors
    ///
    /// Returns [`Error::ShapeMismatch`] if the shapes differ.
    pub fn mse_loss(&mut self, pred: TensorId, target: TensorId) -> Result<TensorId> {
        if self.tensor(pred).shape() != self.tensor(target).shape() {
            return Err(Error::ShapeMismatch(format!(
                "mse_loss shapes differ: {:?} vs {:?}",
                self.tensor(pred).shape(),
                self.tensor(target).shape()
            )));
        }
        let batch = self.tensor(pred).shape()[0];
        let p = self.data(pred);
        let t = self.data(target);
        let mut acc = 0.0f64;
        for (a, b) in p.iter().zip(t) {
            let d = a.to_f64().expect("finite") - b.to_f64().expect("finite");
            acc += d * d;
        }
        let loss = lit::<T>(acc / batch as f64);
        Ok(self.push_output(vec![1], vec![loss], &[pred, target], || OpKind::MseLoss {
            pred,
            target,
        }))
    }

    fn backward_mse_loss(&mut self, pred: TensorId, target: TensorId, gout: &[T]) {
        let batch = self.tensor(pred).shape()[0];
        let scale = lit::<T>(2.0 / batch as f64) * gout[0];
        let d_pred: Vec<T> = {
            let p = self.data(pred);
            let t = self.data(target);
            p.iter().zip(t).map(|(&a, &b)| (a - b) * scale).collect()
        };
        let d_target: Vec<T> = d_pred.iter().map(|&v| -v).collect();
        self.accumulate(pred, &d_pred);
        self.accumulate(target, &d_target);
    }

    /// Elementwise sum of two tensors with identical shapes (used for
    /// residual connections).
    ///
    /// # Errors
    ///
    /// Returns [`Error::ShapeMismatch`] if the shapes differ.
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.tensor(a).shape() != self.tensor(b).shape() {
            return Err(Error::ShapeMismatch(format!(
                "add shapes differ: {:?} vs {:?}",
                self.tensor(a).shape(),
                self.tensor(b).shape()
            )));
        }
        let out: Vec<T> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.tensor(a).shape().to_vec();
        Ok(self.push_output(shape, out, &[a, b], || OpKind::Add { a, b }))
    }

    /// Reinterpret a tensor under a new shape with the same element count.
    ///
    /// # Errors
    ///
    /// Returns [`Error::ShapeMismatch`] if the element counts differ.
    pub fn reshape(&mut self, input: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        let len: usize = shape.iter().product();
        if len != self.tensor(input).len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {} elements into {shape:?}",
                self.tensor(input).len()
            )));
        }
        let data = self.data(input).to_vec();
        Ok(self.push_output(shape, data, &[input], || OpKind::Reshape { input }))
    }

    /// Take a contiguous range `[start, start+len)` of the flattened tensor
    /// as a 1-D tensor.
    ///
    /// # Errors
    ///
    /// Returns [`Error::ShapeMismatch`] if the range exceeds the tensor.
    pub fn slice_flat(&mut self, input: TensorId, start: usize, len: usize) -> Result<TensorId> {
        if len == 0 || start + len > self.tensor(input).len() {
            return Err(Error::ShapeMismatch(format!(
                "slice [{start}, {}) exceeds {} elements",
                start + len,
                self.tensor(input).len()
            )));
        }
        let data = self.data(input)[start..start + len].to_vec();
        Ok(self.push_output(vec![len], data, &[input], || OpKind::SliceFlat { input, start }))
    }

    // -----------------------------------------------------------------------
    // Backward pass
    // -----------------------------------------------------------------------

    /// Run reverse-mode differentiation from a scalar output, seeding its
    /// gradient with 1.
    ///
    /// # Errors
    ///
    /// Returns [`Error::ShapeMismatch`] if `output` is not a single-element
    /// tensor.
    pub fn backward(&mut self, output: TensorId) -> Result<()> {
        self.backward_seeded(output, T::one())
    }

    /// Run reverse-mode differentiation with an explicit seed gradient
    /// (useful for averaging losses across separately built graphs).
    ///
    /// Visits each recorded operation exactly once, in reverse execution
    /// order. A no-op when the output is untracked. Call once per graph;
    /// repeated calls would double-accumulate gradients.
    ///
    /// # Errors
    ///
    /// Returns [`Error::ShapeMismatch`] if `output` is not a single-element
    /// tensor.
    pub fn backward_seeded(&mut self, output: TensorId, seed: T) -> Result<()> {
        if self.tensor(output).len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "backward needs a scalar output, got shape {:?}",
                self.tensor(output).shape()
            )));
        }
        if !self.nodes[output.0].requires_grad() {
            return Ok(());
        }
        self.nodes[output.0].grad_mut_or_init()[0] = seed;
        let tape = std::mem::take(&mut self.tape);
        for rec in tape.iter().rev() {
            let Some(gout) = self.nodes[rec.output.0].grad().map(<[T]>::to_vec) else {
                // The output never influenced the differentiation target.
                continue;
            };
            match &rec.op {
                OpKind::Conv2d { input, weight, bias } => {
                    self.backward_conv2d(*input, *weight, *bias, &gout)
                }
                OpKind::ConvTranspose2d { input, weight, bias } => {
                    self.backward_conv_transpose2d(*input, *weight, *bias, &gout)
                }
                OpKind::MaxPool2 { input, argmax } => {
                    self.backward_maxpool2(*input, argmax, &gout)
                }
                OpKind::FullyConnected { input, weight, bias } => {
                    self.backward_fully_connected(*input, *weight, *bias, &gout)
                }
                OpKind::Relu { input } => {
                    let d_in: Vec<T> = {
                        let x = self.data(*input);
                        x.iter()
                            .zip(&gout)
                            .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
                            .collect()
                    };
                    self.accumulate(*input, &d_in);
                }
                OpKind::Sigmoid { input } => {
                    let d_in: Vec<T> = {
                        let y = self.data(rec.output);
                        y.iter()
                            .zip(&gout)
                            .map(|(&yv, &g)| g * yv * (T::one() - yv))
                            .collect()
                    };
                    self.accumulate(*input, &d_in);
                }
                OpKind::GlobalAvgPool { input } => {
                    let (_, _, h, w) = self.tensor(*input).dims4().expect("validated");
                    let inv = lit::<T>(1.0 / (h * w) as f64);
                    let mut d_in = vec![T::zero(); self.tensor(*input).len()];
                    for (bc, &g) in gout.iter().enumerate() {
                        let gv = g * inv;
                        for v in d_in[bc * h * w..(bc + 1) * h * w].iter_mut() {
                            *v = gv;
                        }
                    }
                    self.accumulate(*input, &d_in);
                }
                OpKind::ConcatChannels { a, b } => self.backward_concat_channels(*a, *b, &gout),
                OpKind::ScaleChannels { input, scale } => {
                    self.backward_scale_channels(*input, *scale, &gout)
                }
                OpKind::ChannelDropout { input, mult } => {
                    self.backward_channel_dropout(*input, mult, &gout)
                }
                OpKind::MseLoss { pred, target } => {
                    self.backward_mse_loss(*pred, *target, &gout)
                }
                OpKind::Add { a, b } => {
                    self.accumulate(*a, &gout);
                    self.accumulate(*b, &gout);
                }
                OpKind::Reshape { input } => self.accumulate(*input, &gout),
                OpKind::SliceFlat { input, start } => {
                    let mut d_in = vec![T::zero(); self.tensor(*input).len()];
                    d_in[*start..*start + gout.len()].copy_from_slice(&gout);
                    self.accumulate(*input, &d_in);
                }
            }
        }
        self.tape = tape;
        Ok(())
    }
}
