//! Recorded computation with reverse-mode gradient accumulation.
//!
//! A [`Tape`] owns every tensor produced during a forward pass. Operations
//! append nodes (operation kind, input ids, output values) and return
//! [`TensorId`] handles; node ids are topologically ordered by construction.
//! [`Tape::backward`] walks the record in reverse id order, so gradient
//! accumulation order is fixed and results are bit-reproducible. A node used
//! by several consumers receives the sum of their contributions, which is
//! exactly what shared Siamese weights rely on.
//!
//! Every operation validates its output and reports NaN/Inf as an error
//! instead of letting it propagate.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::conv::{self, ConvDims};
use crate::error::TensorError;
use crate::image;
use crate::image::WarpDirection;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

impl TensorId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise unary kinds. `Scale` and `AddConst` are the scalar-constant
/// broadcasts; everything else is same-shape pointwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryKind<S> {
    Abs,
    Sigmoid,
    Elu,
    Scale(S),
    AddConst(S),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Mean,
    Sum,
}

#[derive(Debug, Clone)]
enum Op<S> {
    Leaf,
    Unary {
        kind: UnaryKind<S>,
        x: TensorId,
    },
    Binary {
        kind: BinaryKind,
        a: TensorId,
        b: TensorId,
    },
    Reduce {
        kind: ReduceKind,
        x: TensorId,
    },
    ConcatChannels {
        xs: Vec<TensorId>,
    },
    Conv2d {
        input: TensorId,
        weight: TensorId,
        bias: TensorId,
        stride: usize,
        padding: usize,
    },
    Mirror {
        x: TensorId,
    },
    Warp {
        source: TensorId,
        disparity: TensorId,
        direction: WarpDirection,
    },
    GaussianBlur {
        x: TensorId,
        sigma: f64,
        radius: usize,
    },
    Downsample2x {
        x: TensorId,
    },
    Upsample2x {
        x: TensorId,
    },
    TvSum {
        x: TensorId,
    },
}

struct Node<S> {
    op: Op<S>,
    out: Tensor<S>,
}

/// Append-only record of one forward computation.
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Values of a recorded node.
    pub fn value(&self, id: TensorId) -> &Tensor<S> {
        &self.nodes[id.0].out
    }

    pub fn shape(&self, id: TensorId) -> Shape {
        self.nodes[id.0].out.shape()
    }

    /// Scalar value of a 1-element node.
    pub fn scalar_value(&self, id: TensorId) -> Result<S, TensorError> {
        self.nodes[id.0].out.scalar_value()
    }

    fn push(&mut self, op: Op<S>, out: Tensor<S>) -> TensorId {
        self.nodes.push(Node { op, out });
        TensorId(self.nodes.len() - 1)
    }

    fn push_checked(&mut self, op: Op<S>, out: Tensor<S>, what: &str) -> Result<TensorId, TensorError> {
        out.check_finite(what)?;
        Ok(self.push(op, out))
    }

    /// Records an input value. Leaves have no inputs and a zero upstream
    /// gradient unless some later node consumes them.
    pub fn leaf(&mut self, t: Tensor<S>) -> Result<TensorId, TensorError> {
        t.check_finite("leaf")?;
        Ok(self.push(Op::Leaf, t))
    }

    // ---- pointwise ----

    pub fn unary(&mut self, kind: UnaryKind<S>, x: TensorId) -> Result<TensorId, TensorError> {
        let xv = &self.nodes[x.0].out;
        let out = match kind {
            UnaryKind::Abs => xv.map(|v| v.abs()),
            UnaryKind::Sigmoid => xv.map(sigmoid),
            UnaryKind::Elu => xv.map(elu),
            UnaryKind::Scale(c) => xv.map(|v| v * c),
            UnaryKind::AddConst(c) => xv.map(|v| v + c),
        };
        self.push_checked(Op::Unary { kind, x }, out, unary_name(&kind))
    }

    pub fn binary(&mut self, kind: BinaryKind, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (av, bv) = (&self.nodes[a.0].out, &self.nodes[b.0].out);
        if av.shape() != bv.shape() {
            return Err(TensorError::shape(format!(
                "{:?}: left operand {} vs right operand {}",
                kind,
                av.shape(),
                bv.shape()
            )));
        }
        let data: Vec<S> = match kind {
            BinaryKind::Add => av.data().iter().zip(bv.data()).map(|(&x, &y)| x + y).collect(),
            BinaryKind::Sub => av.data().iter().zip(bv.data()).map(|(&x, &y)| x - y).collect(),
            BinaryKind::Mul => av.data().iter().zip(bv.data()).map(|(&x, &y)| x * y).collect(),
            BinaryKind::Div => av.data().iter().zip(bv.data()).map(|(&x, &y)| x / y).collect(),
        };
        let out = Tensor::from_parts(av.shape(), data);
        self.push_checked(Op::Binary { kind, a, b }, out, binary_name(kind))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.binary(BinaryKind::Add, a, b)
    }
    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.binary(BinaryKind::Sub, a, b)
    }
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.binary(BinaryKind::Mul, a, b)
    }
    pub fn div(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.binary(BinaryKind::Div, a, b)
    }
    pub fn abs(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        self.unary(UnaryKind::Abs, x)
    }
    pub fn sigmoid(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        self.unary(UnaryKind::Sigmoid, x)
    }
    pub fn elu(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        self.unary(UnaryKind::Elu, x)
    }
    pub fn scale(&mut self, x: TensorId, c: S) -> Result<TensorId, TensorError> {
        self.unary(UnaryKind::Scale(c), x)
    }
    pub fn add_const(&mut self, x: TensorId, c: S) -> Result<TensorId, TensorError> {
        self.unary(UnaryKind::AddConst(c), x)
    }

    // ---- reductions ----

    pub fn reduce(&mut self, kind: ReduceKind, x: TensorId) -> Result<TensorId, TensorError> {
        let xv = &self.nodes[x.0].out;
        if xv.is_empty() {
            return Err(TensorError::Empty {
                context: format!("reduce {:?} of shape {}", kind, xv.shape()),
            });
        }
        // Accumulate in f64 so f32 losses over large images stay accurate.
        let mut acc = 0.0f64;
        for v in xv.data() {
            acc += v.to_f64();
        }
        let value = match kind {
            ReduceKind::Sum => acc,
            ReduceKind::Mean => acc / xv.len() as f64,
        };
        let out = Tensor::scalar(S::from_f64(value));
        self.push_checked(Op::Reduce { kind, x }, out, "reduce")
    }

    pub fn mean(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        self.reduce(ReduceKind::Mean, x)
    }
    pub fn sum(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        self.reduce(ReduceKind::Sum, x)
    }

    // ---- structure ----

    /// Stacks tensors along the channel axis, first input first.
    pub fn concat_channels(&mut self, xs: &[TensorId]) -> Result<TensorId, TensorError> {
        if xs.is_empty() {
            return Err(TensorError::Empty {
                context: "concat_channels of zero tensors".into(),
            });
        }
        let first = self.nodes[xs[0].0].out.shape();
        let mut c_total = 0;
        for &id in xs {
            let sh = self.nodes[id.0].out.shape();
            if !sh.same_spatial(&first) {
                return Err(TensorError::shape(format!(
                    "concat_channels: input {} does not match {} on batch/height/width",
                    sh, first
                )));
            }
            c_total += sh.c;
        }
        let out_shape = Shape::new(first.n, c_total, first.h, first.w);
        let hw = first.h * first.w;
        let mut data = vec![S::ZERO; out_shape.len()];
        for n in 0..first.n {
            let mut c_off = 0;
            for &id in xs {
                let t = &self.nodes[id.0].out;
                for c in 0..t.shape().c {
                    let dst = (n * c_total + c_off + c) * hw;
                    data[dst..dst + hw].copy_from_slice(t.plane(n, c));
                }
                c_off += t.shape().c;
            }
        }
        let out = Tensor::from_parts(out_shape, data);
        Ok(self.push(Op::ConcatChannels { xs: xs.to_vec() }, out))
    }

    // ---- convolution ----

    /// Zero-padded 2-D convolution. `weight` is `[Cout, Cin, kh, kw]`, `bias`
    /// is `[Cout, 1, 1, 1]`.
    pub fn conv2d(
        &mut self,
        input: TensorId,
        weight: TensorId,
        bias: TensorId,
        stride: usize,
        padding: usize,
    ) -> Result<TensorId, TensorError> {
        let ish = self.nodes[input.0].out.shape();
        let wsh = self.nodes[weight.0].out.shape();
        let bsh = self.nodes[bias.0].out.shape();
        if stride < 1 {
            return Err(TensorError::invalid("conv2d: stride must be >= 1"));
        }
        if ish.c != wsh.c {
            return Err(TensorError::shape(format!(
                "conv2d: input has {} channels but weight expects {} (weight {})",
                ish.c, wsh.c, wsh
            )));
        }
        if bsh.len() != wsh.n {
            return Err(TensorError::shape(format!(
                "conv2d: bias has {} elements but weight produces {} output channels",
                bsh.len(),
                wsh.n
            )));
        }
        let (out_h, out_w) = conv::output_dims(ish.h, ish.w, wsh.h, wsh.w, stride, padding)
            .ok_or_else(|| {
                TensorError::shape(format!(
                    "conv2d: kernel {}x{} larger than padded input {}x{}",
                    wsh.h,
                    wsh.w,
                    ish.h + 2 * padding,
                    ish.w + 2 * padding
                ))
            })?;
        let dims = ConvDims { stride, padding, out_h, out_w };
        let out = conv::forward(
            &self.nodes[input.0].out,
            &self.nodes[weight.0].out,
            &self.nodes[bias.0].out,
            &dims,
        );
        self.push_checked(
            Op::Conv2d { input, weight, bias, stride, padding },
            out,
            "conv2d",
        )
    }

    // ---- image-domain ops (kernels in `image`) ----

    /// Horizontal flip: column `j` maps to `W-1-j`.
    pub fn mirror(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let out = image::mirror_values(&self.nodes[x.0].out);
        Ok(self.push(Op::Mirror { x }, out))
    }

    /// Scanline bilinear warp of `source` by a `[N,1,H,W]` disparity map in
    /// width-fraction units. Differentiable w.r.t. both inputs.
    pub fn warp_horizontal(
        &mut self,
        source: TensorId,
        disparity: TensorId,
        direction: WarpDirection,
    ) -> Result<TensorId, TensorError> {
        let ssh = self.nodes[source.0].out.shape();
        let dsh = self.nodes[disparity.0].out.shape();
        if dsh.c != 1 || !dsh.same_spatial(&ssh) {
            return Err(TensorError::shape(format!(
                "warp_horizontal: disparity {} must be [N,1,H,W] matching source {}",
                dsh, ssh
            )));
        }
        let out = image::warp_forward(
            &self.nodes[source.0].out,
            &self.nodes[disparity.0].out,
            direction,
        );
        Ok(self.push(Op::Warp { source, disparity, direction }, out))
    }

    /// Separable Gaussian blur; edge taps are renormalized so constants are
    /// preserved exactly.
    pub fn gaussian_blur(&mut self, x: TensorId, sigma: f64, radius: usize) -> Result<TensorId, TensorError> {
        if !(sigma > 0.0) {
            return Err(TensorError::invalid(format!(
                "gaussian_blur: sigma must be > 0, got {sigma}"
            )));
        }
        if radius < 1 {
            return Err(TensorError::invalid("gaussian_blur: radius must be >= 1"));
        }
        let out = image::blur_forward(&self.nodes[x.0].out, sigma, radius);
        Ok(self.push(Op::GaussianBlur { x, sigma, radius }, out))
    }

    /// 2x2 mean pooling; spatial dims must be even.
    pub fn downsample2x(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let sh = self.nodes[x.0].out.shape();
        if sh.h % 2 != 0 || sh.w % 2 != 0 {
            return Err(TensorError::shape(format!(
                "downsample2x: spatial dims of {} must be even",
                sh
            )));
        }
        let out = image::down_forward(&self.nodes[x.0].out);
        Ok(self.push(Op::Downsample2x { x }, out))
    }

    /// Nearest-neighbor 2x upsampling.
    pub fn upsample2x_nearest(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let out = image::up_forward(&self.nodes[x.0].out);
        Ok(self.push(Op::Upsample2x { x }, out))
    }

    /// Unnormalized total variation: sum of absolute vertical and horizontal
    /// neighbor differences over all batch items and channels.
    pub fn tv_sum(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let sh = self.nodes[x.0].out.shape();
        if sh.h < 2 || sh.w < 2 {
            return Err(TensorError::invalid(format!(
                "tv_sum: needs H >= 2 and W >= 2, got {sh}"
            )));
        }
        let out = image::tv_sum_forward(&self.nodes[x.0].out);
        self.push_checked(Op::TvSum { x }, out, "tv_sum")
    }

    // ---- backward ----

    /// Reverse-mode sweep from a scalar loss node. Returns gradients for
    /// every node the loss depends on, shapes matching the node values.
    pub fn backward(&self, loss: TensorId) -> Result<Gradients<S>, TensorError> {
        let out = &self.nodes[loss.0].out;
        if !out.shape().is_scalar() {
            return Err(TensorError::NotScalar {
                context: format!("backward from node of shape {}", out.shape()),
            });
        }
        let mut grads: Vec<Option<Tensor<S>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::scalar(S::ONE));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.backward_node(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, id: usize, g: &Tensor<S>, grads: &mut [Option<Tensor<S>>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Unary { kind, x } => {
                let gx = grad_buf(grads, *x, self.nodes[x.0].out.shape());
                match kind {
                    UnaryKind::Abs => {
                        let xv = self.nodes[x.0].out.data();
                        for ((d, &gv), &v) in gx.data_mut().iter_mut().zip(g.data()).zip(xv) {
                            *d += gv * sign(v);
                        }
                    }
                    UnaryKind::Sigmoid => {
                        let yv = node.out.data();
                        for ((d, &gv), &y) in gx.data_mut().iter_mut().zip(g.data()).zip(yv) {
                            *d += gv * y * (S::ONE - y);
                        }
                    }
                    UnaryKind::Elu => {
                        let yv = node.out.data();
                        for ((d, &gv), &y) in gx.data_mut().iter_mut().zip(g.data()).zip(yv) {
                            *d += gv * if y > S::ZERO { S::ONE } else { y + S::ONE };
                        }
                    }
                    UnaryKind::Scale(c) => {
                        for (d, &gv) in gx.data_mut().iter_mut().zip(g.data()) {
                            *d += gv * *c;
                        }
                    }
                    UnaryKind::AddConst(_) => {
                        for (d, &gv) in gx.data_mut().iter_mut().zip(g.data()) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Binary { kind, a, b } => match kind {
                BinaryKind::Add => {
                    add_into(grad_buf(grads, *a, g.shape()), g.data());
                    add_into(grad_buf(grads, *b, g.shape()), g.data());
                }
                BinaryKind::Sub => {
                    add_into(grad_buf(grads, *a, g.shape()), g.data());
                    let gb = grad_buf(grads, *b, g.shape());
                    for (d, &gv) in gb.data_mut().iter_mut().zip(g.data()) {
                        *d -= gv;
                    }
                }
                BinaryKind::Mul => {
                    {
                        let bv = self.nodes[b.0].out.data();
                        let ga = grad_buf(grads, *a, g.shape());
                        for ((d, &gv), &y) in ga.data_mut().iter_mut().zip(g.data()).zip(bv) {
                            *d += gv * y;
                        }
                    }
                    let av = self.nodes[a.0].out.data();
                    let gb = grad_buf(grads, *b, g.shape());
                    for ((d, &gv), &x) in gb.data_mut().iter_mut().zip(g.data()).zip(av) {
                        *d += gv * x;
                    }
                }
                BinaryKind::Div => {
                    // y = a / b: da = g/b, db = -g*y/b
                    {
                        let bv = self.nodes[b.0].out.data();
                        let ga = grad_buf(grads, *a, g.shape());
                        for ((d, &gv), &bx) in ga.data_mut().iter_mut().zip(g.data()).zip(bv) {
                            *d += gv / bx;
                        }
                    }
                    let bv = self.nodes[b.0].out.data();
                    let yv = node.out.data();
                    let gb = grad_buf(grads, *b, g.shape());
                    for (((d, &gv), &bx), &y) in
                        gb.data_mut().iter_mut().zip(g.data()).zip(bv).zip(yv)
                    {
                        *d -= gv * y / bx;
                    }
                }
            },
            Op::Reduce { kind, x } => {
                let gs = g.data()[0];
                let xsh = self.nodes[x.0].out.shape();
                let per = match kind {
                    ReduceKind::Sum => gs,
                    ReduceKind::Mean => gs / S::from_f64(xsh.len() as f64),
                };
                let gx = grad_buf(grads, *x, xsh);
                for d in gx.data_mut() {
                    *d += per;
                }
            }
            Op::ConcatChannels { xs } => {
                let sh = node.out.shape();
                let hw = sh.h * sh.w;
                let mut c_off = 0;
                for &xid in xs {
                    let xsh = self.nodes[xid.0].out.shape();
                    let gx = grad_buf(grads, xid, xsh);
                    for n in 0..xsh.n {
                        for c in 0..xsh.c {
                            let src = (n * sh.c + c_off + c) * hw;
                            let gsrc = &g.data()[src..src + hw];
                            add_into_slice(gx.plane_mut(n, c), gsrc);
                        }
                    }
                    c_off += xsh.c;
                }
            }
            Op::Conv2d { input, weight, bias, stride, padding } => {
                let ish = self.nodes[input.0].out.shape();
                let wsh = self.nodes[weight.0].out.shape();
                let (out_h, out_w) =
                    conv::output_dims(ish.h, ish.w, wsh.h, wsh.w, *stride, *padding).unwrap();
                let dims = ConvDims { stride: *stride, padding: *padding, out_h, out_w };
                let gs = conv::backward(
                    &self.nodes[input.0].out,
                    &self.nodes[weight.0].out,
                    g,
                    &dims,
                );
                add_into(grad_buf(grads, *input, ish), gs.input.data());
                add_into(grad_buf(grads, *weight, wsh), gs.weight.data());
                add_into(
                    grad_buf(grads, *bias, self.nodes[bias.0].out.shape()),
                    gs.bias.data(),
                );
            }
            Op::Mirror { x } => {
                let gm = image::mirror_values(g);
                add_into(grad_buf(grads, *x, gm.shape()), gm.data());
            }
            Op::Warp { source, disparity, direction } => {
                let (gsrc, gdisp) = image::warp_backward(
                    &self.nodes[source.0].out,
                    &self.nodes[disparity.0].out,
                    g,
                    *direction,
                );
                add_into(grad_buf(grads, *source, gsrc.shape()), gsrc.data());
                add_into(grad_buf(grads, *disparity, gdisp.shape()), gdisp.data());
            }
            Op::GaussianBlur { x, sigma, radius } => {
                let gx = image::blur_transpose(g, *sigma, *radius);
                add_into(grad_buf(grads, *x, gx.shape()), gx.data());
            }
            Op::Downsample2x { x } => {
                let xsh = self.nodes[x.0].out.shape();
                image::down_backward(g, grad_buf(grads, *x, xsh));
            }
            Op::Upsample2x { x } => {
                let xsh = self.nodes[x.0].out.shape();
                image::up_backward(g, grad_buf(grads, *x, xsh));
            }
            Op::TvSum { x } => {
                let gs = g.data()[0];
                let xv = &self.nodes[x.0].out;
                let gx = grad_buf(grads, *x, xv.shape());
                image::tv_sum_backward(xv, gs, gx);
            }
        }
    }
}

fn grad_buf<'a, S: Scalar>(
    grads: &'a mut [Option<Tensor<S>>],
    id: TensorId,
    shape: Shape,
) -> &'a mut Tensor<S> {
    grads[id.0].get_or_insert_with(|| Tensor::zeros(shape))
}

fn add_into<S: Scalar>(dst: &mut Tensor<S>, src: &[S]) {
    for (d, &s) in dst.data_mut().iter_mut().zip(src) {
        *d += s;
    }
}

fn add_into_slice<S: Scalar>(dst: &mut [S], src: &[S]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[inline]
fn sign<S: Scalar>(v: S) -> S {
    if v > S::ZERO {
        S::ONE
    } else if v < S::ZERO {
        -S::ONE
    } else {
        S::ZERO
    }
}

#[inline]
fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::ZERO {
        S::ONE / (S::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::ONE + e)
    }
}

#[inline]
fn elu<S: Scalar>(x: S) -> S {
    if x > S::ZERO {
        x
    } else {
        x.exp() - S::ONE
    }
}

fn unary_name<S>(kind: &UnaryKind<S>) -> &'static str {
    match kind {
        UnaryKind::Abs => "abs",
        UnaryKind::Sigmoid => "sigmoid",
        UnaryKind::Elu => "elu",
        UnaryKind::Scale(_) => "scale",
        UnaryKind::AddConst(_) => "add_const",
    }
}

fn binary_name(kind: BinaryKind) -> &'static str {
    match kind {
        BinaryKind::Add => "add",
        BinaryKind::Sub => "sub",
        BinaryKind::Mul => "mul",
        BinaryKind::Div => "div",
    }
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient of the loss w.r.t. a node, if the loss depends on it.
    pub fn wrt(&self, id: TensorId) -> Option<&Tensor<S>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: TensorId) -> Option<Tensor<S>> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Shape, vals: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, vals.to_vec()).unwrap()
    }

    #[test]
    fn identity_kernel_conv_is_identity() {
        let mut tape = Tape::new();
        let x = tape
            .leaf(t(Shape::new(1, 1, 2, 3), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]))
            .unwrap();
        let w = tape.leaf(t(Shape::new(1, 1, 1, 1), &[1.0])).unwrap();
        let b = tape.leaf(Tensor::zeros(Shape::new(1, 1, 1, 1))).unwrap();
        let y = tape.conv2d(x, w, b, 1, 0).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(x).data());
    }

    #[test]
    fn ones_kernel_counts_neighbors() {
        // 3x3 all-ones kernel over a constant-1 3x3 input, padding 1: each
        // output counts the valid taps, so the center sees 9 and corners 4.
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full(Shape::new(1, 1, 3, 3), 1.0)).unwrap();
        let w = tape.leaf(Tensor::full(Shape::new(1, 1, 3, 3), 1.0)).unwrap();
        let b = tape.leaf(Tensor::zeros(Shape::new(1, 1, 1, 1))).unwrap();
        let y = tape.conv2d(x, w, b, 1, 1).unwrap();
        let out = tape.value(y);
        assert_eq!(out.at(0, 0, 1, 1), 9.0);
        assert_eq!(out.at(0, 0, 0, 0), 4.0);
        assert_eq!(out.at(0, 0, 0, 1), 6.0);
    }

    #[test]
    fn zero_kernel_returns_bias() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(Shape::new(1, 2, 2, 2), &[1.0; 8])).unwrap();
        let w = tape.leaf(Tensor::zeros(Shape::new(3, 2, 3, 3))).unwrap();
        let b = tape
            .leaf(t(Shape::new(3, 1, 1, 1), &[0.5, -1.5, 2.0]))
            .unwrap();
        let y = tape.conv2d(x, w, b, 1, 1).unwrap();
        let out = tape.value(y);
        for c in 0..3 {
            for &v in out.plane(0, c) {
                assert_eq!(v, [0.5, -1.5, 2.0][c]);
            }
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(Shape::new(1, 2, 4, 4))).unwrap();
        let w = tape.leaf(Tensor::zeros(Shape::new(1, 3, 3, 3))).unwrap();
        let b = tape.leaf(Tensor::zeros(Shape::new(1, 1, 1, 1))).unwrap();
        let err = tape.conv2d(x, w, b, 1, 1).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("2 channels") && msg.contains("3"), "{msg}");
    }

    #[test]
    fn elementwise_values() {
        let mut tape = Tape::new();
        let x = tape
            .leaf(t(Shape::new(1, 1, 1, 3), &[0.0, -3.0, -1.0]))
            .unwrap();
        let s = tape.sigmoid(x).unwrap();
        assert_eq!(tape.value(s).data()[0], 0.5);
        let a = tape.abs(x).unwrap();
        assert_eq!(tape.value(a).data()[1], 3.0);
        let e = tape.elu(x).unwrap();
        let expect = libm::exp(-1.0) - 1.0;
        assert!((tape.value(e).data()[2] - expect).abs() < 1e-15);
        assert!((expect + 0.6321).abs() < 1e-4);
    }

    #[test]
    fn binary_requires_same_shape() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::zeros(Shape::new(1, 1, 2, 2))).unwrap();
        let b = tape.leaf(Tensor::zeros(Shape::new(1, 1, 2, 3))).unwrap();
        assert!(tape.add(a, b).is_err());
    }

    #[test]
    fn division_by_zero_is_detected() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(Shape::new(1, 1, 1, 1), &[1.0])).unwrap();
        let b = tape.leaf(t(Shape::new(1, 1, 1, 1), &[0.0])).unwrap();
        let err = tape.div(a, b).unwrap_err();
        assert!(matches!(err, TensorError::NonFinite { .. }));
    }

    #[test]
    fn reduce_values() {
        let mut tape = Tape::new();
        let x = tape
            .leaf(t(Shape::new(1, 1, 1, 4), &[1.0, 2.0, 3.0, 4.0]))
            .unwrap();
        let m = tape.mean(x).unwrap();
        assert_eq!(tape.scalar_value(m).unwrap(), 2.5);
        let z = tape.leaf(Tensor::zeros(Shape::new(1, 2, 3, 4))).unwrap();
        let s = tape.sum(z).unwrap();
        assert_eq!(tape.scalar_value(s).unwrap(), 0.0);
        let q = tape
            .leaf(t(Shape::new(1, 1, 2, 2), &[1.0, 1.0, 3.0, 3.0]))
            .unwrap();
        let mq = tape.mean(q).unwrap();
        assert_eq!(tape.scalar_value(mq).unwrap(), 2.0);
    }

    #[test]
    fn concat_stacks_channels_in_order() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::full(Shape::new(1, 2, 2, 2), 1.0)).unwrap();
        let b = tape.leaf(Tensor::full(Shape::new(1, 3, 2, 2), 2.0)).unwrap();
        let y = tape.concat_channels(&[a, b]).unwrap();
        let out = tape.value(y);
        assert_eq!(out.shape(), Shape::new(1, 5, 2, 2));
        assert!(out.plane(0, 0).iter().all(|&v| v == 1.0));
        assert!(out.plane(0, 1).iter().all(|&v| v == 1.0));
        assert!(out.plane(0, 2).iter().all(|&v| v == 2.0));
        assert!(out.plane(0, 4).iter().all(|&v| v == 2.0));

        let single = tape.concat_channels(&[a]).unwrap();
        assert_eq!(tape.value(single).data(), tape.value(a).data());
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut tape = Tape::new();
        let x = tape
            .leaf(t(Shape::new(1, 1, 2, 2), &[1.0, -2.0, 0.5, 3.0]))
            .unwrap();
        let s = tape.sum(x).unwrap();
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_of_square_sum() {
        // loss = sum(x*x) at x = 3 has gradient 6; both mul operands are the
        // same node, so accumulation over repeated use is exercised too.
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0)).unwrap();
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq).unwrap();
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data()[0], 6.0);
    }

    #[test]
    fn backward_of_sigmoid_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0)).unwrap();
        let y = tape.sigmoid(x).unwrap();
        let s = tape.sum(y).unwrap();
        let grads = tape.backward(s).unwrap();
        assert!((grads.wrt(x).unwrap().data()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(Shape::new(1, 1, 2, 2))).unwrap();
        assert!(matches!(
            tape.backward(x).unwrap_err(),
            TensorError::NotScalar { .. }
        ));
    }

    #[test]
    fn shared_use_gradient_is_sum_of_branches() {
        // z = sum(2x) + sum(3x): dz/dx = 5 everywhere.
        let mut tape = Tape::new();
        let x = tape
            .leaf(t(Shape::new(1, 1, 1, 2), &[1.0, -1.0]))
            .unwrap();
        let a = tape.scale(x, 2.0).unwrap();
        let b = tape.scale(x, 3.0).unwrap();
        let sa = tape.sum(a).unwrap();
        let sb = tape.sum(b).unwrap();
        let z = tape.add(sa, sb).unwrap();
        let grads = tape.backward(z).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[5.0, 5.0]);
    }

    #[test]
    fn determinism_bitwise() {
        let run = || {
            let mut tape = Tape::new();
            let mut rng = crate::rng::SeedRng::new(77);
            let x = tape
                .leaf(Tensor::from_fn(Shape::new(1, 2, 4, 4), |_, _, _, _| {
                    rng.uniform(-1.0, 1.0)
                }))
                .unwrap();
            let w = tape
                .leaf(Tensor::from_fn(Shape::new(2, 2, 3, 3), |_, _, _, _| {
                    rng.uniform(-1.0, 1.0)
                }))
                .unwrap();
            let b = tape.leaf(Tensor::zeros(Shape::new(2, 1, 1, 1))).unwrap();
            let y = tape.conv2d(x, w, b, 1, 1).unwrap();
            let e = tape.elu(y).unwrap();
            let l = tape.mean(e).unwrap();
            let grads = tape.backward(l).unwrap();
            (
                tape.value(l).data().to_vec(),
                grads.wrt(w).unwrap().data().to_vec(),
            )
        };
        let (l1, g1) = run();
        let (l2, g2) = run();
        assert_eq!(l1[0].to_bits(), l2[0].to_bits());
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
