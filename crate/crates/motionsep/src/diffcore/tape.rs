//! Eager tape: every operation runs immediately and records what backward
//! needs. The tape is confined to one worker; backward walks the records once
//! in reverse execution order, accumulating gradients on fan-out.

use super::conv::{
    conv2d_backward_input, conv2d_backward_weight, conv2d_forward, conv3d_backward_input,
    conv3d_backward_weight, conv3d_forward, gemm_acc, Conv2dGeom, Conv3dGeom,
};
use super::gridsample::{
    grid_sample_backward_field, grid_sample_backward_grid, grid_sample_forward,
};
use super::tensor::{Real, Tensor};
use crate::{Error, Result};

/// Handle to a value on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

pub(crate) const BCE_EPS: f64 = 1e-7;

enum Op<T: Real> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: Conv2dGeom,
    },
    Conv3d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: Conv3dGeom,
    },
    /// `geom` describes the virtual forward convolution whose adjoint this is.
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: Conv2dGeom,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Relu {
        x: Var,
    },
    LeakyRelu {
        x: Var,
        alpha: T,
    },
    Sigmoid {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        c: T,
    },
    Concat {
        xs: Vec<Var>,
        axis: usize,
    },
    MaxPool2d {
        x: Var,
        k: (usize, usize),
        s: (usize, usize),
    },
    GlobalMaxPoolSpatial {
        x: Var,
    },
    RepeatTime {
        x: Var,
        t: usize,
    },
    TimeMajor {
        x: Var,
    },
    NearestResizeRows {
        x: Var,
        src_rows: usize,
    },
    Film {
        sound: Var,
        gamma: Var,
        beta: Var,
    },
    GateSpatial {
        x: Var,
        att: Var,
    },
    GridSample {
        field: Var,
        grid: Var,
    },
    StackTime {
        xs: Vec<Var>,
    },
    SliceSpatial {
        x: Var,
        i: usize,
        j: usize,
    },
    CropLast2 {
        x: Var,
        rows: usize,
        cols: usize,
    },
    Sum {
        x: Var,
    },
    Bce {
        pred: Var,
        target: Var,
    },
}

struct Node<T: Real> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Gradients<T: Real> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record an input value. Gradients accumulate on it iff `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    // ---- operators ------------------------------------------------------

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Result<Var> {
        let geom = Conv2dGeom::new(self.shape(x), self.shape(w), stride, pad)?;
        if let Some(b) = b {
            if self.shape(b) != [geom.c_out] {
                return Err(Error::ShapeMismatch(format!(
                    "conv2d bias shape {:?}, want [{}]",
                    self.shape(b),
                    geom.c_out
                )));
            }
        }
        let y = conv2d_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &geom,
        );
        let rg = self.any_grad(&[x, w]) || b.map_or(false, |b| self.requires_grad(b));
        Ok(self.push(
            Tensor::from_vec(&geom.out_shape(), y)?,
            rg,
            Op::Conv2d { x, w, b, geom },
        ))
    }

    pub fn conv3d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: (usize, usize, usize),
        pad: (usize, usize, usize),
    ) -> Result<Var> {
        let geom = Conv3dGeom::new(self.shape(x), self.shape(w), stride, pad)?;
        if let Some(b) = b {
            if self.shape(b) != [geom.c_out] {
                return Err(Error::ShapeMismatch(format!(
                    "conv3d bias shape {:?}, want [{}]",
                    self.shape(b),
                    geom.c_out
                )));
            }
        }
        let y = conv3d_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &geom,
        );
        let rg = self.any_grad(&[x, w]) || b.map_or(false, |b| self.requires_grad(b));
        Ok(self.push(
            Tensor::from_vec(&geom.out_shape(), y)?,
            rg,
            Op::Conv3d { x, w, b, geom },
        ))
    }

    /// Transposed convolution; weight layout is `in_ch × out_ch × kh × kw` and
    /// the output extent is `(in − 1)·stride − 2·pad + k`.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 4 || ws.len() != 4 {
            return Err(Error::ShapeMismatch(format!(
                "conv_transpose2d expects N×K×H×W input and K×C×kh×kw weight, got {:?} and {:?}",
                xs, ws
            )));
        }
        if xs[1] != ws[0] {
            return Err(Error::ShapeMismatch(format!(
                "conv_transpose2d channel disagreement: input K={} vs weight K={}",
                xs[1], ws[0]
            )));
        }
        let up = |i: usize, k: usize, s: usize, p: usize| -> Result<usize> {
            let v = (i - 1) * s + k;
            if v < 2 * p + 1 {
                return Err(Error::ShapeMismatch(
                    "conv_transpose2d output extent vanished".into(),
                ));
            }
            Ok(v - 2 * p)
        };
        let h_out = up(xs[2], ws[2], stride.0, pad.0)?;
        let w_out = up(xs[3], ws[3], stride.1, pad.1)?;
        let geom = Conv2dGeom::new(
            &[xs[0], ws[1], h_out, w_out],
            &[ws[0], ws[1], ws[2], ws[3]],
            stride,
            pad,
        )?;
        debug_assert_eq!(geom.h_out, xs[2]);
        debug_assert_eq!(geom.w_out, xs[3]);
        if let Some(b) = b {
            if self.shape(b) != [ws[1]] {
                return Err(Error::ShapeMismatch(format!(
                    "conv_transpose2d bias shape {:?}, want [{}]",
                    self.shape(b),
                    ws[1]
                )));
            }
        }
        let mut y = vec![T::zero(); xs[0] * ws[1] * h_out * w_out];
        conv2d_backward_input(self.value(x).data(), self.value(w).data(), &geom, &mut y);
        if let Some(bias) = b {
            let bias = self.value(bias).data().to_vec();
            let plane = h_out * w_out;
            for n in 0..xs[0] {
                for c in 0..ws[1] {
                    for v in &mut y[(n * ws[1] + c) * plane..(n * ws[1] + c + 1) * plane] {
                        *v = *v + bias[c];
                    }
                }
            }
        }
        let rg = self.any_grad(&[x, w]) || b.map_or(false, |b| self.requires_grad(b));
        Ok(self.push(
            Tensor::from_vec(&[xs[0], ws[1], h_out, w_out], y)?,
            rg,
            Op::ConvTranspose2d { x, w, b, geom },
        ))
    }

    /// `y = x·w + b` with `x: N×K`, `w: K×M`, `b: M`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(Error::ShapeMismatch(format!(
                "linear expects N×K by K×M, got {:?} and {:?}",
                xs, ws
            )));
        }
        let (n, k, m) = (xs[0], xs[1], ws[1]);
        if let Some(b) = b {
            if self.shape(b) != [m] {
                return Err(Error::ShapeMismatch(format!(
                    "linear bias shape {:?}, want [{}]",
                    self.shape(b),
                    m
                )));
            }
        }
        let mut y = vec![T::zero(); n * m];
        if let Some(bias) = b {
            let bias = self.value(bias).data();
            for row in 0..n {
                y[row * m..(row + 1) * m].copy_from_slice(bias);
            }
        }
        gemm_acc(n, k, m, self.value(x).data(), self.value(w).data(), &mut y);
        let rg = self.any_grad(&[x, w]) || b.map_or(false, |b| self.requires_grad(b));
        Ok(self.push(Tensor::from_vec(&[n, m], y)?, rg, Op::Linear { x, w, b }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        let rg = self.requires_grad(x);
        self.push(y, rg, Op::Relu { x })
    }

    pub fn leaky_relu(&mut self, x: Var, alpha: T) -> Var {
        let y = self
            .value(x)
            .map(|v| if v > T::zero() { v } else { alpha * v });
        let rg = self.requires_grad(x);
        self.push(y, rg, Op::LeakyRelu { x, alpha })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = self.value(x).map(stable_sigmoid);
        let rg = self.requires_grad(x);
        self.push(y, rg, Op::Sigmoid { x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch(format!(
                "add: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let t = Tensor::from_vec(self.shape(a), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(t, rg, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch(format!(
                "mul: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let t = Tensor::from_vec(self.shape(a), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(t, rg, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let y = self.value(x).map(|v| v * c);
        let rg = self.requires_grad(x);
        self.push(y, rg, Op::Scale { x, c })
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::ShapeMismatch("concat of zero tensors".into()));
        }
        let first = self.shape(xs[0]).to_vec();
        if axis >= first.len() {
            return Err(Error::ShapeMismatch(format!(
                "concat axis {} out of range for rank {}",
                axis,
                first.len()
            )));
        }
        let mut axis_total = 0;
        for &v in xs {
            let s = self.shape(v);
            if s.len() != first.len()
                || s.iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(Error::ShapeMismatch(format!(
                    "concat: {:?} incompatible with {:?} on axis {}",
                    s, first, axis
                )));
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = vec![T::zero(); out_shape.iter().product()];
        let out_stride = axis_total * inner;
        let mut offset = 0;
        for &v in xs {
            let len_axis = self.shape(v)[axis];
            let block = len_axis * inner;
            let src = self.value(v).data();
            for o in 0..outer {
                data[o * out_stride + offset..o * out_stride + offset + block]
                    .copy_from_slice(&src[o * block..(o + 1) * block]);
            }
            offset += block;
        }
        let rg = self.any_grad(xs);
        Ok(self.push(
            Tensor::from_vec(&out_shape, data)?,
            rg,
            Op::Concat {
                xs: xs.to_vec(),
                axis,
            },
        ))
    }

    pub fn max_pool2d(&mut self, x: Var, k: (usize, usize), s: (usize, usize)) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 {
            return Err(Error::ShapeMismatch(format!(
                "max_pool2d expects N×C×H×W, got {:?}",
                xs
            )));
        }
        if s.0 == 0 || s.1 == 0 || k.0 == 0 || k.1 == 0 || xs[2] < k.0 || xs[3] < k.1 {
            return Err(Error::ShapeMismatch(format!(
                "max_pool2d window {:?}/{:?} invalid for {:?}",
                k, s, xs
            )));
        }
        let h_out = (xs[2] - k.0) / s.0 + 1;
        let w_out = (xs[3] - k.1) / s.1 + 1;
        let data = self.value(x).data();
        let mut out = vec![T::zero(); xs[0] * xs[1] * h_out * w_out];
        let mut idx = 0;
        for nc in 0..xs[0] * xs[1] {
            let plane = &data[nc * xs[2] * xs[3]..(nc + 1) * xs[2] * xs[3]];
            for oi in 0..h_out {
                for oj in 0..w_out {
                    let mut best = plane[oi * s.0 * xs[3] + oj * s.1];
                    for ki in 0..k.0 {
                        for kj in 0..k.1 {
                            let v = plane[(oi * s.0 + ki) * xs[3] + oj * s.1 + kj];
                            if v > best {
                                best = v;
                            }
                        }
                    }
                    out[idx] = best;
                    idx += 1;
                }
            }
        }
        let rg = self.requires_grad(x);
        Ok(self.push(
            Tensor::from_vec(&[xs[0], xs[1], h_out, w_out], out)?,
            rg,
            Op::MaxPool2d { x, k, s },
        ))
    }

    /// Max over the trailing two (spatial) axes; keeps the leading axes.
    pub fn global_max_pool_spatial(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 3 {
            return Err(Error::ShapeMismatch(format!(
                "global_max_pool_spatial expects rank ≥ 3, got {:?}",
                xs
            )));
        }
        let plane = xs[xs.len() - 2] * xs[xs.len() - 1];
        let lead: usize = xs[..xs.len() - 2].iter().product();
        let data = self.value(x).data();
        let mut out = vec![T::zero(); lead];
        for (i, o) in out.iter_mut().enumerate() {
            let src = &data[i * plane..(i + 1) * plane];
            let mut best = src[0];
            for &v in &src[1..] {
                if v > best {
                    best = v;
                }
            }
            *o = best;
        }
        let rg = self.requires_grad(x);
        Ok(self.push(
            Tensor::from_vec(&xs[..xs.len() - 2], out)?,
            rg,
            Op::GlobalMaxPoolSpatial { x },
        ))
    }

    /// Inflate N×C×H×W along a new time axis: N×C×T×H×W.
    pub fn repeat_time(&mut self, x: Var, t: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || t == 0 {
            return Err(Error::ShapeMismatch(format!(
                "repeat_time expects N×C×H×W and t ≥ 1, got {:?}, t={}",
                xs, t
            )));
        }
        let plane = xs[2] * xs[3];
        let data = self.value(x).data();
        let mut out = vec![T::zero(); xs[0] * xs[1] * t * plane];
        for nc in 0..xs[0] * xs[1] {
            let src = &data[nc * plane..(nc + 1) * plane];
            for tt in 0..t {
                out[(nc * t + tt) * plane..(nc * t + tt + 1) * plane].copy_from_slice(src);
            }
        }
        let rg = self.requires_grad(x);
        Ok(self.push(
            Tensor::from_vec(&[xs[0], xs[1], t, xs[2], xs[3]], out)?,
            rg,
            Op::RepeatTime { x, t },
        ))
    }

    /// 1×C×T → T×C.
    pub fn time_major(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || xs[0] != 1 {
            return Err(Error::ShapeMismatch(format!(
                "time_major expects 1×C×T, got {:?}",
                xs
            )));
        }
        let (c, t) = (xs[1], xs[2]);
        let data = self.value(x).data();
        let mut out = vec![T::zero(); t * c];
        for ci in 0..c {
            for ti in 0..t {
                out[ti * c + ci] = data[ci * t + ti];
            }
        }
        let rg = self.requires_grad(x);
        Ok(self.push(Tensor::from_vec(&[t, c], out)?, rg, Op::TimeMajor { x }))
    }

    /// Nearest-neighbor row resampling of an R×C matrix to `rows`×C.
    pub fn nearest_resize_rows(&mut self, x: Var, rows: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 || rows == 0 {
            return Err(Error::ShapeMismatch(format!(
                "nearest_resize_rows expects R×C and rows ≥ 1, got {:?}, rows={}",
                xs, rows
            )));
        }
        let (r, c) = (xs[0], xs[1]);
        let data = self.value(x).data();
        let mut out = vec![T::zero(); rows * c];
        for ro in 0..rows {
            let src = (ro * r / rows).min(r - 1);
            out[ro * c..(ro + 1) * c].copy_from_slice(&data[src * c..(src + 1) * c]);
        }
        let rg = self.requires_grad(x);
        Ok(self.push(
            Tensor::from_vec(&[rows, c], out)?,
            rg,
            Op::NearestResizeRows { x, src_rows: r },
        ))
    }

    /// Feature-wise affine modulation: `out[0,k,f,t] = γ[t,k]·s[0,k,f,t] + β[t,k]`.
    pub fn film(&mut self, sound: Var, gamma: Var, beta: Var) -> Result<Var> {
        let ss = self.shape(sound).to_vec();
        let gs = self.shape(gamma).to_vec();
        let bs = self.shape(beta).to_vec();
        if ss.len() != 4 || ss[0] != 1 {
            return Err(Error::ShapeMismatch(format!(
                "film expects 1×K×F×T sound features, got {:?}",
                ss
            )));
        }
        let (k, f, t) = (ss[1], ss[2], ss[3]);
        if gs != [t, k] || bs != [t, k] {
            return Err(Error::ShapeMismatch(format!(
                "film coefficients must be T×K = [{}, {}], got γ {:?}, β {:?}",
                t, k, gs, bs
            )));
        }
        let s = self.value(sound).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut out = vec![T::zero(); s.len()];
        for ki in 0..k {
            for fi in 0..f {
                let base = (ki * f + fi) * t;
                for ti in 0..t {
                    out[base + ti] = g[ti * k + ki] * s[base + ti] + b[ti * k + ki];
                }
            }
        }
        let rg = self.any_grad(&[sound, gamma, beta]);
        Ok(self.push(
            Tensor::from_vec(&ss, out)?,
            rg,
            Op::Film { sound, gamma, beta },
        ))
    }

    /// Gate a 1×C×T×H×W volume by a 1×1×H×W spatial map.
    pub fn gate_spatial(&mut self, x: Var, att: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let as_ = self.shape(att).to_vec();
        if xs.len() != 5 || xs[0] != 1 {
            return Err(Error::ShapeMismatch(format!(
                "gate_spatial expects 1×C×T×H×W, got {:?}",
                xs
            )));
        }
        if as_ != [1, 1, xs[3], xs[4]] {
            return Err(Error::ShapeMismatch(format!(
                "gate_spatial attention must be 1×1×{}×{}, got {:?}",
                xs[3], xs[4], as_
            )));
        }
        let plane = xs[3] * xs[4];
        let x_data = self.value(x).data();
        let a_data = self.value(att).data();
        let mut out = vec![T::zero(); x_data.len()];
        for ct in 0..xs[1] * xs[2] {
            let src = &x_data[ct * plane..(ct + 1) * plane];
            let dst = &mut out[ct * plane..(ct + 1) * plane];
            for p in 0..plane {
                dst[p] = src[p] * a_data[p];
            }
        }
        let rg = self.any_grad(&[x, att]);
        Ok(self.push(
            Tensor::from_vec(&xs, out)?,
            rg,
            Op::GateSpatial { x, att },
        ))
    }

    /// Bilinear sample of an H×W×C field at pixel-unit grid points (Hg×Wg×2).
    pub fn grid_sample(&mut self, field: Var, grid: Var) -> Result<Var> {
        let fs = self.shape(field).to_vec();
        let gs = self.shape(grid).to_vec();
        if fs.len() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "grid_sample field must be H×W×C, got {:?}",
                fs
            )));
        }
        if gs.len() != 3 || gs[2] != 2 {
            return Err(Error::ShapeMismatch(format!(
                "grid_sample grid must be H×W×2, got {:?}",
                gs
            )));
        }
        if !self.value(grid).is_finite() {
            return Err(Error::NonFinite("grid_sample grid".into()));
        }
        let out = grid_sample_forward(
            self.value(field).data(),
            fs[0],
            fs[1],
            fs[2],
            self.value(grid).data(),
            gs[0],
            gs[1],
        );
        let rg = self.any_grad(&[field, grid]);
        Ok(self.push(
            Tensor::from_vec(&[gs[0], gs[1], fs[2]], out)?,
            rg,
            Op::GridSample { field, grid },
        ))
    }

    /// Stack T tensors of shape H×W×C into a 1×C×T×H×W volume.
    pub fn stack_time(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::ShapeMismatch("stack_time of zero tensors".into()));
        }
        let first = self.shape(xs[0]).to_vec();
        if first.len() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "stack_time expects H×W×C inputs, got {:?}",
                first
            )));
        }
        for &v in xs {
            if self.shape(v) != first {
                return Err(Error::ShapeMismatch(format!(
                    "stack_time: {:?} differs from {:?}",
                    self.shape(v),
                    first
                )));
            }
        }
        let (h, w, c) = (first[0], first[1], first[2]);
        let t = xs.len();
        let mut out = vec![T::zero(); c * t * h * w];
        for (ti, &v) in xs.iter().enumerate() {
            let src = self.value(v).data();
            for p in 0..h * w {
                for ci in 0..c {
                    out[((ci * t + ti) * h * w) + p] = src[p * c + ci];
                }
            }
        }
        let rg = self.any_grad(xs);
        Ok(self.push(
            Tensor::from_vec(&[1, c, t, h, w], out)?,
            rg,
            Op::StackTime { xs: xs.to_vec() },
        ))
    }

    /// Extract one spatial location from 1×C×T×H×W, yielding 1×C×T.
    pub fn slice_spatial(&mut self, x: Var, i: usize, j: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 5 || xs[0] != 1 {
            return Err(Error::ShapeMismatch(format!(
                "slice_spatial expects 1×C×T×H×W, got {:?}",
                xs
            )));
        }
        if i >= xs[3] || j >= xs[4] {
            return Err(Error::ShapeMismatch(format!(
                "slice_spatial ({}, {}) out of bounds {}×{}",
                i, j, xs[3], xs[4]
            )));
        }
        let plane = xs[3] * xs[4];
        let data = self.value(x).data();
        let mut out = vec![T::zero(); xs[1] * xs[2]];
        for ct in 0..xs[1] * xs[2] {
            out[ct] = data[ct * plane + i * xs[4] + j];
        }
        let rg = self.requires_grad(x);
        Ok(self.push(
            Tensor::from_vec(&[1, xs[1], xs[2]], out)?,
            rg,
            Op::SliceSpatial { x, i, j },
        ))
    }

    /// Crop the trailing two axes to `rows`×`cols` (leading axes must be 1)
    /// and drop the leading axes.
    pub fn crop_last2(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 || xs[..xs.len() - 2].iter().any(|&d| d != 1) {
            return Err(Error::ShapeMismatch(format!(
                "crop_last2 expects leading unit axes, got {:?}",
                xs
            )));
        }
        let (r, c) = (xs[xs.len() - 2], xs[xs.len() - 1]);
        if rows > r || cols > c || rows == 0 || cols == 0 {
            return Err(Error::ShapeMismatch(format!(
                "crop_last2 to {}×{} invalid for {}×{}",
                rows, cols, r, c
            )));
        }
        let data = self.value(x).data();
        let mut out = vec![T::zero(); rows * cols];
        for ri in 0..rows {
            out[ri * cols..(ri + 1) * cols].copy_from_slice(&data[ri * c..ri * c + cols]);
        }
        let rg = self.requires_grad(x);
        Ok(self.push(
            Tensor::from_vec(&[rows, cols], out)?,
            rg,
            Op::CropLast2 { x, rows, cols },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: T = self.value(x).data().iter().copied().sum();
        let rg = self.requires_grad(x);
        self.push(Tensor::scalar(s), rg, Op::Sum { x })
    }

    /// Mean binary cross-entropy with predictions clamped to `[ε, 1−ε]`.
    /// The target is treated as a constant and must contain only 0 and 1.
    pub fn bce_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(Error::ShapeMismatch(format!(
                "bce: prediction {:?} vs target {:?}",
                self.shape(pred),
                self.shape(target)
            )));
        }
        let zero = T::zero();
        let one = T::one();
        if self
            .value(target)
            .data()
            .iter()
            .any(|&t| t != zero && t != one)
        {
            return Err(Error::InvalidMask(
                "bce target contains values outside {0, 1}".into(),
            ));
        }
        let eps = T::from_f64c(BCE_EPS);
        let n = T::from_usizec(self.value(pred).numel());
        let mut acc = T::zero();
        for (&p, &t) in self
            .value(pred)
            .data()
            .iter()
            .zip(self.value(target).data())
        {
            let p = clamp(p, eps, one - eps);
            acc = acc - (t * p.ln() + (one - t) * (one - p).ln());
        }
        let rg = self.requires_grad(pred);
        Ok(self.push(
            Tensor::scalar(acc / n),
            rg,
            Op::Bce { pred, target },
        ))
    }

    // ---- backward -------------------------------------------------------

    /// Reverse-mode sweep from a scalar loss. Returns gradients for every
    /// node on a `requires_grad` path; leaves not on such a path get none.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "backward needs a scalar loss, got {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            let Some(gout) = grads[i].take() else {
                continue;
            };
            self.accumulate(i, &gout, &mut grads);
            grads[i] = Some(gout);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn slot<'a>(
        &self,
        grads: &'a mut [Option<Tensor<T>>],
        v: Var,
    ) -> &'a mut [T] {
        let shape = self.nodes[v.0].value.shape();
        grads[v.0]
            .get_or_insert_with(|| Tensor::zeros(shape))
            .data_mut()
    }

    #[allow(clippy::too_many_lines)]
    fn accumulate(&self, i: usize, gout: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let one = T::one();
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } => {
                if self.wants(*x) {
                    conv2d_backward_input(
                        gout.data(),
                        self.value(*w).data(),
                        geom,
                        self.slot(grads, *x),
                    );
                }
                if self.wants(*w) {
                    conv2d_backward_weight(
                        self.value(*x).data(),
                        gout.data(),
                        geom,
                        self.slot(grads, *w),
                        None,
                    );
                }
                if let Some(b) = b {
                    if self.wants(*b) {
                        let cols = geom.cols();
                        let c_out = geom.c_out;
                        let db = self.slot(grads, *b);
                        for n in 0..geom.n {
                            for m in 0..c_out {
                                let row =
                                    &gout.data()[(n * c_out + m) * cols..(n * c_out + m + 1) * cols];
                                let s: T = row.iter().copied().sum();
                                db[m] = db[m] + s;
                            }
                        }
                    }
                }
            }
            Op::Conv3d { x, w, b, geom } => {
                if self.wants(*x) {
                    conv3d_backward_input(
                        gout.data(),
                        self.value(*w).data(),
                        geom,
                        self.slot(grads, *x),
                    );
                }
                if self.wants(*w) {
                    conv3d_backward_weight(
                        self.value(*x).data(),
                        gout.data(),
                        geom,
                        self.slot(grads, *w),
                        None,
                    );
                }
                if let Some(b) = b {
                    if self.wants(*b) {
                        let cols = geom.cols();
                        let c_out = geom.c_out;
                        let db = self.slot(grads, *b);
                        for n in 0..geom.n {
                            for m in 0..c_out {
                                let row =
                                    &gout.data()[(n * c_out + m) * cols..(n * c_out + m + 1) * cols];
                                let s: T = row.iter().copied().sum();
                                db[m] = db[m] + s;
                            }
                        }
                    }
                }
            }
            Op::ConvTranspose2d { x, w, b, geom } => {
                if self.wants(*x) {
                    let dx = conv2d_forward(gout.data(), self.value(*w).data(), None, geom);
                    let slot = self.slot(grads, *x);
                    for (s, d) in slot.iter_mut().zip(dx) {
                        *s = *s + d;
                    }
                }
                if self.wants(*w) {
                    conv2d_backward_weight(
                        gout.data(),
                        self.value(*x).data(),
                        geom,
                        self.slot(grads, *w),
                        None,
                    );
                }
                if let Some(b) = b {
                    if self.wants(*b) {
                        // Bias rides the transpose output, whose channels are
                        // the virtual conv's input channels.
                        let c = geom.c_in;
                        let plane = geom.h * geom.w;
                        let db = self.slot(grads, *b);
                        for n in 0..geom.n {
                            for ci in 0..c {
                                let row =
                                    &gout.data()[(n * c + ci) * plane..(n * c + ci + 1) * plane];
                                let s: T = row.iter().copied().sum();
                                db[ci] = db[ci] + s;
                            }
                        }
                    }
                }
            }
            Op::Linear { x, w, b } => {
                let xs = self.shape(*x);
                let (n, k) = (xs[0], xs[1]);
                let m = self.shape(*w)[1];
                if self.wants(*x) {
                    let wv = self.value(*w).data();
                    let mut wt = vec![T::zero(); m * k];
                    for ki in 0..k {
                        for mi in 0..m {
                            wt[mi * k + ki] = wv[ki * m + mi];
                        }
                    }
                    gemm_acc(n, m, k, gout.data(), &wt, self.slot(grads, *x));
                }
                if self.wants(*w) {
                    let xv = self.value(*x).data();
                    let mut xt = vec![T::zero(); k * n];
                    for ni in 0..n {
                        for ki in 0..k {
                            xt[ki * n + ni] = xv[ni * k + ki];
                        }
                    }
                    gemm_acc(k, n, m, &xt, gout.data(), self.slot(grads, *w));
                }
                if let Some(b) = b {
                    if self.wants(*b) {
                        let db = self.slot(grads, *b);
                        for ni in 0..n {
                            for mi in 0..m {
                                db[mi] = db[mi] + gout.data()[ni * m + mi];
                            }
                        }
                    }
                }
            }
            Op::Relu { x } => {
                if self.wants(*x) {
                    let xv = self.value(*x).data();
                    let slot = self.slot(grads, *x);
                    for ((s, &g), &v) in slot.iter_mut().zip(gout.data()).zip(xv) {
                        if v > T::zero() {
                            *s = *s + g;
                        }
                    }
                }
            }
            Op::LeakyRelu { x, alpha } => {
                if self.wants(*x) {
                    let xv = self.value(*x).data();
                    let slot = self.slot(grads, *x);
                    for ((s, &g), &v) in slot.iter_mut().zip(gout.data()).zip(xv) {
                        *s = *s + if v > T::zero() { g } else { *alpha * g };
                    }
                }
            }
            Op::Sigmoid { x } => {
                if self.wants(*x) {
                    let yv = self.nodes[i].value.data();
                    let slot = self.slot(grads, *x);
                    for ((s, &g), &y) in slot.iter_mut().zip(gout.data()).zip(yv) {
                        *s = *s + g * y * (one - y);
                    }
                }
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if self.wants(v) {
                        let slot = self.slot(grads, v);
                        for (s, &g) in slot.iter_mut().zip(gout.data()) {
                            *s = *s + g;
                        }
                    }
                }
            }
            Op::Mul { a, b } => {
                if self.wants(*a) {
                    let bv = self.value(*b).data();
                    let slot = self.slot(grads, *a);
                    for ((s, &g), &v) in slot.iter_mut().zip(gout.data()).zip(bv) {
                        *s = *s + g * v;
                    }
                }
                if self.wants(*b) {
                    let av = self.value(*a).data();
                    let slot = self.slot(grads, *b);
                    for ((s, &g), &v) in slot.iter_mut().zip(gout.data()).zip(av) {
                        *s = *s + g * v;
                    }
                }
            }
            Op::Scale { x, c } => {
                if self.wants(*x) {
                    let slot = self.slot(grads, *x);
                    for (s, &g) in slot.iter_mut().zip(gout.data()) {
                        *s = *s + g * *c;
                    }
                }
            }
            Op::Concat { xs, axis } => {
                let out_shape = self.nodes[i].value.shape();
                let outer: usize = out_shape[..*axis].iter().product();
                let inner: usize = out_shape[*axis + 1..].iter().product();
                let out_stride = out_shape[*axis] * inner;
                let mut offset = 0;
                for &v in xs {
                    let block = self.shape(v)[*axis] * inner;
                    if self.wants(v) {
                        let slot = self.slot(grads, v);
                        for o in 0..outer {
                            let src = &gout.data()[o * out_stride + offset
                                ..o * out_stride + offset + block];
                            for (s, &g) in slot[o * block..(o + 1) * block].iter_mut().zip(src) {
                                *s = *s + g;
                            }
                        }
                    }
                    offset += block;
                }
            }
            Op::MaxPool2d { x, k, s } => {
                if self.wants(*x) {
                    let xs = self.shape(*x).to_vec();
                    let (h, w) = (xs[2], xs[3]);
                    let h_out = (h - k.0) / s.0 + 1;
                    let w_out = (w - k.1) / s.1 + 1;
                    let xv = self.value(*x).data();
                    let slot = self.slot(grads, *x);
                    let mut idx = 0;
                    for nc in 0..xs[0] * xs[1] {
                        let plane = &xv[nc * h * w..(nc + 1) * h * w];
                        let gplane = &mut slot[nc * h * w..(nc + 1) * h * w];
                        for oi in 0..h_out {
                            for oj in 0..w_out {
                                let mut best = (oi * s.0) * w + oj * s.1;
                                for ki in 0..k.0 {
                                    for kj in 0..k.1 {
                                        let p = (oi * s.0 + ki) * w + oj * s.1 + kj;
                                        if plane[p] > plane[best] {
                                            best = p;
                                        }
                                    }
                                }
                                gplane[best] = gplane[best] + gout.data()[idx];
                                idx += 1;
                            }
                        }
                    }
                }
            }
            Op::GlobalMaxPoolSpatial { x } => {
                if self.wants(*x) {
                    let xs = self.shape(*x).to_vec();
                    let plane = xs[xs.len() - 2] * xs[xs.len() - 1];
                    let lead: usize = xs[..xs.len() - 2].iter().product();
                    let xv = self.value(*x).data();
                    let slot = self.slot(grads, *x);
                    for l in 0..lead {
                        let src = &xv[l * plane..(l + 1) * plane];
                        let mut best = 0;
                        for (p, &v) in src.iter().enumerate() {
                            if v > src[best] {
                                best = p;
                            }
                        }
                        slot[l * plane + best] = slot[l * plane + best] + gout.data()[l];
                    }
                }
            }
            Op::RepeatTime { x, t } => {
                if self.wants(*x) {
                    let xs = self.shape(*x).to_vec();
                    let plane = xs[2] * xs[3];
                    let slot = self.slot(grads, *x);
                    for nc in 0..xs[0] * xs[1] {
                        for tt in 0..*t {
                            let src = &gout.data()[(nc * t + tt) * plane..(nc * t + tt + 1) * plane];
                            for (s, &g) in slot[nc * plane..(nc + 1) * plane].iter_mut().zip(src) {
                                *s = *s + g;
                            }
                        }
                    }
                }
            }
            Op::TimeMajor { x } => {
                if self.wants(*x) {
                    let xs = self.shape(*x).to_vec();
                    let (c, t) = (xs[1], xs[2]);
                    let slot = self.slot(grads, *x);
                    for ci in 0..c {
                        for ti in 0..t {
                            slot[ci * t + ti] = slot[ci * t + ti] + gout.data()[ti * c + ci];
                        }
                    }
                }
            }
            Op::NearestResizeRows { x, src_rows } => {
                if self.wants(*x) {
                    let c = self.shape(*x)[1];
                    let rows = gout.shape()[0];
                    let slot = self.slot(grads, *x);
                    for ro in 0..rows {
                        let src = (ro * src_rows / rows).min(src_rows - 1);
                        for ci in 0..c {
                            slot[src * c + ci] = slot[src * c + ci] + gout.data()[ro * c + ci];
                        }
                    }
                }
            }
            Op::Film { sound, gamma, beta } => {
                let ss = self.shape(*sound).to_vec();
                let (k, f, t) = (ss[1], ss[2], ss[3]);
                if self.wants(*sound) {
                    let gv = self.value(*gamma).data();
                    let slot = self.slot(grads, *sound);
                    for ki in 0..k {
                        for fi in 0..f {
                            let base = (ki * f + fi) * t;
                            for ti in 0..t {
                                slot[base + ti] =
                                    slot[base + ti] + gout.data()[base + ti] * gv[ti * k + ki];
                            }
                        }
                    }
                }
                if self.wants(*gamma) {
                    let sv = self.value(*sound).data();
                    let slot = self.slot(grads, *gamma);
                    for ki in 0..k {
                        for fi in 0..f {
                            let base = (ki * f + fi) * t;
                            for ti in 0..t {
                                slot[ti * k + ki] =
                                    slot[ti * k + ki] + gout.data()[base + ti] * sv[base + ti];
                            }
                        }
                    }
                }
                if self.wants(*beta) {
                    let slot = self.slot(grads, *beta);
                    for ki in 0..k {
                        for fi in 0..f {
                            let base = (ki * f + fi) * t;
                            for ti in 0..t {
                                slot[ti * k + ki] = slot[ti * k + ki] + gout.data()[base + ti];
                            }
                        }
                    }
                }
            }
            Op::GateSpatial { x, att } => {
                let xs = self.shape(*x).to_vec();
                let plane = xs[3] * xs[4];
                if self.wants(*x) {
                    let av = self.value(*att).data();
                    let slot = self.slot(grads, *x);
                    for ct in 0..xs[1] * xs[2] {
                        let dst = &mut slot[ct * plane..(ct + 1) * plane];
                        let src = &gout.data()[ct * plane..(ct + 1) * plane];
                        for p in 0..plane {
                            dst[p] = dst[p] + src[p] * av[p];
                        }
                    }
                }
                if self.wants(*att) {
                    let xv = self.value(*x).data();
                    let slot = self.slot(grads, *att);
                    for ct in 0..xs[1] * xs[2] {
                        let xsrc = &xv[ct * plane..(ct + 1) * plane];
                        let gsrc = &gout.data()[ct * plane..(ct + 1) * plane];
                        for p in 0..plane {
                            slot[p] = slot[p] + gsrc[p] * xsrc[p];
                        }
                    }
                }
            }
            Op::GridSample { field, grid } => {
                let fs = self.shape(*field).to_vec();
                let gs = self.shape(*grid).to_vec();
                if self.wants(*field) {
                    grid_sample_backward_field(
                        gout.data(),
                        fs[0],
                        fs[1],
                        fs[2],
                        self.value(*grid).data(),
                        gs[0],
                        gs[1],
                        self.slot(grads, *field),
                    );
                }
                if self.wants(*grid) {
                    let field_data = self.value(*field).data();
                    let grid_data = self.value(*grid).data();
                    grid_sample_backward_grid(
                        gout.data(),
                        field_data,
                        fs[0],
                        fs[1],
                        fs[2],
                        grid_data,
                        gs[0],
                        gs[1],
                        self.slot(grads, *grid),
                    );
                }
            }
            Op::StackTime { xs } => {
                let first = self.shape(xs[0]).to_vec();
                let (h, w, c) = (first[0], first[1], first[2]);
                let t = xs.len();
                for (ti, &v) in xs.iter().enumerate() {
                    if self.wants(v) {
                        let slot = self.slot(grads, v);
                        for p in 0..h * w {
                            for ci in 0..c {
                                slot[p * c + ci] =
                                    slot[p * c + ci] + gout.data()[(ci * t + ti) * h * w + p];
                            }
                        }
                    }
                }
            }
            Op::SliceSpatial { x, i: si, j: sj } => {
                if self.wants(*x) {
                    let xs = self.shape(*x).to_vec();
                    let plane = xs[3] * xs[4];
                    let slot = self.slot(grads, *x);
                    for ct in 0..xs[1] * xs[2] {
                        let p = ct * plane + si * xs[4] + sj;
                        slot[p] = slot[p] + gout.data()[ct];
                    }
                }
            }
            Op::CropLast2 { x, rows, cols } => {
                if self.wants(*x) {
                    let xs = self.shape(*x).to_vec();
                    let c = xs[xs.len() - 1];
                    let slot = self.slot(grads, *x);
                    for ri in 0..*rows {
                        for ci in 0..*cols {
                            slot[ri * c + ci] = slot[ri * c + ci] + gout.data()[ri * cols + ci];
                        }
                    }
                }
            }
            Op::Sum { x } => {
                if self.wants(*x) {
                    let g = gout.item();
                    let slot = self.slot(grads, *x);
                    for s in slot.iter_mut() {
                        *s = *s + g;
                    }
                }
            }
            Op::Bce { pred, target } => {
                if self.wants(*pred) {
                    let eps = T::from_f64c(BCE_EPS);
                    let n = T::from_usizec(self.value(*pred).numel());
                    let g = gout.item() / n;
                    let tv = self.value(*target).data();
                    let pv = self.value(*pred).data();
                    let slot = self.slot(grads, *pred);
                    for ((s, &p), &t) in slot.iter_mut().zip(pv).zip(tv) {
                        // Zero slope outside the clamp range.
                        if p > eps && p < one - eps {
                            *s = *s + g * (-(t / p) + (one - t) / (one - p));
                        }
                    }
                }
            }
        }
    }
}

fn clamp<T: Real>(v: T, lo: T, hi: T) -> T {
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}

fn stable_sigmoid<T: Real>(x: T) -> T {
    let one = T::one();
    if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, data).unwrap()
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t2(&[3], &[1.0, -2.0, 5.0]), true);
        let loss = tape.sum(x);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_sum_gradient_is_two_x() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t2(&[3], &[1.0, -2.0, 5.0]), true);
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, -4.0, 10.0]);
    }

    #[test]
    fn fanout_accumulates() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t2(&[2], &[3.0, 4.0]), true);
        let a = tape.add(x, x).unwrap(); // 2x
        let loss = tape.sum(a);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t2(&[1], &[0.0]));
        let y = tape.sigmoid(x);
        assert!((tape.value(y).item() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn relu_clamps_negative() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::from_f64(&[3], &[-1.0, 0.0, 2.0]).unwrap());
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn bce_matches_ln2_at_half() {
        let mut tape = Tape::<f64>::new();
        let p = tape.constant(t2(&[4], &[0.5; 4]));
        let t = tape.constant(t2(&[4], &[1.0, 0.0, 1.0, 0.0]));
        let loss = tape.bce_loss(p, t).unwrap();
        assert!((tape.value(loss).item() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_rejects_soft_targets() {
        let mut tape = Tape::<f64>::new();
        let p = tape.constant(t2(&[1], &[0.5]));
        let t = tape.constant(t2(&[1], &[0.25]));
        assert!(tape.bce_loss(p, t).is_err());
    }

    #[test]
    fn concat_axis1_roundtrip() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(t2(&[2, 1], &[1.0, 2.0]), true);
        let b = tape.leaf(t2(&[2, 2], &[3.0, 4.0, 5.0, 6.0]), true);
        let c = tape.concat(&[a, b], 1).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let loss = tape.sum(c);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[1.0, 1.0]);
        assert_eq!(g.get(b).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn conv2d_identity_kernel() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t2(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let w = tape.constant(t2(&[1, 1, 1, 1], &[1.0]));
        let y = tape.conv2d(x, w, None, (1, 1), (0, 0)).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn conv2d_zero_weight_broadcasts_bias() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t2(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let w = tape.constant(t2(&[2, 1, 1, 1], &[0.0, 0.0]));
        let b = tape.constant(t2(&[2], &[0.5, -1.5]));
        let y = tape.conv2d(x, w, Some(b), (1, 1), (0, 0)).unwrap();
        assert_eq!(
            tape.value(y).data(),
            &[0.5, 0.5, 0.5, 0.5, -1.5, -1.5, -1.5, -1.5]
        );
    }

    #[test]
    fn conv_transpose_shape_law() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::zeros(&[1, 3, 4, 4]));
        let w = tape.constant(Tensor::zeros(&[3, 2, 4, 4]));
        let y = tape.conv_transpose2d(x, w, None, (2, 2), (1, 1)).unwrap();
        assert_eq!(tape.shape(y), &[1, 2, 8, 8]);
    }

    #[test]
    fn grid_sample_identity_and_midpoint() {
        let mut tape = Tape::<f64>::new();
        // 1×2×1 field: values 0 and 1 along x.
        let f = tape.constant(t2(&[1, 2, 1], &[0.0, 1.0]));
        let g_id = tape.constant(t2(&[1, 2, 2], &[0.0, 0.0, 1.0, 0.0]));
        let y = tape.grid_sample(f, g_id).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 1.0]);
        let g_mid = tape.constant(t2(&[1, 1, 2], &[0.5, 0.0]));
        let y = tape.grid_sample(f, g_mid).unwrap();
        assert!((tape.value(y).data()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn grid_sample_rejects_non_finite_grid() {
        let mut tape = Tape::<f64>::new();
        let f = tape.constant(t2(&[2, 2, 1], &[0.0; 4]));
        let g = tape.constant(t2(&[1, 1, 2], &[f64::NAN, 0.0]));
        assert!(tape.grid_sample(f, g).is_err());
    }

    #[test]
    fn max_pool_one_hot() {
        let mut tape = Tape::<f64>::new();
        let mut data = vec![0.0; 16];
        data[6] = 1.0; // row 1, col 2
        let x = tape.constant(t2(&[1, 1, 4, 4], &data));
        let y = tape.max_pool2d(x, (2, 2), (2, 2)).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn film_identity_passthrough() {
        let mut tape = Tape::<f64>::new();
        let s = tape.constant(t2(&[1, 2, 2, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]));
        let g = tape.constant(t2(&[2, 2], &[1.0; 4]));
        let b = tape.constant(t2(&[2, 2], &[0.0; 4]));
        let y = tape.film(s, g, b).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(s).data());
    }

    #[test]
    fn time_major_transposes() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t2(&[1, 2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let y = tape.time_major(x).unwrap();
        assert_eq!(tape.shape(y), &[3, 2]);
        assert_eq!(tape.value(y).data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    #[test]
    fn nearest_resize_rows_up_and_down() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t2(&[3, 1], &[10.0, 20.0, 30.0]));
        let up = tape.nearest_resize_rows(x, 6).unwrap();
        assert_eq!(
            tape.value(up).data(),
            &[10.0, 10.0, 20.0, 20.0, 30.0, 30.0]
        );
        let x6 = tape.constant(t2(&[6, 1], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]));
        let down = tape.nearest_resize_rows(x6, 3).unwrap();
        assert_eq!(tape.value(down).data(), &[0.0, 2.0, 4.0]);
    }
}
