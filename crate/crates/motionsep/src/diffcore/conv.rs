//! CPU convolution kernels: im2col plus a small blocked GEMM.
//!
//! The same three primitives (forward, input-gradient, weight-gradient) back
//! both `conv2d`/`conv3d` and `conv_transpose2d`; the transpose op is the
//! input-gradient of a virtual convolution running the other way.

use super::tensor::Real;
use crate::{Error, Result};

/// Geometry of one 2-D cross-correlation.
#[derive(Debug, Clone, Copy)]
pub struct Conv2dGeom {
    pub n: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
    pub h_out: usize,
    pub w_out: usize,
}

fn out_dim(i: usize, k: usize, s: usize, p: usize) -> Result<usize> {
    if s == 0 {
        return Err(Error::ShapeMismatch("stride must be positive".into()));
    }
    let padded = i + 2 * p;
    if padded < k {
        return Err(Error::ShapeMismatch(format!(
            "kernel {} exceeds padded input {}",
            k, padded
        )));
    }
    Ok((padded - k) / s + 1)
}

impl Conv2dGeom {
    pub fn new(
        x_shape: &[usize],
        w_shape: &[usize],
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Result<Self> {
        if x_shape.len() != 4 || w_shape.len() != 4 {
            return Err(Error::ShapeMismatch(format!(
                "conv2d expects N×C×H×W input and K×C×kh×kw weight, got {:?} and {:?}",
                x_shape, w_shape
            )));
        }
        if x_shape[1] != w_shape[1] {
            return Err(Error::ShapeMismatch(format!(
                "conv2d channel disagreement: input C={} vs weight C={}",
                x_shape[1], w_shape[1]
            )));
        }
        let g = Conv2dGeom {
            n: x_shape[0],
            c_in: x_shape[1],
            h: x_shape[2],
            w: x_shape[3],
            c_out: w_shape[0],
            kh: w_shape[2],
            kw: w_shape[3],
            sh: stride.0,
            sw: stride.1,
            ph: pad.0,
            pw: pad.1,
            h_out: out_dim(x_shape[2], w_shape[2], stride.0, pad.0)?,
            w_out: out_dim(x_shape[3], w_shape[3], stride.1, pad.1)?,
        };
        Ok(g)
    }

    pub fn k_dim(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    pub fn cols(&self) -> usize {
        self.h_out * self.w_out
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.n, self.c_out, self.h_out, self.w_out]
    }
}

/// c[m][n] += a[m][k] · b[k][n], row-major, four-row blocked.
pub fn gemm_acc<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let mut i = 0;
    while i + 4 <= m {
        let block = &mut c[i * n..(i + 4) * n];
        let (c0, rest) = block.split_at_mut(n);
        let (c1, rest) = rest.split_at_mut(n);
        let (c2, c3) = rest.split_at_mut(n);
        for p in 0..k {
            let a0 = a[i * k + p];
            let a1 = a[(i + 1) * k + p];
            let a2 = a[(i + 2) * k + p];
            let a3 = a[(i + 3) * k + p];
            let brow = &b[p * n..p * n + n];
            for j in 0..n {
                let bv = brow[j];
                c0[j] = c0[j] + a0 * bv;
                c1[j] = c1[j] + a1 * bv;
                c2[j] = c2[j] + a2 * bv;
                c3[j] = c3[j] + a3 * bv;
            }
        }
        i += 4;
    }
    while i < m {
        let crow = &mut c[i * n..i * n + n];
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..p * n + n];
            for j in 0..n {
                crow[j] = crow[j] + av * brow[j];
            }
        }
        i += 1;
    }
}

/// c[m][n] += a[m][k] · b[k][n] where only row dots are needed:
/// d[m][k] = Σ_n y[m][n] · col[k][n]; both operands row-contiguous.
fn dot_rows<T: Real>(m: usize, k: usize, n: usize, y: &[T], col: &[T], d: &mut [T]) {
    for i in 0..m {
        let yrow = &y[i * n..i * n + n];
        for p in 0..k {
            let crow = &col[p * n..p * n + n];
            let mut acc = T::zero();
            for j in 0..n {
                acc = acc + yrow[j] * crow[j];
            }
            d[i * k + p] = d[i * k + p] + acc;
        }
    }
}

/// Valid output-column range for one kernel tap: `oj` such that
/// `0 <= oj*s + kj - p < w`.
fn tap_range(extent: usize, out: usize, k: usize, s: usize, p: usize) -> (usize, usize) {
    let lo = if k >= p { 0 } else { (p - k + s - 1) / s };
    let hi_excl = if extent + p > k {
        ((extent + p - k - 1) / s + 1).min(out)
    } else {
        0
    };
    (lo.min(out), hi_excl.max(lo.min(out)))
}

/// Expand one image (C×H×W) into a (C·kh·kw) × (h_out·w_out) matrix.
pub fn im2col_2d<T: Real>(x: &[T], g: &Conv2dGeom, col: &mut [T]) {
    let ncols = g.cols();
    debug_assert_eq!(col.len(), g.k_dim() * ncols);
    let plane = g.h * g.w;
    let mut row = 0;
    for c in 0..g.c_in {
        let xc = &x[c * plane..(c + 1) * plane];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let out_row = &mut col[row * ncols..(row + 1) * ncols];
                let (j_lo, j_hi) = tap_range(g.w, g.w_out, kj, g.sw, g.pw);
                for oi in 0..g.h_out {
                    let ii = (oi * g.sh + ki) as isize - g.ph as isize;
                    let dst = &mut out_row[oi * g.w_out..(oi + 1) * g.w_out];
                    if ii < 0 || ii >= g.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let base = ii as usize * g.w;
                    dst[..j_lo].fill(T::zero());
                    dst[j_hi..].fill(T::zero());
                    if g.sw == 1 {
                        let src0 = base + j_lo + kj - g.pw;
                        dst[j_lo..j_hi].copy_from_slice(&xc[src0..src0 + (j_hi - j_lo)]);
                    } else {
                        for oj in j_lo..j_hi {
                            dst[oj] = xc[base + oj * g.sw + kj - g.pw];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatter-add the columns matrix back into an image (adjoint of im2col).
pub fn col2im_2d<T: Real>(col: &[T], g: &Conv2dGeom, x: &mut [T]) {
    let ncols = g.cols();
    let plane = g.h * g.w;
    let mut row = 0;
    for c in 0..g.c_in {
        let xc = &mut x[c * plane..(c + 1) * plane];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let src_row = &col[row * ncols..(row + 1) * ncols];
                let (j_lo, j_hi) = tap_range(g.w, g.w_out, kj, g.sw, g.pw);
                for oi in 0..g.h_out {
                    let ii = (oi * g.sh + ki) as isize - g.ph as isize;
                    if ii < 0 || ii >= g.h as isize {
                        continue;
                    }
                    let base = ii as usize * g.w;
                    let src = &src_row[oi * g.w_out..(oi + 1) * g.w_out];
                    for oj in j_lo..j_hi {
                        let xi = base + oj * g.sw + kj - g.pw;
                        xc[xi] = xc[xi] + src[oj];
                    }
                }
                row += 1;
            }
        }
    }
}

/// Forward cross-correlation. `y = conv(x; w) + b`.
pub fn conv2d_forward<T: Real>(x: &[T], w: &[T], b: Option<&[T]>, g: &Conv2dGeom) -> Vec<T> {
    let ncols = g.cols();
    let k_dim = g.k_dim();
    let mut y = vec![T::zero(); g.n * g.c_out * ncols];
    let mut col = vec![T::zero(); k_dim * ncols];
    for n in 0..g.n {
        let xn = &x[n * g.c_in * g.h * g.w..(n + 1) * g.c_in * g.h * g.w];
        im2col_2d(xn, g, &mut col);
        let yn = &mut y[n * g.c_out * ncols..(n + 1) * g.c_out * ncols];
        if let Some(bias) = b {
            for m in 0..g.c_out {
                yn[m * ncols..(m + 1) * ncols].fill(bias[m]);
            }
        }
        gemm_acc(g.c_out, k_dim, ncols, w, &col, yn);
    }
    y
}

/// Input gradient: `dx += convᵀ(dy; w)`.
pub fn conv2d_backward_input<T: Real>(dy: &[T], w: &[T], g: &Conv2dGeom, dx: &mut [T]) {
    let ncols = g.cols();
    let k_dim = g.k_dim();
    // Transposed weight view: wt[k][m] = w[m][k].
    let mut wt = vec![T::zero(); k_dim * g.c_out];
    for m in 0..g.c_out {
        for k in 0..k_dim {
            wt[k * g.c_out + m] = w[m * k_dim + k];
        }
    }
    let mut colg = vec![T::zero(); k_dim * ncols];
    for n in 0..g.n {
        colg.fill(T::zero());
        let dyn_ = &dy[n * g.c_out * ncols..(n + 1) * g.c_out * ncols];
        gemm_acc(k_dim, g.c_out, ncols, &wt, dyn_, &mut colg);
        let dxn = &mut dx[n * g.c_in * g.h * g.w..(n + 1) * g.c_in * g.h * g.w];
        col2im_2d(&colg, g, dxn);
    }
}

/// Weight and bias gradients: `dw += dy ⊛ x`, `db += Σ dy`.
pub fn conv2d_backward_weight<T: Real>(
    x: &[T],
    dy: &[T],
    g: &Conv2dGeom,
    dw: &mut [T],
    db: Option<&mut [T]>,
) {
    let ncols = g.cols();
    let k_dim = g.k_dim();
    let mut col = vec![T::zero(); k_dim * ncols];
    for n in 0..g.n {
        let xn = &x[n * g.c_in * g.h * g.w..(n + 1) * g.c_in * g.h * g.w];
        im2col_2d(xn, g, &mut col);
        let dyn_ = &dy[n * g.c_out * ncols..(n + 1) * g.c_out * ncols];
        dot_rows(g.c_out, k_dim, ncols, dyn_, &col, dw);
    }
    if let Some(db) = db {
        for n in 0..g.n {
            for m in 0..g.c_out {
                let row = &dy[(n * g.c_out + m) * ncols..(n * g.c_out + m + 1) * ncols];
                let s: T = row.iter().copied().sum();
                db[m] = db[m] + s;
            }
        }
    }
}

/// Geometry of one 3-D cross-correlation over N×C×T×H×W.
#[derive(Debug, Clone, Copy)]
pub struct Conv3dGeom {
    pub n: usize,
    pub c_in: usize,
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kt: usize,
    pub kh: usize,
    pub kw: usize,
    pub st: usize,
    pub sh: usize,
    pub sw: usize,
    pub pt: usize,
    pub ph: usize,
    pub pw: usize,
    pub t_out: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl Conv3dGeom {
    pub fn new(
        x_shape: &[usize],
        w_shape: &[usize],
        stride: (usize, usize, usize),
        pad: (usize, usize, usize),
    ) -> Result<Self> {
        if x_shape.len() != 5 || w_shape.len() != 5 {
            return Err(Error::ShapeMismatch(format!(
                "conv3d expects N×C×T×H×W input and K×C×kt×kh×kw weight, got {:?} and {:?}",
                x_shape, w_shape
            )));
        }
        if x_shape[1] != w_shape[1] {
            return Err(Error::ShapeMismatch(format!(
                "conv3d channel disagreement: input C={} vs weight C={}",
                x_shape[1], w_shape[1]
            )));
        }
        Ok(Conv3dGeom {
            n: x_shape[0],
            c_in: x_shape[1],
            t: x_shape[2],
            h: x_shape[3],
            w: x_shape[4],
            c_out: w_shape[0],
            kt: w_shape[2],
            kh: w_shape[3],
            kw: w_shape[4],
            st: stride.0,
            sh: stride.1,
            sw: stride.2,
            pt: pad.0,
            ph: pad.1,
            pw: pad.2,
            t_out: out_dim(x_shape[2], w_shape[2], stride.0, pad.0)?,
            h_out: out_dim(x_shape[3], w_shape[3], stride.1, pad.1)?,
            w_out: out_dim(x_shape[4], w_shape[4], stride.2, pad.2)?,
        })
    }

    pub fn k_dim(&self) -> usize {
        self.c_in * self.kt * self.kh * self.kw
    }

    pub fn cols(&self) -> usize {
        self.t_out * self.h_out * self.w_out
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.n, self.c_out, self.t_out, self.h_out, self.w_out]
    }

    fn vol(&self) -> usize {
        self.t * self.h * self.w
    }
}

pub fn im2col_3d<T: Real>(x: &[T], g: &Conv3dGeom, col: &mut [T]) {
    let ncols = g.cols();
    let plane = g.h * g.w;
    let vol = g.vol();
    let mut row = 0;
    for c in 0..g.c_in {
        let xc = &x[c * vol..(c + 1) * vol];
        for kt in 0..g.kt {
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let out_row = &mut col[row * ncols..(row + 1) * ncols];
                    let (j_lo, j_hi) = tap_range(g.w, g.w_out, kj, g.sw, g.pw);
                    for ot in 0..g.t_out {
                        let tt = (ot * g.st + kt) as isize - g.pt as isize;
                        let t_ok = tt >= 0 && tt < g.t as isize;
                        for oi in 0..g.h_out {
                            let dst_base = (ot * g.h_out + oi) * g.w_out;
                            let dst = &mut out_row[dst_base..dst_base + g.w_out];
                            let ii = (oi * g.sh + ki) as isize - g.ph as isize;
                            if !t_ok || ii < 0 || ii >= g.h as isize {
                                dst.fill(T::zero());
                                continue;
                            }
                            let base = tt as usize * plane + ii as usize * g.w;
                            dst[..j_lo].fill(T::zero());
                            dst[j_hi..].fill(T::zero());
                            if g.sw == 1 {
                                let src0 = base + j_lo + kj - g.pw;
                                dst[j_lo..j_hi]
                                    .copy_from_slice(&xc[src0..src0 + (j_hi - j_lo)]);
                            } else {
                                for oj in j_lo..j_hi {
                                    dst[oj] = xc[base + oj * g.sw + kj - g.pw];
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

pub fn col2im_3d<T: Real>(col: &[T], g: &Conv3dGeom, x: &mut [T]) {
    let ncols = g.cols();
    let plane = g.h * g.w;
    let vol = g.vol();
    let mut row = 0;
    for c in 0..g.c_in {
        let xc = &mut x[c * vol..(c + 1) * vol];
        for kt in 0..g.kt {
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let src_row = &col[row * ncols..(row + 1) * ncols];
                    let (j_lo, j_hi) = tap_range(g.w, g.w_out, kj, g.sw, g.pw);
                    for ot in 0..g.t_out {
                        let tt = (ot * g.st + kt) as isize - g.pt as isize;
                        if tt < 0 || tt >= g.t as isize {
                            continue;
                        }
                        for oi in 0..g.h_out {
                            let ii = (oi * g.sh + ki) as isize - g.ph as isize;
                            if ii < 0 || ii >= g.h as isize {
                                continue;
                            }
                            let base = tt as usize * plane + ii as usize * g.w;
                            let src = &src_row[(ot * g.h_out + oi) * g.w_out..][..g.w_out];
                            for oj in j_lo..j_hi {
                                let xi = base + oj * g.sw + kj - g.pw;
                                xc[xi] = xc[xi] + src[oj];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

pub fn conv3d_forward<T: Real>(x: &[T], w: &[T], b: Option<&[T]>, g: &Conv3dGeom) -> Vec<T> {
    let ncols = g.cols();
    let k_dim = g.k_dim();
    let mut y = vec![T::zero(); g.n * g.c_out * ncols];
    let mut col = vec![T::zero(); k_dim * ncols];
    for n in 0..g.n {
        let xn = &x[n * g.c_in * g.vol()..(n + 1) * g.c_in * g.vol()];
        im2col_3d(xn, g, &mut col);
        let yn = &mut y[n * g.c_out * ncols..(n + 1) * g.c_out * ncols];
        if let Some(bias) = b {
            for m in 0..g.c_out {
                yn[m * ncols..(m + 1) * ncols].fill(bias[m]);
            }
        }
        gemm_acc(g.c_out, k_dim, ncols, w, &col, yn);
    }
    y
}

pub fn conv3d_backward_input<T: Real>(dy: &[T], w: &[T], g: &Conv3dGeom, dx: &mut [T]) {
    let ncols = g.cols();
    let k_dim = g.k_dim();
    let mut wt = vec![T::zero(); k_dim * g.c_out];
    for m in 0..g.c_out {
        for k in 0..k_dim {
            wt[k * g.c_out + m] = w[m * k_dim + k];
        }
    }
    let mut colg = vec![T::zero(); k_dim * ncols];
    for n in 0..g.n {
        colg.fill(T::zero());
        let dyn_ = &dy[n * g.c_out * ncols..(n + 1) * g.c_out * ncols];
        gemm_acc(k_dim, g.c_out, ncols, &wt, dyn_, &mut colg);
        let dxn = &mut dx[n * g.c_in * g.vol()..(n + 1) * g.c_in * g.vol()];
        col2im_3d(&colg, g, dxn);
    }
}

pub fn conv3d_backward_weight<T: Real>(
    x: &[T],
    dy: &[T],
    g: &Conv3dGeom,
    dw: &mut [T],
    db: Option<&mut [T]>,
) {
    let ncols = g.cols();
    let k_dim = g.k_dim();
    let mut col = vec![T::zero(); k_dim * ncols];
    for n in 0..g.n {
        let xn = &x[n * g.c_in * g.vol()..(n + 1) * g.c_in * g.vol()];
        im2col_3d(xn, g, &mut col);
        let dyn_ = &dy[n * g.c_out * ncols..(n + 1) * g.c_out * ncols];
        dot_rows(g.c_out, k_dim, ncols, dyn_, &col, dw);
    }
    if let Some(db) = db {
        for n in 0..g.n {
            for m in 0..g.c_out {
                let row = &dy[(n * g.c_out + m) * ncols..(n * g.c_out + m + 1) * ncols];
                let s: T = row.iter().copied().sum();
                db[m] = db[m] + s;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_dim_floor_law() {
        // (64 + 2 - 3) / 2 + 1 = 32
        assert_eq!(out_dim(64, 3, 2, 1).unwrap(), 32);
        assert_eq!(out_dim(23, 3, 2, 1).unwrap(), 12);
        assert!(out_dim(2, 5, 1, 0).is_err());
    }

    #[test]
    fn tap_range_matches_bruteforce() {
        for &(extent, out, k, s, p) in &[
            (8usize, 8usize, 0usize, 1usize, 1usize),
            (8, 8, 2, 1, 1),
            (8, 4, 0, 2, 1),
            (8, 4, 3, 2, 1),
            (5, 3, 1, 2, 0),
            (1, 1, 0, 2, 1),
        ] {
            let (lo, hi) = tap_range(extent, out, k, s, p);
            for oj in 0..out {
                let jj = (oj * s + k) as isize - p as isize;
                let valid = jj >= 0 && (jj as usize) < extent;
                assert_eq!(
                    valid,
                    oj >= lo && oj < hi,
                    "extent={extent} out={out} k={k} s={s} p={p} oj={oj}"
                );
            }
        }
    }
}
