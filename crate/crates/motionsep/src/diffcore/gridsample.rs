//! Bilinear grid sampling with border clamping.
//!
//! `field` is H×W×C (channel-last), `grid` holds pixel-unit (x, y) pairs.
//! Out-of-range coordinates clamp to the border; the sample is differentiable
//! with respect to both the field and the grid, with zero coordinate gradient
//! in the clamped region.

use super::tensor::Real;

#[derive(Clone, Copy)]
struct Corners {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    fx: f64,
    fy: f64,
    x_clamped: bool,
    y_clamped: bool,
}

fn corners<T: Real>(x: T, y: T, h: usize, w: usize) -> Corners {
    let xf = x.to_f64().unwrap();
    let yf = y.to_f64().unwrap();
    let xmax = (w - 1) as f64;
    let ymax = (h - 1) as f64;
    let xc = xf.clamp(0.0, xmax);
    let yc = yf.clamp(0.0, ymax);
    let x0 = (xc.floor() as usize).min(w - 1);
    let y0 = (yc.floor() as usize).min(h - 1);
    Corners {
        x0,
        x1: (x0 + 1).min(w - 1),
        y0,
        y1: (y0 + 1).min(h - 1),
        fx: xc - x0 as f64,
        fy: yc - y0 as f64,
        x_clamped: xf < 0.0 || xf > xmax,
        y_clamped: yf < 0.0 || yf > ymax,
    }
}

/// Sample `field` (h×w×c) at every grid point (hg×wg×2); output hg×wg×c.
pub fn grid_sample_forward<T: Real>(
    field: &[T],
    h: usize,
    w: usize,
    c: usize,
    grid: &[T],
    hg: usize,
    wg: usize,
) -> Vec<T> {
    let mut out = vec![T::zero(); hg * wg * c];
    for p in 0..hg * wg {
        let cs = corners(grid[2 * p], grid[2 * p + 1], h, w);
        let (fx, fy) = (T::from_f64c(cs.fx), T::from_f64c(cs.fy));
        let one = T::one();
        let w00 = (one - fy) * (one - fx);
        let w01 = (one - fy) * fx;
        let w10 = fy * (one - fx);
        let w11 = fy * fx;
        let b00 = (cs.y0 * w + cs.x0) * c;
        let b01 = (cs.y0 * w + cs.x1) * c;
        let b10 = (cs.y1 * w + cs.x0) * c;
        let b11 = (cs.y1 * w + cs.x1) * c;
        let dst = &mut out[p * c..(p + 1) * c];
        for ch in 0..c {
            dst[ch] = w00 * field[b00 + ch]
                + w01 * field[b01 + ch]
                + w10 * field[b10 + ch]
                + w11 * field[b11 + ch];
        }
    }
    out
}

/// Accumulate the field gradient: `dfield += ∂out/∂field · gout`.
pub fn grid_sample_backward_field<T: Real>(
    gout: &[T],
    h: usize,
    w: usize,
    c: usize,
    grid: &[T],
    hg: usize,
    wg: usize,
    dfield: &mut [T],
) {
    for p in 0..hg * wg {
        let cs = corners(grid[2 * p], grid[2 * p + 1], h, w);
        let (fx, fy) = (T::from_f64c(cs.fx), T::from_f64c(cs.fy));
        let one = T::one();
        let w00 = (one - fy) * (one - fx);
        let w01 = (one - fy) * fx;
        let w10 = fy * (one - fx);
        let w11 = fy * fx;
        let b00 = (cs.y0 * w + cs.x0) * c;
        let b01 = (cs.y0 * w + cs.x1) * c;
        let b10 = (cs.y1 * w + cs.x0) * c;
        let b11 = (cs.y1 * w + cs.x1) * c;
        let g = &gout[p * c..(p + 1) * c];
        for ch in 0..c {
            dfield[b00 + ch] = dfield[b00 + ch] + w00 * g[ch];
            dfield[b01 + ch] = dfield[b01 + ch] + w01 * g[ch];
            dfield[b10 + ch] = dfield[b10 + ch] + w10 * g[ch];
            dfield[b11 + ch] = dfield[b11 + ch] + w11 * g[ch];
        }
    }
}

/// Accumulate the grid gradient: `dgrid += ∂out/∂(x,y) · gout`.
pub fn grid_sample_backward_grid<T: Real>(
    gout: &[T],
    field: &[T],
    h: usize,
    w: usize,
    c: usize,
    grid: &[T],
    hg: usize,
    wg: usize,
    dgrid: &mut [T],
) {
    for p in 0..hg * wg {
        let cs = corners(grid[2 * p], grid[2 * p + 1], h, w);
        let (fx, fy) = (T::from_f64c(cs.fx), T::from_f64c(cs.fy));
        let one = T::one();
        let b00 = (cs.y0 * w + cs.x0) * c;
        let b01 = (cs.y0 * w + cs.x1) * c;
        let b10 = (cs.y1 * w + cs.x0) * c;
        let b11 = (cs.y1 * w + cs.x1) * c;
        let g = &gout[p * c..(p + 1) * c];
        let mut dx = T::zero();
        let mut dy = T::zero();
        for ch in 0..c {
            let f00 = field[b00 + ch];
            let f01 = field[b01 + ch];
            let f10 = field[b10 + ch];
            let f11 = field[b11 + ch];
            dx = dx + g[ch] * ((one - fy) * (f01 - f00) + fy * (f11 - f10));
            dy = dy + g[ch] * ((one - fx) * (f10 - f00) + fx * (f11 - f01));
        }
        if !cs.x_clamped {
            dgrid[2 * p] = dgrid[2 * p] + dx;
        }
        if !cs.y_clamped {
            dgrid[2 * p + 1] = dgrid[2 * p + 1] + dy;
        }
    }
}
