//! Raw NCHW kernels on slices. The tape in [`super::graph`] owns shapes and
//! bookkeeping; everything here is shape-checked by the caller.

use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.kw) / self.stride + 1
    }

    fn col_rows(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.out_h() * self.out_w()
    }

    fn in_image(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    /// 1×1, stride 1, no padding: the input image already is the column matrix.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

fn im2col(g: &ConvGeom, x: &[f32], cols: &mut [f32]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane = oh * ow;
    for c in 0..g.in_c {
        let xc = &x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let drow = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= g.in_h as isize {
                        drow.fill(0.0);
                        continue;
                    }
                    let src = &xc[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.in_w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(g: &ConvGeom, cols: &[f32], dx: &mut [f32]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane = oh * ow;
    for c in 0..g.in_c {
        let dxc = &mut dx[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let drow = &mut dxc[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.in_w {
                            drow[ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `c[m×n] = a[m×k]·b[k×n] (+ c if accumulate)` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    c: &mut [f32],
    accumulate: bool,
) {
    debug_assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    debug_assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index touched by sgemm; the
    // output is a distinct, densely packed m×n slice.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            if accumulate { 1.0 } else { 0.0 },
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Cross-correlation via im2col + GEMM, one image per task.
pub fn conv2d_forward(g: &ConvGeom, x: &[f32], w: &[f32], bias: Option<&[f32]>) -> Vec<f32> {
    let plane = g.out_plane();
    let rows = g.col_rows();
    let mut out = vec![0.0f32; g.batch * g.out_c * plane];
    out.par_chunks_mut(g.out_c * plane)
        .enumerate()
        .for_each(|(n, y)| {
            let xi = &x[n * g.in_image()..(n + 1) * g.in_image()];
            if g.is_pointwise() {
                gemm(g.out_c, rows, plane, w, (rows, 1), xi, (plane, 1), y, false);
            } else {
                let mut cols = vec![0.0f32; rows * plane];
                im2col(g, xi, &mut cols);
                gemm(
                    g.out_c,
                    rows,
                    plane,
                    w,
                    (rows, 1),
                    &cols,
                    (plane, 1),
                    y,
                    false,
                );
            }
            if let Some(b) = bias {
                for (k, yk) in y.chunks_mut(plane).enumerate() {
                    yk.iter_mut().for_each(|v| *v += b[k]);
                }
            }
        });
    out
}

pub struct ConvGrads {
    pub dx: Option<Vec<f32>>,
    pub dw: Vec<f32>,
    pub db: Vec<f32>,
}

/// Gradients of [`conv2d_forward`]. Weight gradients are formed per image
/// and reduced in image order, so the result does not depend on how many
/// threads ran the per-image work.
pub fn conv2d_backward(g: &ConvGeom, x: &[f32], w: &[f32], dy: &[f32], need_dx: bool) -> ConvGrads {
    let plane = g.out_plane();
    let rows = g.col_rows();
    let wlen = g.out_c * rows;
    let per_image: Vec<(Vec<f32>, Option<Vec<f32>>)> = (0..g.batch)
        .into_par_iter()
        .map(|n| {
            let xi = &x[n * g.in_image()..(n + 1) * g.in_image()];
            let dyi = &dy[n * g.out_c * plane..(n + 1) * g.out_c * plane];
            let mut dw = vec![0.0f32; wlen];
            let pointwise = g.is_pointwise();
            let cols_owned;
            let cols: &[f32] = if pointwise {
                xi
            } else {
                let mut c = vec![0.0f32; rows * plane];
                im2col(g, xi, &mut c);
                cols_owned = c;
                &cols_owned
            };
            // dW = dY · colsᵀ
            gemm(
                g.out_c,
                plane,
                rows,
                dyi,
                (plane, 1),
                cols,
                (1, plane),
                &mut dw,
                false,
            );
            let dx = need_dx.then(|| {
                let mut dcols = vec![0.0f32; rows * plane];
                // dcols = Wᵀ · dY
                gemm(
                    rows,
                    g.out_c,
                    plane,
                    w,
                    (1, rows),
                    dyi,
                    (plane, 1),
                    &mut dcols,
                    false,
                );
                if pointwise {
                    dcols
                } else {
                    let mut dxi = vec![0.0f32; g.in_image()];
                    col2im(g, &dcols, &mut dxi);
                    dxi
                }
            });
            (dw, dx)
        })
        .collect();

    let mut dw = vec![0.0f32; wlen];
    let mut db = vec![0.0f32; g.out_c];
    let mut dx = need_dx.then(|| Vec::with_capacity(g.batch * g.in_image()));
    for (n, (dwi, dxi)) in per_image.into_iter().enumerate() {
        dw.iter_mut().zip(&dwi).for_each(|(a, b)| *a += b);
        if let (Some(all), Some(part)) = (dx.as_mut(), dxi) {
            all.extend_from_slice(&part);
        }
        let dyi = &dy[n * g.out_c * plane..(n + 1) * g.out_c * plane];
        for (k, row) in dyi.chunks(plane).enumerate() {
            db[k] += row.iter().sum::<f32>();
        }
    }
    ConvGrads { dx, dw, db }
}

/// Direct six-loop cross-correlation. Reference for the GEMM path.
pub fn conv2d_naive(g: &ConvGeom, x: &[f32], w: &[f32], bias: Option<&[f32]>) -> Vec<f32> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut out = vec![0.0f32; g.batch * g.out_c * oh * ow];
    for n in 0..g.batch {
        for k in 0..g.out_c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(0.0, |b| b[k]);
                    for c in 0..g.in_c {
                        for ki in 0..g.kh {
                            for kj in 0..g.kw {
                                let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                                let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                                if iy < 0
                                    || ix < 0
                                    || iy >= g.in_h as isize
                                    || ix >= g.in_w as isize
                                {
                                    continue;
                                }
                                let xv = x[((n * g.in_c + c) * g.in_h + iy as usize) * g.in_w
                                    + ix as usize];
                                let wv = w[((k * g.in_c + c) * g.kh + ki) * g.kw + kj];
                                acc += xv * wv;
                            }
                        }
                    }
                    out[((n * g.out_c + k) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f32>,
    /// Biased (population) variance of the batch.
    pub var: Vec<f32>,
}

/// Per-channel mean and biased variance over N, H, W.
pub fn channel_stats(x: &[f32], n: usize, c: usize, plane: usize) -> BatchStats {
    let count = (n * plane) as f64;
    let mut mean = vec![0.0f32; c];
    let mut var = vec![0.0f32; c];
    for ch in 0..c {
        let mut s = 0.0f64;
        for b in 0..n {
            let off = (b * c + ch) * plane;
            s += x[off..off + plane].iter().map(|&v| v as f64).sum::<f64>();
        }
        let m = s / count;
        let mut ss = 0.0f64;
        for b in 0..n {
            let off = (b * c + ch) * plane;
            ss += x[off..off + plane]
                .iter()
                .map(|&v| {
                    let d = v as f64 - m;
                    d * d
                })
                .sum::<f64>();
        }
        mean[ch] = m as f32;
        var[ch] = (ss / count) as f32;
    }
    BatchStats { mean, var }
}

/// Folds batch statistics into running estimates:
/// `running = (1 − momentum)·running + momentum·batch`. The variance folded
/// in is the unbiased estimate over `count` values.
pub fn fold_running(
    running_mean: &mut [f32],
    running_var: &mut [f32],
    batch: &BatchStats,
    count: usize,
    momentum: f32,
) {
    let correction = if count > 1 {
        count as f32 / (count - 1) as f32
    } else {
        1.0
    };
    for (r, &b) in running_mean.iter_mut().zip(&batch.mean) {
        *r = (1.0 - momentum) * *r + momentum * b;
    }
    for (r, &b) in running_var.iter_mut().zip(&batch.var) {
        *r = (1.0 - momentum) * *r + momentum * b * correction;
    }
}

/// `y = gamma·(x − mean)·inv_std + beta` per channel.
pub fn normalize_affine(
    x: &[f32],
    n: usize,
    c: usize,
    plane: usize,
    mean: &[f32],
    inv_std: &[f32],
    gamma: &[f32],
    beta: &[f32],
) -> Vec<f32> {
    let mut y = vec![0.0f32; x.len()];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * plane;
            let (m, s, ga, be) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
            for (o, &v) in y[off..off + plane].iter_mut().zip(&x[off..off + plane]) {
                *o = (v - m) * s * ga + be;
            }
        }
    }
    y
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

pub fn sigmoid_f64(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn silu(x: f32) -> f32 {
    x * sigmoid(x)
}

pub fn silu_grad(x: f32) -> f32 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

#[derive(Debug, Clone, Copy)]
pub struct PoolGeom {
    pub batch: usize,
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl PoolGeom {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.k) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.k) / self.stride + 1
    }
}

/// Window maximum with −∞ padding. Returns values and the flat input index
/// of each maximum (first occurrence in row-major window order).
pub fn maxpool_forward(g: &PoolGeom, x: &[f32]) -> (Vec<f32>, Vec<u32>) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let planes = g.batch * g.channels;
    let mut out = vec![f32::NEG_INFINITY; planes * oh * ow];
    let mut arg = vec![u32::MAX; planes * oh * ow];
    for p in 0..planes {
        let base = p * g.in_h * g.in_w;
        for oy in 0..oh {
            for ox in 0..ow {
                let o = (p * oh + oy) * ow + ox;
                let mut best = f32::NEG_INFINITY;
                let mut best_i = u32::MAX;
                for ki in 0..g.k {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    for kj in 0..g.k {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix < 0 || ix >= g.in_w as isize {
                            continue;
                        }
                        let i = base + iy as usize * g.in_w + ix as usize;
                        if best_i == u32::MAX || x[i] > best {
                            best = x[i];
                            best_i = i as u32;
                        }
                    }
                }
                out[o] = best;
                arg[o] = best_i;
            }
        }
    }
    (out, arg)
}

pub fn upsample_nearest2x(x: &[f32], planes: usize, h: usize, w: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; planes * 4 * h * w];
    for p in 0..planes {
        for y in 0..h {
            let src = &x[(p * h + y) * w..(p * h + y + 1) * w];
            for dy in 0..2 {
                let row = (p * 2 * h + 2 * y + dy) * 2 * w;
                for (xx, &v) in src.iter().enumerate() {
                    out[row + 2 * xx] = v;
                    out[row + 2 * xx + 1] = v;
                }
            }
        }
    }
    out
}

pub fn upsample_nearest2x_backward(dy: &[f32], planes: usize, h: usize, w: usize) -> Vec<f32> {
    let mut dx = vec![0.0f32; planes * h * w];
    for p in 0..planes {
        for y in 0..h {
            for x in 0..w {
                let r0 = (p * 2 * h + 2 * y) * 2 * w + 2 * x;
                let r1 = r0 + 2 * w;
                dx[(p * h + y) * w + x] = dy[r0] + dy[r0 + 1] + dy[r1] + dy[r1 + 1];
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
        (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()
    }

    #[test]
    fn gemm_path_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(k, s, p) in &[
            (1, 1, 0),
            (3, 1, 1),
            (3, 2, 1),
            (5, 1, 2),
            (1, 2, 0),
            (2, 2, 0),
        ] {
            let g = ConvGeom {
                batch: 2,
                in_c: 3,
                in_h: 11,
                in_w: 9,
                out_c: 4,
                kh: k,
                kw: k,
                stride: s,
                pad: p,
            };
            let x = random(&mut rng, g.batch * g.in_image());
            let w = random(&mut rng, g.out_c * g.col_rows());
            let b = random(&mut rng, g.out_c);
            let fast = conv2d_forward(&g, &x, &w, Some(&b));
            let slow = conv2d_naive(&g, &x, &w, Some(&b));
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-5, "k={k} s={s} p={p}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn maxpool_ties_go_to_first() {
        let g = PoolGeom {
            batch: 1,
            channels: 1,
            in_h: 2,
            in_w: 2,
            k: 2,
            stride: 1,
            pad: 0,
        };
        let (v, a) = maxpool_forward(&g, &[3.0, 3.0, 3.0, 3.0]);
        assert_eq!(v, vec![3.0]);
        assert_eq!(a, vec![0]);
    }

    #[test]
    fn channel_stats_of_constant() {
        let s = channel_stats(&[2.0; 8], 2, 1, 4);
        assert_eq!(s.mean, vec![2.0]);
        assert_eq!(s.var, vec![0.0]);
    }
}
