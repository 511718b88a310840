//! Per-sample convolution via patch unrolling, and max pooling.
//!
//! A sample's feature map is `[c, h, w]` row-major. The unrolled patch
//! matrix has `c_in·k²` rows and `h_out·w_out` columns, so the convolution
//! is the product `W[c_out × c_in·k²] · cols`.

use super::layer::{ConvGeom, PoolGeom};
use crate::numkit::Scalar;

pub(crate) fn im2col<T: Scalar>(g: &ConvGeom, x: &[T], cols: &mut [T]) {
    let (k, hw_out) = (g.kernel, g.out_pixels());
    for c in 0..g.c_in {
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * hw_out..(row + 1) * hw_out];
                for oy in 0..g.h_out {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    for ox in 0..g.w_out {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        dst[oy * g.w_out + ox] =
                            if iy < 0 || ix < 0 || iy as usize >= g.h_in || ix as usize >= g.w_in {
                                T::zero()
                            } else {
                                x[(c * g.h_in + iy as usize) * g.w_in + ix as usize]
                            };
                    }
                }
            }
        }
    }
}

/// Adjoint of `im2col`: scatters patch columns back, summing overlaps.
pub(crate) fn col2im<T: Scalar>(g: &ConvGeom, cols: &[T], x: &mut [T]) {
    x.iter_mut().for_each(|v| *v = T::zero());
    let (k, hw_out) = (g.kernel, g.out_pixels());
    for c in 0..g.c_in {
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * hw_out..(row + 1) * hw_out];
                for oy in 0..g.h_out {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy as usize >= g.h_in {
                        continue;
                    }
                    for ox in 0..g.w_out {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix < 0 || ix as usize >= g.w_in {
                            continue;
                        }
                        x[(c * g.h_in + iy as usize) * g.w_in + ix as usize] += src[oy * g.w_out + ox];
                    }
                }
            }
        }
    }
}

/// Max pooling of one sample. `argmax[o]` is the flat input index of output
/// `o`; ties go to the first maximum in row-major window order.
pub(crate) fn max_pool<T: Scalar>(g: &PoolGeom, x: &[T], y: &mut [T], argmax: &mut [u32]) {
    for c in 0..g.channels {
        for oy in 0..g.h_out {
            for ox in 0..g.w_out {
                let mut best = usize::MAX;
                for wy in 0..g.window {
                    for wx in 0..g.window {
                        let idx = (c * g.h_in + oy * g.stride + wy) * g.w_in + ox * g.stride + wx;
                        if best == usize::MAX || x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                let o = (c * g.h_out + oy) * g.w_out + ox;
                y[o] = x[best];
                argmax[o] = best as u32;
            }
        }
    }
}

/// Transpose of the pooling Jacobian: routes each output gradient to its
/// selected input.
pub(crate) fn unpool<T: Scalar>(dy: &[T], argmax: &[u32], dx: &mut [T]) {
    dx.iter_mut().for_each(|v| *v = T::zero());
    for (&g, &i) in dy.iter().zip(argmax) {
        dx[i as usize] += g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(c_in: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> ConvGeom {
        let h_out = (h + 2 * pad - k) / stride + 1;
        let w_out = (w + 2 * pad - k) / stride + 1;
        ConvGeom { c_in, c_out: 1, h_in: h, w_in: w, kernel: k, stride, pad, h_out, w_out }
    }

    // ⟨im2col(x), c⟩ == ⟨x, col2im(c)⟩ for arbitrary x, c.
    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = geom(2, 5, 4, 3, 2, 1);
        let x: Vec<f64> = (0..2 * 5 * 4).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let cl = g.patch_len() * g.out_pixels();
        let c: Vec<f64> = (0..cl).map(|i| ((i * 13 % 7) as f64) - 3.0).collect();
        let mut cols = vec![0.0; cl];
        im2col(&g, &x, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&g, &c, &mut back);
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn pool_two_by_two() {
        let g = PoolGeom { channels: 1, h_in: 2, w_in: 2, window: 2, stride: 2, h_out: 1, w_out: 1 };
        let mut y = [0.0f64];
        let mut arg = [0u32];
        max_pool(&g, &[1.0, 2.0, 3.0, 4.0], &mut y, &mut arg);
        assert_eq!((y[0], arg[0]), (4.0, 3));
        let mut dx = [9.0; 4];
        unpool(&[5.0], &arg, &mut dx);
        assert_eq!(dx, [0.0, 0.0, 0.0, 5.0]);
    }
}
