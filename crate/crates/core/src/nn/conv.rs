//! im2col helpers for 3×3, stride 1, zero-padded convolutions.
//!
//! Column layout: row `ci*9 + ky*3 + kx`, column `y*w + x`, which matches the
//! `[out, in, 3, 3]` weight layout flattened to `[out, in*9]`.

use crate::tensor::Real;

pub(crate) fn im2col<F: Real>(x: &[F], c: usize, h: usize, w: usize, cols: &mut [F]) {
    let hw = h * w;
    debug_assert_eq!(x.len(), c * hw);
    debug_assert_eq!(cols.len(), c * 9 * hw);
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    let out = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        out.fill(F::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (xx, o) in out.iter_mut().enumerate() {
                        let sx = xx as isize + kx as isize - 1;
                        *o = if sx < 0 || sx >= w as isize {
                            F::zero()
                        } else {
                            src[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adds the column gradients back onto the input gradient (the adjoint of
/// [`im2col`]).
pub(crate) fn col2im_add<F: Real>(cols: &[F], c: usize, h: usize, w: usize, dx: &mut [F]) {
    let hw = h * w;
    debug_assert_eq!(dx.len(), c * hw);
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for xx in 0..w {
                        let sx = xx as isize + kx as isize - 1;
                        if sx >= 0 && sx < w as isize {
                            plane[sy as usize * w + sx as usize] += row[y * w + xx];
                        }
                    }
                }
            }
        }
    }
}
