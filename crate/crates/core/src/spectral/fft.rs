//! Tiled in-place multidimensional FFT.
//!
//! The grid is `res^axes` complex values, row-major, last axis contiguous.
//! Each axis pass runs length-`res` transforms along that axis. Strided axes
//! are processed through small gather/scatter tiles (TILE columns at a time)
//! so the working set stays cache-resident; at res = 64 a tile is 64 KiB.
//! Tiles write disjoint index sets, so tile tasks parallelize without locks
//! and every element's value is independent of the thread count.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

const TILE: usize = 64;

pub struct NdFft {
    res: usize,
    axes: usize,
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

struct SendPtr(*mut Complex64);
unsafe impl Send for SendPtr {}
unsafe impl Sync for SendPtr {}

impl SendPtr {
    /// Tile tasks write disjoint index sets; the caller guarantees it.
    unsafe fn at(&self, i: usize) -> *mut Complex64 {
        self.0.add(i)
    }
}

impl NdFft {
    pub fn new(res: usize, axes: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(res);
        let inv = planner.plan_fft_inverse(res);
        NdFft { res, axes, len: res.pow(axes as u32), fwd, inv }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    /// Unnormalized transform along all axes, in place. The inverse of
    /// `forward` is `inverse` followed by a 1/len scale (callers fold the
    /// scale into their extraction step).
    pub fn transform(&self, data: &mut [Complex64], inverse: bool) {
        assert_eq!(data.len(), self.len);
        for axis in 0..self.axes {
            self.pass(data, axis, inverse);
        }
    }

    fn pass(&self, data: &mut [Complex64], axis: usize, inverse: bool) {
        let r = self.res;
        let stride = r.pow((self.axes - 1 - axis) as u32);
        let fft = if inverse { self.inv.clone() } else { self.fwd.clone() };
        let scratch_len = fft.get_inplace_scratch_len();

        if stride == 1 {
            let lines_per_task = (1usize << 18) / r.max(1);
            let chunk = r * lines_per_task.max(1);
            data.par_chunks_mut(chunk).for_each_init(
                || vec![Complex64::default(); scratch_len],
                |scratch, chunk| {
                    fft.process_with_scratch(chunk, scratch);
                },
            );
            return;
        }

        // Blocks of r*stride elements hold `stride` interleaved lines each.
        let block = r * stride;
        let nblocks = self.len / block;
        let tile = TILE.min(stride);
        let tiles_per_block = stride.div_ceil(tile);
        let ptr = SendPtr(data.as_mut_ptr());

        (0..nblocks * tiles_per_block).into_par_iter().for_each_init(
            || {
                (
                    vec![Complex64::default(); tile * r],
                    vec![Complex64::default(); scratch_len],
                )
            },
            |(buf, scratch), task| {
                let b = task / tiles_per_block;
                let t0 = (task % tiles_per_block) * tile;
                let tw = tile.min(stride - t0);
                let base = unsafe { ptr.at(b * block) };
                // gather: buf[t*r + k] = block[k*stride + t0 + t]
                for k in 0..r {
                    let src = unsafe { base.add(k * stride + t0) };
                    for t in 0..tw {
                        buf[t * r + k] = unsafe { *src.add(t) };
                    }
                }
                fft.process_with_scratch(&mut buf[..tw * r], scratch);
                for k in 0..r {
                    let dst = unsafe { base.add(k * stride + t0) };
                    for t in 0..tw {
                        unsafe {
                            *dst.add(t) = buf[t * r + k];
                        }
                    }
                }
            },
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(src: &[Complex64], res: usize, axes: usize, inverse: bool) -> Vec<Complex64> {
        let len = src.len();
        let sign = if inverse { 1.0 } else { -1.0 };
        let idx = |flat: usize| -> Vec<usize> {
            let mut v = vec![0; axes];
            let mut f = flat;
            for a in (0..axes).rev() {
                v[a] = f % res;
                f /= res;
            }
            v
        };
        (0..len)
            .map(|out_flat| {
                let kv = idx(out_flat);
                let mut acc = Complex64::default();
                for (in_flat, s) in src.iter().enumerate() {
                    let xv = idx(in_flat);
                    let phase: f64 = kv
                        .iter()
                        .zip(&xv)
                        .map(|(&k, &x)| (k * x) as f64 / res as f64)
                        .sum();
                    acc += s * Complex64::from_polar(1.0, sign * std::f64::consts::TAU * phase);
                }
                acc
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft_2d() {
        let res = 8;
        let mut data: Vec<Complex64> = (0..res * res)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let want = naive_dft(&data, res, 2, false);
        NdFft::new(res, 2).transform(&mut data, false);
        for (a, b) in data.iter().zip(&want) {
            assert!((a - b).norm() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn matches_naive_dft_4d() {
        let res = 8;
        let len = res * res * res * res;
        let mut data: Vec<Complex64> = (0..len)
            .map(|i| Complex64::new((i as f64 * 0.131).sin(), (i as f64 * 0.071).cos()))
            .collect();
        let want = naive_dft(&data, res, 4, false);
        NdFft::new(res, 4).transform(&mut data, false);
        for (a, b) in data.iter().zip(&want) {
            assert!((a - b).norm() < 1e-6 * len as f64, "{a} vs {b}");
        }
    }

    #[test]
    fn forward_inverse_roundtrip() {
        let res = 16;
        let fft = NdFft::new(res, 2);
        let orig: Vec<Complex64> = (0..res * res)
            .map(|i| Complex64::new((i as f64).sin(), 0.0))
            .collect();
        let mut data = orig.clone();
        fft.transform(&mut data, false);
        fft.transform(&mut data, true);
        let scale = 1.0 / (res * res) as f64;
        for (a, b) in data.iter().zip(&orig) {
            assert!((a * scale - b).norm() < 1e-12);
        }
    }
}
