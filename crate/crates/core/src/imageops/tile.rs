use crate::raster::{Raster, Real};

/// Tiles `patch` over an `h x w` canvas anchored at the origin:
/// `out[m, n] = patch[m % s, n % s]`.
pub fn tile<T: Real>(patch: &Raster<T>, h: usize, w: usize) -> Raster<T> {
    tile_with_phase(patch, h, w, 0, 0)
}

/// Tiling whose origin is shifted by `(oy, ox)`:
/// `out[m, n] = patch[(m + oy) % s, (n + ox) % s]`.
pub fn tile_with_phase<T: Real>(
    patch: &Raster<T>,
    h: usize,
    w: usize,
    oy: usize,
    ox: usize,
) -> Raster<T> {
    let s = patch.height();
    assert_eq!(s, patch.width(), "patch must be square");
    if s >= h.min(w) && h.min(w) > 0 {
        log::warn!("patch side {s} is not smaller than the {h}x{w} target");
    }
    let mut out = Vec::with_capacity(h * w);
    for m in 0..h {
        let row = &patch.as_slice()[((m + oy) % s) * s..][..s];
        out.extend((0..w).map(|n| row[(n + ox) % s]));
    }
    Raster::from_vec(h, w, out)
}

/// Adjoint of [`tile`]: each patch cell collects the gradient of every copy.
pub fn tile_adjoint<T: Real>(grad: &Raster<T>, s: usize) -> Raster<T> {
    let mut out = Raster::filled(s, s, T::zero());
    let acc = out.as_mut_slice();
    let w = grad.width();
    for (m, row) in grad.as_slice().chunks_exact(w.max(1)).enumerate() {
        let base = (m % s) * s;
        for (n, &g) in row.iter().enumerate() {
            acc[base + n % s] = acc[base + n % s] + g;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_fill() {
        let p = Raster::filled(3, 3, 1.0f32);
        assert_eq!(tile(&p, 7, 5), Raster::filled(7, 5, 1.0));
    }

    #[test]
    fn two_by_two_into_three_by_three() {
        let p = Raster::from_vec(2, 2, vec![1.0f64, 2.0, 3.0, 4.0]);
        let t = tile(&p, 3, 3);
        assert_eq!(t.as_slice(), &[1.0, 2.0, 1.0, 3.0, 4.0, 3.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn single_tile_is_identity() {
        let p = Raster::from_fn(4, 4, |y, x| (y * 4 + x) as f32);
        assert_eq!(tile(&p, 4, 4), p);
    }

    #[test]
    fn phase_shift() {
        let p = Raster::from_vec(2, 2, vec![1.0f32, 2.0, 3.0, 4.0]);
        let t = tile_with_phase(&p, 2, 3, 1, 1);
        assert_eq!(t.as_slice(), &[4.0, 3.0, 4.0, 2.0, 1.0, 2.0]);
    }

    #[test]
    fn adjoint_counts_copies() {
        let g = Raster::filled(5, 7, 1.0f64);
        let a = tile_adjoint(&g, 3);
        // rows 0,1 appear twice and row 2 once; columns 0 appears 3x, 1 and 2 twice.
        assert_eq!(a.get(0, 0), 6.0);
        assert_eq!(a.get(0, 1), 4.0);
        assert_eq!(a.get(2, 0), 3.0);
        assert_eq!(a.get(2, 2), 2.0);
        assert_eq!(a.as_slice().iter().sum::<f64>(), 35.0);
    }
}
