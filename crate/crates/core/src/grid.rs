//! Uniform tensor grids over the problem box.
//!
//! Coordinates are computed as `lo + (hi - lo) * (i / (res - 1))`, so the grid
//! with resolution `2^k + 1` is an exact subset of the one with `2^(k+1) + 1`.

/// `res` evenly spaced values on `[lo, hi]`, endpoints included.
pub fn coord(lo: f64, hi: f64, i: usize, res: usize) -> f64 {
    lo + (hi - lo) * (i as f64 / (res - 1) as f64)
}

#[derive(Debug, Clone)]
pub struct BoxGrid<'a> {
    bounds: &'a [(f64, f64)],
    res: usize,
}

impl<'a> BoxGrid<'a> {
    pub fn new(bounds: &'a [(f64, f64)], res: usize) -> BoxGrid<'a> {
        assert!(res >= 2, "grid resolution must be at least 2");
        BoxGrid { bounds, res }
    }

    pub fn len(&self) -> usize {
        self.res.pow(self.bounds.len() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point number `index` in lexicographic order (first coordinate slowest).
    pub fn point(&self, mut index: usize) -> Vec<f64> {
        let n = self.bounds.len();
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let i = index % self.res;
            index /= self.res;
            let (lo, hi) = self.bounds[k];
            x[k] = coord(lo, hi, i, self.res);
        }
        x
    }

    /// Smallest spacing over all coordinates.
    pub fn spacing(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| (hi - lo) / (self.res - 1) as f64).fold(f64::INFINITY, f64::min)
    }
}
