//! Partition of the real line into two tail cells and finitely many half-open interior cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BOUNDARY: f64 = 6.0;
pub const DEFAULT_INTERIOR_CELLS: usize = 120;

/// Cells (-inf, t_1), [t_1, t_2), ..., [t_{K-1}, inf).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    breakpoints: Vec<f64>,
}

impl BinGrid {
    /// Equispaced interior cells on [-M, M].
    pub fn uniform(boundary: f64, interior_cells: usize) -> Result<Self> {
        if !(boundary > 0.0 && boundary.is_finite()) {
            return Err(Error::InvalidInput(format!("bin boundary must be positive, got {boundary}")));
        }
        if interior_cells == 0 {
            return Err(Error::InvalidInput("at least one interior cell is required".into()));
        }
        let step = 2.0 * boundary / interior_cells as f64;
        let mut breakpoints: Vec<f64> =
            (0..=interior_cells).map(|i| -boundary + step * i as f64).collect();
        breakpoints[interior_cells] = boundary;
        Self::from_breakpoints(breakpoints)
    }

    pub fn default_grid() -> Self {
        Self::uniform(DEFAULT_BOUNDARY, DEFAULT_INTERIOR_CELLS).expect("default grid")
    }

    pub fn from_breakpoints(breakpoints: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::InvalidInput("bin grid needs at least one breakpoint".into()));
        }
        if breakpoints.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("bin breakpoints must be finite".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("bin breakpoints must be strictly increasing".into()));
        }
        Ok(BinGrid { breakpoints })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Number of cells K, tails included.
    pub fn len(&self) -> usize {
        self.breakpoints.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lower(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn upper(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Cell bounds, with infinite ends for the tails.
    pub fn cell(&self, k: usize) -> (f64, f64) {
        let lo = if k == 0 { f64::NEG_INFINITY } else { self.breakpoints[k - 1] };
        let hi = if k == self.breakpoints.len() { f64::INFINITY } else { self.breakpoints[k] };
        (lo, hi)
    }

    pub fn is_tail(&self, k: usize) -> bool {
        k == 0 || k == self.breakpoints.len()
    }

    /// Lebesgue width of an interior cell; 1 for the tails.
    pub fn localization_width(&self, k: usize) -> f64 {
        if self.is_tail(k) {
            1.0
        } else {
            self.breakpoints[k] - self.breakpoints[k - 1]
        }
    }

    /// Index of the cell containing x.
    pub fn locate(&self, x: f64) -> usize {
        self.breakpoints.partition_point(|&t| t <= x)
    }

    pub fn counts(&self, samples: &[f64]) -> Vec<usize> {
        let mut c = vec![0; self.len()];
        for &x in samples {
            c[self.locate(x)] += 1;
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_grid_shape() {
        let g = BinGrid::default_grid();
        assert_eq!(g.len(), 122);
        assert_eq!(g.lower(), -6.0);
        assert_eq!(g.upper(), 6.0);
        assert_eq!(g.cell(0).1, -6.0);
        assert_eq!(g.cell(121).0, 6.0);
        assert!((g.localization_width(5) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn half_open_cells() {
        let g = BinGrid::uniform(1.0, 2).unwrap();
        assert_eq!(g.locate(-1.0), 1);
        assert_eq!(g.locate(0.0), 2);
        assert_eq!(g.locate(1.0), 3);
        assert_eq!(g.locate(-1.0000001), 0);
    }

    #[test]
    fn rejects_bad_breakpoints() {
        assert!(BinGrid::from_breakpoints(vec![0.0, 0.0]).is_err());
        assert!(BinGrid::uniform(0.0, 10).is_err());
    }

    proptest! {
        #[test]
        fn locate_is_consistent_with_cells(x in -10.0f64..10.0, m in 0.5f64..8.0, n in 1usize..50) {
            let g = BinGrid::uniform(m, n).unwrap();
            let k = g.locate(x);
            let (lo, hi) = g.cell(k);
            prop_assert!(lo <= x && x < hi);
        }
    }
}
