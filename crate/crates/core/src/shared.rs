//! Row-major `f64` matrix with relaxed atomic cells.
//!
//! Used by the SGD trainers so one code path serves both the deterministic
//! single-threaded mode and the lock-free parallel mode. In parallel mode
//! concurrent read-modify-write sequences on a row may lose updates; that is
//! accepted, only statistical properties are guaranteed there. Relaxed loads
//! and stores compile to plain moves on common targets.

use std::sync::atomic::{AtomicU64, Ordering};

pub struct SharedMatrix {
    cells: Vec<AtomicU64>,
    cols: usize,
}

impl SharedMatrix {
    pub fn from_rows(data: &[f64], cols: usize) -> Self {
        assert!(cols > 0 && data.len().is_multiple_of(cols));
        SharedMatrix {
            cells: data.iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
            cols,
        }
    }

    pub fn rows(&self) -> usize {
        self.cells.len() / self.cols
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn read_row(&self, row: usize, out: &mut [f64]) {
        let base = row * self.cols;
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = f64::from_bits(self.cells[base + k].load(Ordering::Relaxed));
        }
    }

    #[inline]
    pub fn add_to_row(&self, row: usize, delta: &[f64]) {
        let base = row * self.cols;
        for (k, d) in delta.iter().enumerate() {
            let cell = &self.cells[base + k];
            let v = f64::from_bits(cell.load(Ordering::Relaxed)) + d;
            cell.store(v.to_bits(), Ordering::Relaxed);
        }
    }

    #[inline]
    pub fn add_scaled_to_row(&self, row: usize, scale: f64, delta: &[f64]) {
        let base = row * self.cols;
        for (k, d) in delta.iter().enumerate() {
            let cell = &self.cells[base + k];
            let v = f64::from_bits(cell.load(Ordering::Relaxed)) + scale * d;
            cell.store(v.to_bits(), Ordering::Relaxed);
        }
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.cells
            .into_iter()
            .map(|c| f64::from_bits(c.into_inner()))
            .collect()
    }
}
