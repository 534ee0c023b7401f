//! Parameter access for the SGD step: plain slices for the deterministic
//! single-worker path, relaxed atomics for shared multi-worker training.

use std::sync::atomic::{AtomicU32, Ordering};

pub trait ParamStore {
    fn load(&self, i: usize) -> f32;
    fn store(&mut self, i: usize, v: f32);
}

impl ParamStore for [f32] {
    #[inline]
    fn load(&self, i: usize) -> f32 {
        self[i]
    }

    #[inline]
    fn store(&mut self, i: usize, v: f32) {
        self[i] = v;
    }
}

/// Shared view over an `f32` buffer. Updates from concurrent workers may
/// interleave; no update is torn.
#[derive(Clone, Copy)]
pub struct SharedParams<'a> {
    cells: &'a [AtomicU32],
}

impl<'a> SharedParams<'a> {
    pub fn new(values: &'a mut [f32]) -> Self {
        // SAFETY: f32, u32 and AtomicU32 share size and alignment, and the
        // exclusive borrow guarantees no non-atomic access while `cells` lives.
        let cells = unsafe { &*(values as *mut [f32] as *const [AtomicU32]) };
        Self { cells }
    }
}

impl ParamStore for SharedParams<'_> {
    #[inline]
    fn load(&self, i: usize) -> f32 {
        f32::from_bits(self.cells[i].load(Ordering::Relaxed))
    }

    #[inline]
    fn store(&mut self, i: usize, v: f32) {
        self.cells[i].store(v.to_bits(), Ordering::Relaxed);
    }
}
