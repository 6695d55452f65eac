//! Logical global-reduce accounting.
//!
//! Every fused inner-product volley that would need an all-reduce on a
//! distributed machine is recorded here as one event. Local work (triangular
//! solves, Householder QR of small matrices, vector updates) is free.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReducePhase {
    /// Block inner products against previously orthogonalized vectors.
    Projection,
    /// Gram matrix of a block, including fused Pythagorean volleys.
    Gram,
    /// Application of a random sketch.
    Sketch,
    /// Vector norms outside the block kernels (residual norms).
    Norm,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReduceLedger {
    projection: u64,
    gram: u64,
    sketch: u64,
    norm: u64,
}

impl ReduceLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, phase: ReducePhase) {
        *self.slot(phase) += 1;
    }

    pub fn count(&self, phase: ReducePhase) -> u64 {
        match phase {
            ReducePhase::Projection => self.projection,
            ReducePhase::Gram => self.gram,
            ReducePhase::Sketch => self.sketch,
            ReducePhase::Norm => self.norm,
        }
    }

    pub fn total(&self) -> u64 {
        self.projection + self.gram + self.sketch + self.norm
    }

    /// Adds the counts of `other` into `self`.
    pub fn absorb(&mut self, other: &ReduceLedger) {
        self.projection += other.projection;
        self.gram += other.gram;
        self.sketch += other.sketch;
        self.norm += other.norm;
    }

    /// Clears every counter. Only call this between runs.
    pub fn reset(&mut self) {
        *self = Self::default();
    }

    fn slot(&mut self, phase: ReducePhase) -> &mut u64 {
        match phase {
            ReducePhase::Projection => &mut self.projection,
            ReducePhase::Gram => &mut self.gram,
            ReducePhase::Sketch => &mut self.sketch,
            ReducePhase::Norm => &mut self.norm,
        }
    }
}

impl fmt::Display for ReduceLedger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "total={} (projection={} gram={} sketch={} norm={})",
            self.total(),
            self.projection,
            self.gram,
            self.sketch,
            self.norm
        )
    }
}
