use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DVector;

use super::{BilevelProblem, PartialGrad, SecondOrder, SmoothnessInput};

/// Snapshot of oracle invocation counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OracleCounts {
    pub values: usize,
    pub gradients: usize,
    pub second_order: usize,
}

/// Wraps a problem and counts oracle invocations.
#[derive(Debug, Default)]
pub struct Counted<P> {
    inner: P,
    values: AtomicUsize,
    gradients: AtomicUsize,
    second_order: AtomicUsize,
}

impl<P> Counted<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            values: AtomicUsize::new(0),
            gradients: AtomicUsize::new(0),
            second_order: AtomicUsize::new(0),
        }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn counts(&self) -> OracleCounts {
        OracleCounts {
            values: self.values.load(Ordering::Relaxed),
            gradients: self.gradients.load(Ordering::Relaxed),
            second_order: self.second_order.load(Ordering::Relaxed),
        }
    }
}

impl<P: BilevelProblem> BilevelProblem for Counted<P> {
    fn nodes(&self) -> usize {
        self.inner.nodes()
    }
    fn outer_dim(&self) -> usize {
        self.inner.outer_dim()
    }
    fn inner_dim(&self) -> usize {
        self.inner.inner_dim()
    }
    fn outer_value(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.values.fetch_add(1, Ordering::Relaxed);
        self.inner.outer_value(i, x, y)
    }
    fn inner_value(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.values.fetch_add(1, Ordering::Relaxed);
        self.inner.inner_value(i, x, y)
    }
    fn outer_grad(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> PartialGrad {
        self.gradients.fetch_add(1, Ordering::Relaxed);
        self.inner.outer_grad(i, x, y)
    }
    fn inner_grad(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> PartialGrad {
        self.gradients.fetch_add(1, Ordering::Relaxed);
        self.inner.inner_grad(i, x, y)
    }
    fn second_order(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> Option<SecondOrder> {
        self.second_order.fetch_add(1, Ordering::Relaxed);
        self.inner.second_order(i, x, y)
    }
    fn exact_inner_argmin(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        self.inner.exact_inner_argmin(x)
    }
    fn exact_outer_optimum(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        self.inner.exact_outer_optimum()
    }
    fn smoothness(&self) -> SmoothnessInput {
        self.inner.smoothness()
    }
}
