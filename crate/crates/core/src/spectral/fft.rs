//! Cached 2D FFT plans on square grids.
//!
//! Forward transforms are normalized so that the returned array holds the
//! Fourier coefficients `f̂(k) = N⁻² Σ_x f(x) e^{-2πik·x}`; the inverse is the
//! plain synthesis `f(x) = Σ_k f̂(k) e^{2πik·x}`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: RefCell<Vec<Complex64>>,
}

impl Fft2 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            n,
            forward,
            inverse,
            scratch: RefCell::new(vec![Complex64::default(); len]),
        }
    }

    fn run(&self, fft: &Arc<dyn Fft<f64>>, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.n * self.n);
        let mut scratch = self.scratch.borrow_mut();
        fft.process_with_scratch(data, &mut scratch);
        transpose_in_place(data, self.n);
        fft.process_with_scratch(data, &mut scratch);
        transpose_in_place(data, self.n);
    }

    /// Normalized forward transform (physical -> coefficients).
    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.run(&self.forward, data);
        let scale = 1.0 / (self.n * self.n) as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    /// Synthesis (coefficients -> physical).
    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.run(&self.inverse, data);
    }
}

fn transpose_in_place(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Rc<Fft2>>> = RefCell::new(HashMap::new());
}

/// Per-thread plan cache keyed by grid resolution.
pub(crate) fn plan(n: usize) -> Rc<Fft2> {
    PLANS.with(|plans| {
        plans
            .borrow_mut()
            .entry(n)
            .or_insert_with(|| Rc::new(Fft2::new(n)))
            .clone()
    })
}
