//! Order-dependent (hence reproducible) reductions used by the ensembles.

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Welford mean/variance accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct MeanAccumulator {
    count: usize,
    mean: f64,
    m2: f64,
}

impl MeanAccumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// `√(mean(x))` and its jackknife standard error.
pub fn rms_with_jackknife(squared: &[f64]) -> (f64, f64) {
    let n = squared.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut total = CompensatedSum::default();
    squared.iter().for_each(|&x| total.add(x));
    let total = total.total();
    let rms = (total / n as f64).sqrt();
    if n < 2 {
        return (rms, 0.0);
    }
    let loo: Vec<f64> = squared
        .iter()
        .map(|&x| ((total - x).max(0.0) / (n - 1) as f64).sqrt())
        .collect();
    let mut acc = CompensatedSum::default();
    loo.iter().for_each(|&v| acc.add(v));
    let loo_mean = acc.total() / n as f64;
    let mut spread = CompensatedSum::default();
    loo.iter().for_each(|&v| spread.add((v - loo_mean).powi(2)));
    let se = ((n - 1) as f64 / n as f64 * spread.total()).sqrt();
    (rms, se)
}
