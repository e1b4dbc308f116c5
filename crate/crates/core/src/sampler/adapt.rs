/// Nesterov dual averaging of the log step size.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    target: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
    step: f64,
}

const GAMMA: f64 = 0.05;
const T0: f64 = 10.0;
const KAPPA: f64 = 0.75;

impl DualAveraging {
    pub fn new(step: f64, target: f64) -> Self {
        DualAveraging { target, mu: (10.0 * step).ln(), counter: 0.0, s_bar: 0.0, x_bar: 0.0, step }
    }

    pub fn restart(&mut self, step: f64) {
        *self = DualAveraging::new(step, self.target);
    }

    /// Feeds one acceptance statistic and returns the next step size.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        let a = if accept_stat.is_finite() { accept_stat.min(1.0) } else { 0.0 };
        self.counter += 1.0;
        let eta = 1.0 / (self.counter + T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - a);
        let x = self.mu - self.s_bar * self.counter.sqrt() / GAMMA;
        let w = self.counter.powf(-KAPPA);
        self.x_bar = (1.0 - w) * self.x_bar + w * x;
        self.step = x.exp();
        self.step
    }

    /// The averaged step size used after warmup.
    pub fn final_step(&self) -> f64 {
        if self.counter == 0.0 {
            self.step
        } else {
            self.x_bar.exp()
        }
    }
}

/// Running per-coordinate variance.
#[derive(Debug, Clone)]
pub struct VarianceEstimator {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl VarianceEstimator {
    pub fn new(dim: usize) -> Self {
        VarianceEstimator { n: 0.0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn add(&mut self, x: &[f64]) {
        self.n += 1.0;
        for i in 0..x.len() {
            let d = x[i] - self.mean[i];
            self.mean[i] += d / self.n;
            self.m2[i] += d * (x[i] - self.mean[i]);
        }
    }

    pub fn count(&self) -> usize {
        self.n as usize
    }

    /// Sample variance shrunk towards 1e-3, as an inverse mass diagonal.
    pub fn regularized(&self) -> Vec<f64> {
        let n = self.n;
        self.m2
            .iter()
            .map(|m| {
                let var = if n > 1.0 { m / (n - 1.0) } else { 1.0 };
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}

/// Warmup phases: step size only, then two metric windows, then a final
/// step-size stretch. The second window covers the second half of warmup
/// up to the last tenth.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmupSchedule {
    pub windows: Vec<(usize, usize)>,
    pub warmup: usize,
}

impl WarmupSchedule {
    pub fn new(warmup: usize) -> Self {
        if warmup < 20 {
            return WarmupSchedule { windows: Vec::new(), warmup };
        }
        let a = (warmup * 15) / 100;
        let b = warmup / 2;
        let c = (warmup * 9) / 10;
        WarmupSchedule { windows: vec![(a, b), (b, c)], warmup }
    }

    pub fn in_window(&self, it: usize) -> bool {
        self.windows.iter().any(|&(s, e)| it >= s && it < e)
    }

    pub fn closes_window(&self, it: usize) -> bool {
        self.windows.iter().any(|&(_, e)| it + 1 == e)
    }
}
