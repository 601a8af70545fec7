//! Dormand–Prince 5(4) with a 4th-order continuous extension.

const C: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0];
const A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
];
const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
/// Difference between the 5th- and 4th-order weights (7 stages, FSAL).
const E: [f64; 7] = [
    -71.0 / 57600.0,
    0.0,
    71.0 / 16695.0,
    -71.0 / 1920.0,
    17253.0 / 339200.0,
    -22.0 / 525.0,
    1.0 / 40.0,
];
/// Dense-output polynomial coefficients (Shampine).
const P: [[f64; 4]; 7] = [
    [1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0, -12715105075.0 / 11282082432.0],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0, 87487479700.0 / 32700410799.0],
    [0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0, -10690763975.0 / 1880347072.0],
    [0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0, 701980252875.0 / 199316789632.0],
    [0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0],
    [0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0],
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

/// Right-hand side of `y' = f(t, y)`. Returning an error aborts the stage.
pub trait OdeSystem {
    type Error;
    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), Self::Error>;
}

/// Why a step attempt could not be completed.
#[derive(Debug)]
pub enum StepError<E> {
    /// The system rejected a stage even at the smallest step; `t` is the
    /// last point where it was fine.
    Rhs { t: f64, error: E },
    /// Error control drove the step below resolution.
    Underflow { t: f64, h: f64 },
}

/// One accepted step with its dense output.
#[derive(Clone, Debug)]
pub struct Step {
    pub t0: f64,
    pub t1: f64,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    /// Polynomial coefficients: y(t0 + θh) = y0 + h Σ_j q[i][j] θ^{j+1}.
    q: Vec<[f64; 4]>,
}

impl Step {
    pub fn h(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Interpolated state at `t ∈ [t0, t1]`.
    pub fn dense(&self, t: f64) -> Vec<f64> {
        if t >= self.t1 {
            return self.y1.clone();
        }
        if t <= self.t0 {
            return self.y0.clone();
        }
        let h = self.h();
        let x = (t - self.t0) / h;
        self.y0
            .iter()
            .zip(&self.q)
            .map(|(y, q)| {
                let poly = x * (q[0] + x * (q[1] + x * (q[2] + x * q[3])));
                y + h * poly
            })
            .collect()
    }

    /// One component of the dense output.
    pub fn dense_component(&self, t: f64, i: usize) -> f64 {
        if t >= self.t1 {
            return self.y1[i];
        }
        if t <= self.t0 {
            return self.y0[i];
        }
        let h = self.h();
        let x = (t - self.t0) / h;
        let q = &self.q[i];
        self.y0[i] + h * x * (q[0] + x * (q[1] + x * (q[2] + x * q[3])))
    }
}

pub struct Integrator {
    pub t: f64,
    pub y: Vec<f64>,
    f: Vec<f64>,
    h: f64,
    rtol: f64,
    atol: f64,
    /// Steps smaller than this are not attempted when a stage fails.
    pub h_min: f64,
}

fn rms_norm(v: &[f64], scale: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().zip(scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

impl Integrator {
    /// Starts at `(t, y)`; evaluates `f(t, y)` and picks an initial step.
    pub fn new<S: OdeSystem>(
        sys: &mut S,
        t: f64,
        y: Vec<f64>,
        rtol: f64,
        atol: f64,
        h_min: f64,
        span: f64,
    ) -> Result<Self, StepError<S::Error>> {
        let n = y.len();
        let mut f = vec![0.0; n];
        sys.rhs(t, &y, &mut f).map_err(|error| StepError::Rhs { t, error })?;
        let scale: Vec<f64> = y.iter().map(|v| atol + rtol * v.abs()).collect();
        let d0 = rms_norm(&y, &scale);
        let d1 = rms_norm(&f, &scale);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span.max(h_min));
        let y1: Vec<f64> = y.iter().zip(&f).map(|(a, b)| a + h0 * b).collect();
        let mut f1 = vec![0.0; n];
        let h = match sys.rhs(t + h0, &y1, &mut f1) {
            Ok(()) => {
                let diff: Vec<f64> = f1.iter().zip(&f).map(|(a, b)| a - b).collect();
                let d2 = rms_norm(&diff, &scale) / h0;
                let h1 = if d1.max(d2) <= 1e-15 {
                    (h0 * 1e-3).max(1e-6)
                } else {
                    (0.01 / d1.max(d2)).powf(1.0 / 5.0)
                };
                (100.0 * h0).min(h1)
            }
            Err(_) => h0,
        };
        Ok(Self { t, y, f, h: h.max(h_min), rtol, atol, h_min })
    }

    /// Takes one accepted step not past `t_limit`.
    pub fn step<S: OdeSystem>(&mut self, sys: &mut S, t_limit: f64) -> Result<Step, StepError<S::Error>> {
        let n = self.y.len();
        let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
        let mut ytmp = vec![0.0; n];
        loop {
            let remaining = t_limit - self.t;
            let mut h = self.h.min(remaining);
            // Avoid leaving a sliver before the limit.
            if remaining - h < 1e-3 * h {
                h = remaining;
            }
            if h <= 0.0 {
                return Err(StepError::Underflow { t: self.t, h });
            }
            k[0].copy_from_slice(&self.f);
            let mut failed = None;
            for s in 1..6 {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += A[s][j] * kj[i];
                    }
                    ytmp[i] = self.y[i] + h * acc;
                }
                if let Err(e) = sys.rhs(self.t + C[s] * h, &ytmp, &mut k[s]) {
                    failed = Some(e);
                    break;
                }
            }
            let mut y1 = vec![0.0; n];
            if failed.is_none() {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (s, bs) in B.iter().enumerate() {
                        acc += bs * k[s][i];
                    }
                    y1[i] = self.y[i] + h * acc;
                }
                let t1 = if h == remaining { t_limit } else { self.t + h };
                if let Err(e) = sys.rhs(t1, &y1, &mut k[6]) {
                    failed = Some(e);
                }
            }
            if let Some(error) = failed {
                if h <= self.h_min {
                    return Err(StepError::Rhs { t: self.t, error });
                }
                self.h = (h * 0.25).max(self.h_min);
                continue;
            }

            let scale: Vec<f64> = self
                .y
                .iter()
                .zip(&y1)
                .map(|(a, b)| self.atol + self.rtol * a.abs().max(b.abs()))
                .collect();
            let err: Vec<f64> = (0..n)
                .map(|i| h * E.iter().zip(&k).map(|(e, ks)| e * ks[i]).sum::<f64>())
                .collect();
            let norm = rms_norm(&err, &scale);
            if norm <= 1.0 {
                let factor = if norm == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * norm.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
                };
                let t0 = self.t;
                let t1 = if h == remaining { t_limit } else { t0 + h };
                let q = (0..n)
                    .map(|i| {
                        let mut row = [0.0; 4];
                        for (j, r) in row.iter_mut().enumerate() {
                            *r = (0..7).map(|s| k[s][i] * P[s][j]).sum();
                        }
                        row
                    })
                    .collect();
                let y0 = std::mem::replace(&mut self.y, y1.clone());
                self.f.copy_from_slice(&k[6]);
                self.t = t1;
                self.h = h * factor;
                return Ok(Step { t0, t1, y0, y1, q });
            }
            let factor = (SAFETY * norm.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
            self.h = h * factor;
            if self.h < 1e-14 * self.t.abs().max(1.0) {
                return Err(StepError::Underflow { t: self.t, h: self.h });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay;
    impl OdeSystem for Decay {
        type Error = ();
        fn rhs(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), ()> {
            dy[0] = -y[0];
            dy[1] = y[0];
            Ok(())
        }
    }

    struct Oscillator;
    impl OdeSystem for Oscillator {
        type Error = ();
        fn rhs(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), ()> {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        }
    }

    #[test]
    fn exponential_decay_to_tolerance() {
        let mut s = Decay;
        let mut it = Integrator::new(&mut s, 0.0, vec![1.0, 0.0], 1e-9, 1e-12, 1e-12, 5.0).unwrap();
        let mut steps = Vec::new();
        while it.t < 5.0 {
            steps.push(it.step(&mut s, 5.0).unwrap());
        }
        assert_eq!(it.t, 5.0);
        assert!((it.y[0] - (-5.0f64).exp()).abs() < 1e-8);
        assert!((it.y[0] + it.y[1] - 1.0).abs() < 1e-12);
        for st in &steps {
            let tm = 0.5 * (st.t0 + st.t1);
            assert!((st.dense(tm)[0] - (-tm).exp()).abs() < 1e-7);
        }
    }

    #[test]
    fn oscillator_period() {
        let mut s = Oscillator;
        let tau = std::f64::consts::TAU;
        let mut it = Integrator::new(&mut s, 0.0, vec![1.0, 0.0], 1e-10, 1e-12, 1e-12, tau).unwrap();
        while it.t < tau {
            it.step(&mut s, tau).unwrap();
        }
        assert!((it.y[0] - 1.0).abs() < 1e-7 && it.y[1].abs() < 1e-7);
    }

    struct Wall;
    impl OdeSystem for Wall {
        type Error = &'static str;
        fn rhs(&mut self, t: f64, _y: &[f64], dy: &mut [f64]) -> Result<(), &'static str> {
            if t > 1.0 {
                return Err("wall");
            }
            dy[0] = 1.0;
            Ok(())
        }
    }

    #[test]
    fn failing_stage_is_approached() {
        let mut s = Wall;
        let mut it = Integrator::new(&mut s, 0.0, vec![0.0], 1e-8, 1e-10, 1e-9, 3.0).unwrap();
        let t = loop {
            match it.step(&mut s, 3.0) {
                Ok(_) => continue,
                Err(StepError::Rhs { t, .. }) => break t,
                Err(e) => panic!("{e:?}"),
            }
        };
        assert!(t <= 1.0 && t > 1.0 - 1e-8, "{t}");
    }
}
