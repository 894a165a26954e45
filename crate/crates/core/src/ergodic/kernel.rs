use crate::error::Result;
use crate::model::{SignalSpec, State5};
use crate::sde::{integrate, ou_conditional_mean, ou_conditional_sd, NoiseStream, SimConfig};

/// One-period transition of a skeleton chain on `ℝᵈ`.
pub trait SkeletonKernel: Sync {
    fn dim(&self) -> usize;

    fn sample(&self, x: &[f64], noise: &mut NoiseStream) -> Result<Vec<f64>>;

    /// Transition density `p(x, y)` when it is available in closed form.
    fn density(&self, _x: &[f64], _y: &[f64]) -> Option<f64> {
        None
    }
}

/// The input process alone, sampled exactly at multiples of `T`.
#[derive(Debug, Clone)]
pub struct OuSkeleton {
    pub spec: SignalSpec,
}

impl OuSkeleton {
    pub fn mean(&self, x: f64) -> f64 {
        ou_conditional_mean(x, 0.0, self.spec.period, &self.spec)
    }

    pub fn sd(&self) -> f64 {
        ou_conditional_sd(0.0, self.spec.period, &self.spec)
    }
}

impl SkeletonKernel for OuSkeleton {
    fn dim(&self) -> usize {
        1
    }

    fn sample(&self, x: &[f64], noise: &mut NoiseStream) -> Result<Vec<f64>> {
        Ok(vec![self.mean(x[0]) + self.sd() * noise.gaussian()])
    }

    fn density(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        let sd = self.sd();
        let z = (y[0] - self.mean(x[0])) / sd;
        Some((-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt()))
    }
}

/// The full system over one period by Euler-Maruyama.
#[derive(Debug, Clone)]
pub struct HhSkeleton {
    pub spec: SignalSpec,
    pub dt: f64,
    steps: usize,
}

impl HhSkeleton {
    pub fn new(spec: SignalSpec, dt: f64) -> Result<Self> {
        spec.validate()?;
        let steps = SimConfig::new(dt, 0.0, 0).steps_per_period(&spec)?;
        Ok(Self { spec, dt, steps })
    }

    pub fn steps_per_period(&self) -> usize {
        self.steps
    }

    /// States at `start`, after `1..=periods` periods, on one noise stream.
    pub fn chain(&self, start: &State5, periods: usize, noise: &mut NoiseStream) -> Result<Vec<State5>> {
        let mut out = Vec::with_capacity(periods + 1);
        out.push(*start);
        let mut x = *start;
        for _ in 0..periods {
            x = integrate(&x, 0, self.steps, self.dt, &self.spec, noise, |_, _, _| {})?;
            out.push(x);
        }
        Ok(out)
    }
}

impl SkeletonKernel for HhSkeleton {
    fn dim(&self) -> usize {
        5
    }

    fn sample(&self, x: &[f64], noise: &mut NoiseStream) -> Result<Vec<f64>> {
        let start = State5::from_array([x[0], x[1], x[2], x[3], x[4]])?;
        let end = integrate(&start, 0, self.steps, self.dt, &self.spec, noise, |_, _, _| {})?;
        Ok(end.to_array().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ou_density_integrates_to_one() {
        let k = OuSkeleton { spec: SignalSpec::constant(1.0, 2.0, 0.5, 1.5) };
        let x = [3.0];
        let total = crate::quad::integrate(|y| k.density(&x, &[y]).unwrap(), -20.0, 20.0, 80, 8);
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hh_kernel_matches_skeleton() {
        let spec = SignalSpec::constant(0.0, 1.0, 1.0, 3.0);
        let k = HhSkeleton::new(spec.clone(), 0.01).unwrap();
        let x0 = State5::resting(0.0, 0.0).unwrap();
        let mut a = NoiseStream::new(4, 2);
        let mut b = NoiseStream::new(4, 2);
        let chain = k.chain(&x0, 2, &mut a).unwrap();
        let one = k.sample(&x0.to_array(), &mut b).unwrap();
        let two = k.sample(&one, &mut b).unwrap();
        assert_eq!(chain[2].to_array().to_vec(), two);
    }
}
