//! Likelihood kernel for check-node residuals.

/// Density of the sum of four independent uniforms on `[-s/2, s/2]`
/// (a centered, scaled Irwin-Hall distribution of order 4).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseKernel {
    step: f64,
}

impl NoiseKernel {
    pub fn new(step: f64) -> Self {
        assert!(step > 0.0 && step.is_finite(), "kernel step must be positive");
        Self { step }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Half-width of the support, `2 s`.
    pub fn support(&self) -> f64 {
        2.0 * self.step
    }

    pub fn peak(&self) -> f64 {
        2.0 / (3.0 * self.step)
    }

    pub fn eval(&self, z: f64) -> f64 {
        kernel_eval(self, z)
    }
}

pub fn kernel_eval(kernel: &NoiseKernel, z: f64) -> f64 {
    let y = z.abs() / kernel.step;
    let f = if y >= 2.0 {
        0.0
    } else if y >= 1.0 {
        let r = 2.0 - y;
        r * r * r / 6.0
    } else {
        (4.0 - 6.0 * y * y + 3.0 * y * y * y) / 6.0
    };
    f / kernel.step
}
