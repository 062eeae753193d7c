use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid1D, RealField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    TanhBarrier,
    Free,
}

/// Static external potential. The barrier is
/// `(v0/2) [tanh(alpha (x - x_minus)) - tanh(alpha (x - x_plus))]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub v0: f64,
    pub alpha: f64,
    pub x_minus: f64,
    pub x_plus: f64,
}

impl PotentialSpec {
    pub fn free() -> Self {
        Self { kind: PotentialKind::Free, v0: 0.0, alpha: 0.0, x_minus: 0.0, x_plus: 0.0 }
    }

    pub fn tanh_barrier(v0: f64, alpha: f64, x_minus: f64, x_plus: f64) -> Result<Self> {
        let spec = Self { kind: PotentialKind::TanhBarrier, v0, alpha, x_minus, x_plus };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == PotentialKind::TanhBarrier {
            if !(self.v0 > 0.0 && self.v0.is_finite()) {
                return Err(Error::Config(format!("barrier height must be positive, got {}", self.v0)));
            }
            if !(self.alpha > 0.0 && self.alpha.is_finite()) {
                return Err(Error::Config(format!("barrier stiffness must be positive, got {}", self.alpha)));
            }
            if !(self.x_minus < self.x_plus) {
                return Err(Error::Config(format!(
                    "barrier edges out of order: {} >= {}",
                    self.x_minus, self.x_plus
                )));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            PotentialKind::Free => 0.0,
            PotentialKind::TanhBarrier => {
                0.5 * self.v0 * ((self.alpha * (x - self.x_minus)).tanh() - (self.alpha * (x - self.x_plus)).tanh())
            }
        }
    }
}

pub fn sample_potential(spec: &PotentialSpec, grid: &Grid1D) -> Result<RealField> {
    spec.validate()?;
    RealField::from_fn(*grid, |x| spec.eval(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn barrier() -> PotentialSpec {
        PotentialSpec::tanh_barrier(150.0, 10.0, -2.0, 2.0).unwrap()
    }

    #[test]
    fn barrier_top_and_tails() {
        let b = barrier();
        assert!((b.eval(0.0) - 150.0 * 20f64.tanh()).abs() <= 1e-8);
        assert!((b.eval(0.0) - 150.0).abs() <= 1e-8);
        assert!(b.eval(10.0).abs() <= 1e-10);
        assert!(b.eval(-10.0).abs() <= 1e-10);
    }

    #[test]
    fn free_is_zero() {
        let g = Grid1D::new(-10.0, 10.0, 64).unwrap();
        let v = sample_potential(&PotentialSpec::free(), &g).unwrap();
        assert!(v.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_bad_barriers() {
        assert!(PotentialSpec::tanh_barrier(-1.0, 10.0, -2.0, 2.0).is_err());
        assert!(PotentialSpec::tanh_barrier(1.0, 0.0, -2.0, 2.0).is_err());
        assert!(PotentialSpec::tanh_barrier(1.0, 10.0, 2.0, -2.0).is_err());
    }

    #[test]
    fn sampled_barrier_is_symmetric() {
        let g = Grid1D::new(-16.0, 16.0, 1024).unwrap();
        let v = sample_potential(&barrier(), &g).unwrap();
        let n = g.len();
        // x_j and x_{n-j} mirror about 0 on this grid.
        for j in 1..n / 2 {
            assert!((v.values()[j] - v.values()[n - j]).abs() <= 1e-12);
        }
    }

    proptest! {
        #[test]
        fn barrier_bounds(x in -50.0..50.0f64, v0 in 0.1..1e4f64, alpha in 0.1..50.0f64) {
            let b = PotentialSpec::tanh_barrier(v0, alpha, -2.0, 2.0).unwrap();
            let v = b.eval(x);
            prop_assert!(v >= 0.0 && v <= v0 * (1.0 + 1e-12));
        }

        #[test]
        fn barrier_mirror(delta in 0.0..20.0f64) {
            let b = barrier();
            prop_assert!((b.eval(delta) - b.eval(-delta)).abs() <= 1e-12);
        }
    }
}
