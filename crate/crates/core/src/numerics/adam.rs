use std::collections::BTreeMap;

use crate::error::{Result, StssError};

use super::params::ParamStore;
use super::tensor::Tensor;

/// Adam with bias correction. Moment buffers persist per parameter name.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    step: u64,
    first: BTreeMap<String, Vec<f32>>,
    second: BTreeMap<String, Vec<f32>>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam::new(0.9, 0.999, 1e-8)
    }
}

impl Adam {
    pub fn new(beta1: f32, beta2: f32, eps: f32) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    /// Number of completed steps.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter in `params`. Each parameter must
    /// have a gradient in `grads`.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Tensor>, lr: f32) -> Result<()> {
        let names: Vec<String> = params.names().map(str::to_string).collect();
        for name in &names {
            let g = grads.get(name).ok_or_else(|| StssError::MissingGrad(name.clone()))?;
            let p = params.get(name)?;
            if g.shape() != p.shape() {
                return Err(StssError::shape(
                    "adam",
                    format!("{name}: param {:?} grad {:?}", p.shape(), g.shape()),
                ));
            }
            if !g.all_finite() {
                return Err(StssError::NonFinite("adam gradient"));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for name in &names {
            let g = grads[name].data();
            let m = self.first.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.second.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let p = params.get_mut(name).expect("checked above").data_mut();
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f32) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("x", Tensor::scalar(x)).unwrap();
        p
    }

    fn grad(g: f32) -> BTreeMap<String, Tensor> {
        BTreeMap::from([("x".to_string(), Tensor::scalar(g))])
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar_store(0.3);
        let mut adam = Adam::default();
        for _ in 0..3 {
            adam.step(&mut p, &grad(0.0), 0.1).unwrap();
        }
        assert_eq!(p.get("x").unwrap().data(), &[0.3]);
    }

    #[test]
    fn first_step_is_unit_update() {
        // m̂ = g, v̂ = g² after bias correction, so the step is lr·g/|g|.
        let mut p = scalar_store(0.0);
        let mut adam = Adam::default();
        adam.step(&mut p, &grad(1.0), 0.1).unwrap();
        let x = p.get("x").unwrap().data()[0];
        assert!((x + 0.1).abs() < 1e-6, "{x}");
    }

    #[test]
    fn descends_on_quadratic() {
        let mut p = scalar_store(1.0);
        let mut adam = Adam::default();
        let mut prev = 1.0f32;
        for _ in 0..2 {
            let x = p.get("x").unwrap().data()[0];
            adam.step(&mut p, &grad(2.0 * x), 0.1).unwrap();
            let f = p.get("x").unwrap().data()[0].powi(2);
            assert!(f < prev);
            prev = f;
        }
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut p = scalar_store(1.0);
        let err = Adam::default().step(&mut p, &BTreeMap::new(), 0.1).unwrap_err();
        assert!(matches!(err, StssError::MissingGrad(n) if n == "x"));
    }
}
