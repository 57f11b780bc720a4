use super::matrix::Matrix;
use super::params::{ParamGrads, ParamStore};

/// Adamax (infinity-norm Adam variant).
#[derive(Debug, Clone)]
pub struct Adamax {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Matrix>,
    u: Vec<Matrix>,
}

impl Adamax {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros = || {
            store
                .ids()
                .map(|id| {
                    let v = store.value(id);
                    Matrix::zeros(v.rows(), v.cols())
                })
                .collect::<Vec<_>>()
        };
        Adamax {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            u: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &ParamGrads) {
        self.step += 1;
        let bias = 1.0 - self.beta1.powi(self.step as i32);
        let step_size = self.lr / bias;
        for (id, g) in grads.iter() {
            let m = self.m[id.0].data_mut();
            let u = self.u[id.0].data_mut();
            let p = store.value_mut(id).data_mut();
            for k in 0..g.data().len() {
                let gk = g.data()[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                u[k] = (self.beta2 * u[k]).max(gk.abs() + self.eps);
                p[k] -= step_size * m[k] / u[k];
            }
        }
    }
}

/// `lr = initial · gamma^epoch`
#[derive(Debug, Clone, Copy)]
pub struct ExponentialLr {
    pub initial: f64,
    pub gamma: f64,
}

impl ExponentialLr {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.initial * self.gamma.powi(epoch as i32)
    }
}
