//! Momentum SGD with damped momentum, ADAM, and stepwise exponential
//! learning-rate decay.
//!
//! Optimizers receive the gradient of the loss being minimized and return
//! the update `Δθ`; callers apply `θ ← θ − Δθ`.

use crate::error::{Error, Result};
use crate::nn::{Mlp, ParamGrads};

/// `rate(step) = initial · factor^⌊step / period⌋`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecaySchedule {
    pub initial: f64,
    pub factor: f64,
    pub period: usize,
}

impl DecaySchedule {
    pub fn new(initial: f64, factor: f64, period: usize) -> Result<Self> {
        let s = DecaySchedule {
            initial,
            factor,
            period,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(rate: f64) -> Self {
        DecaySchedule {
            initial: rate,
            factor: 1.0,
            period: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial > 0.0 && self.initial.is_finite()) {
            return Err(Error::config(format!("learning rate must be > 0, got {}", self.initial)));
        }
        if !(self.factor > 0.0 && self.factor <= 1.0) {
            return Err(Error::config(format!("decay factor {} outside (0, 1]", self.factor)));
        }
        if self.period == 0 {
            return Err(Error::config("decay period must be >= 1"));
        }
        Ok(())
    }

    pub fn rate(&self, step: usize) -> f64 {
        schedule_rate(self, step)
    }
}

pub fn schedule_rate(schedule: &DecaySchedule, step: usize) -> f64 {
    let k = (step / schedule.period) as i32;
    schedule.initial * schedule.factor.powi(k)
}

pub trait Optimizer: Send {
    /// Consumes one gradient and returns the update to subtract from `θ`.
    fn step(&mut self, grads: &ParamGrads) -> Result<ParamGrads>;

    fn steps_taken(&self) -> usize;

    /// Applies one update to `net` in place.
    fn descend(&mut self, net: &mut Mlp, grads: &ParamGrads) -> Result<()> {
        let delta = self.step(grads)?;
        net.apply_delta(&delta, -1.0)
    }
}

/// `Δθᵢ = μ·Δθᵢ₋₁ + (1 − μ)·γᵢ·g`.
#[derive(Clone, Debug)]
pub struct MomentumSgd {
    mu: f64,
    schedule: DecaySchedule,
    prev_update: Option<ParamGrads>,
    step: usize,
}

impl MomentumSgd {
    pub fn new(mu: f64, schedule: DecaySchedule) -> Result<Self> {
        if !(0.0..1.0).contains(&mu) {
            return Err(Error::config(format!("momentum {mu} outside [0, 1)")));
        }
        schedule.validate()?;
        Ok(MomentumSgd {
            mu,
            schedule,
            prev_update: None,
            step: 0,
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.schedule.rate(self.step)
    }

    pub fn prev_update(&self) -> Option<&ParamGrads> {
        self.prev_update.as_ref()
    }

    pub fn set_prev_update(&mut self, update: ParamGrads) {
        self.prev_update = Some(update);
    }
}

impl Optimizer for MomentumSgd {
    fn step(&mut self, grads: &ParamGrads) -> Result<ParamGrads> {
        let coef = (1.0 - self.mu) * self.schedule.rate(self.step);
        let update = match &self.prev_update {
            None => grads.scaled(coef),
            Some(prev) => {
                let mut u = prev.scaled(self.mu);
                u.add_scaled(coef, grads)?;
                u
            }
        };
        self.prev_update = Some(update.clone());
        self.step += 1;
        Ok(update)
    }

    fn steps_taken(&self) -> usize {
        self.step
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    schedule: DecaySchedule,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Option<ParamGrads>,
    v: Option<ParamGrads>,
    t: usize,
}

impl Adam {
    /// `β₁ = 0.9`, `β₂ = 0.999`, `ε = 1e-8`.
    pub fn new(schedule: DecaySchedule) -> Result<Self> {
        Self::with_betas(schedule, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(schedule: DecaySchedule, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        schedule.validate()?;
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
            return Err(Error::config("invalid ADAM constants"));
        }
        Ok(Adam {
            schedule,
            beta1,
            beta2,
            eps,
            m: None,
            v: None,
            t: 0,
        })
    }
}

impl Optimizer for Adam {
    fn step(&mut self, grads: &ParamGrads) -> Result<ParamGrads> {
        let m = self.m.get_or_insert_with(|| grads.scaled(0.0));
        let v = self.v.get_or_insert_with(|| grads.scaled(0.0));
        let lr = self.schedule.rate(self.t);
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut update = grads.scaled(0.0);
        for (((mt, vt), gt), ut) in m
            .tensors_mut()
            .zip(v.tensors_mut())
            .zip(grads.tensors())
            .zip(update.tensors_mut())
        {
            if gt.shape() != mt.shape() {
                return Err(Error::dim("ADAM gradient shape changed between steps"));
            }
            let (md, vd, ud) = (mt.data_mut(), vt.data_mut(), ut.data_mut());
            for (k, &g) in gt.data().iter().enumerate() {
                md[k] = self.beta1 * md[k] + (1.0 - self.beta1) * g;
                vd[k] = self.beta2 * vd[k] + (1.0 - self.beta2) * g * g;
                let m_hat = md[k] / c1;
                let v_hat = vd[k] / c2;
                ud[k] = lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(update)
    }

    fn steps_taken(&self) -> usize {
        self.t
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerConfig {
    Momentum { mu: f64, schedule: DecaySchedule },
    Adam { schedule: DecaySchedule },
}

impl OptimizerConfig {
    /// μ = 0.9, γ₁ = 1.0 decaying ×0.995 per update.
    pub fn synthetic_default() -> Self {
        OptimizerConfig::Momentum {
            mu: 0.9,
            schedule: DecaySchedule {
                initial: 1.0,
                factor: 0.995,
                period: 1,
            },
        }
    }

    /// ADAM from 0.002 decaying ×0.9 every `period` updates.
    pub fn adam_default(period: usize) -> Self {
        OptimizerConfig::Adam {
            schedule: DecaySchedule {
                initial: 0.002,
                factor: 0.9,
                period,
            },
        }
    }

    pub fn build(&self) -> Result<Box<dyn Optimizer>> {
        Ok(match *self {
            OptimizerConfig::Momentum { mu, schedule } => Box::new(MomentumSgd::new(mu, schedule)?),
            OptimizerConfig::Adam { schedule } => Box::new(Adam::new(schedule)?),
        })
    }
}
