use slipguide_core::env::{EnvError, EnvStep, Environment, SlipEnv};
use slipguide_core::learn::SlipApexEnv;
use slipguide_core::symmetry::MirrorSpec;
use slipguide_core::Prng;

use crate::formats::Task;

/// The environment a [`Task`] describes.
#[derive(Debug, Clone)]
pub enum TaskEnv {
    Robot(Box<SlipEnv>),
    Toy(SlipApexEnv),
}

impl TaskEnv {
    pub fn new(task: &Task) -> Result<Self, EnvError> {
        Ok(match task {
            Task::Robot(c) => Self::Robot(Box::new(SlipEnv::new(c.clone())?)),
            Task::Toy(c) => Self::Toy(SlipApexEnv::new(c.clone())?),
        })
    }

    fn inner(&self) -> &dyn Environment {
        match self {
            Self::Robot(e) => e.as_ref(),
            Self::Toy(e) => e,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Environment {
        match self {
            Self::Robot(e) => e.as_mut(),
            Self::Toy(e) => e,
        }
    }
}

impl Environment for TaskEnv {
    fn observation_dim(&self) -> usize {
        self.inner().observation_dim()
    }

    fn action_dim(&self) -> usize {
        self.inner().action_dim()
    }

    fn horizon(&self) -> usize {
        self.inner().horizon()
    }

    fn reset(&mut self, rng: &mut Prng) -> Result<Vec<f64>, EnvError> {
        self.inner_mut().reset(rng)
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep, EnvError> {
        self.inner_mut().step(action)
    }

    fn mirror(&self) -> Option<MirrorSpec> {
        self.inner().mirror()
    }

    fn cost_of_transport(&self) -> Option<f64> {
        self.inner().cost_of_transport()
    }
}
