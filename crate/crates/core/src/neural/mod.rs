//! Neural average-reward off-policy DDPG with double-Q critics.

mod agent;
mod mlp;
mod optim;

pub use agent::{
    evaluate, train, AgentState, CriticGrads, NeuralConfig, NeuralRunResult, Reduction,
};
pub use mlp::{Activation, ForwardCache, Mlp, OutputMap};
pub use optim::{Optimizer, OptimizerKind};
