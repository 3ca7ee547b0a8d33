//! Workbench for curriculum experiments on a partially observable gridworld:
//! procedural level generation, adaptive level replay, PPO training on a
//! from-scratch tape autodiff engine, and generalisation diagnostics.

pub mod grid;
pub mod nn;
pub mod rng;
pub mod wfc;
