// SPDX-License-Identifier: Apache-2.0

//! Parameterized physical-design flow: TCL templates, stage services, a
//! planning agent, an executor, a TCL script similarity metric and a
//! benchmark generator.

pub mod agent;
pub mod benchgen;
pub mod catalog;
pub mod codebleu;
pub mod executor;
pub mod llm;
pub mod protocol;
pub mod services;
pub mod stage;
pub mod template;
pub mod version;
pub mod workspace;

pub use stage::Stage;

pub type CodeBleuReport = codebleu::Report<f64>;
pub type CodeBleuWeights = codebleu::Weights<f64>;
