pub mod baselines;
pub mod datagen;
pub mod domain;
pub mod estimation;
pub mod likelihood;
pub mod quadrature;
pub mod selection;
pub mod metrics;
pub mod io;
pub mod experiment;
pub mod cli;
