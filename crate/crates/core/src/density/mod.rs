//! Grid-based BP for general priors `exp(-beta |s|^q)` and non-Gaussian
//! initial messages.
//!
//! Hat messages are laws of weighted sums of independent message variables;
//! they are obtained by multiplying characteristic functions evaluated by
//! quadrature at row-specific frequencies and inverting back onto the grid.

mod edgeworth;
mod engine;
mod grid;
mod hat;
mod laws;

pub use edgeworth::{
    edg_factor, edgeworth_data_init, edgeworth_p3, edgeworth_p3_fd, edgeworth_sup_error, hermite3, EdgeworthData,
};
pub use engine::{gaussian_proximity, run_density_bp, window, DensityStep, DensityTrace, MAX_GRID, MAX_N, MAX_T};
pub use grid::{moments, Grid, GridDensity, Moments};
pub use hat::{hat_density, hat_density_values, node_density, Message};
pub use laws::{prior, prior_tail, prior_variance, prior_window, InitDensity, InitLaw, PRIOR_TAIL_MASS};

#[cfg(test)]
mod tests;
