//! Comparison methods. All except the shotgun extrapolator emit grid
//! distributions, so every metric applies to them unchanged.

mod gaussian;
mod lstm;
mod mean_point;
mod shotgun;
mod uniform;

pub use gaussian::{gaussian_grid, grid_search, SearchResult, LAMBDA_GRID, SIGMA_GRID};
pub use lstm::{lstm_train, LstmConfig, LstmGaussian};
pub use mean_point::{mean_path, MeanPointModel};
pub use shotgun::{ewa_speed, shotgun_forecast, ShotgunConfig, ShotgunForecast, SpeedMode};
pub use uniform::UniformModel;
