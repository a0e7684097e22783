//! Day-ahead forecasting of hourly series with daily, weekly and yearly
//! seasonality using stacked dilated gated recurrent networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`preprocess`] turns hourly histories into standardized weekly input
//!   patterns and encoded daily targets, and decodes forecasts back to MW.
//! * [`cells`] holds the five recurrent cells with their exact
//!   backpropagation-through-time gradients.
//! * [`network`] stacks three dilated layers (dilations 2, 4, 7) with a
//!   calendar embedding, shortcuts and a 72-output head.
//! * [`loss`] is the pinball loss and the point + interval objective.
//! * [`training`] runs the cross-learning schedule with Adam and ensembles.
//! * [`evaluation`] computes accuracy metrics, interval diagnostics, the
//!   Giacomini-White comparison and rankings.
//! * [`cli_io`] is the file formats and command implementations behind the
//!   `stlf` binary.

pub mod cells;
pub mod cli_io;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod linalg;
pub mod loss;
pub mod network;
pub mod params;
pub mod preprocess;
pub mod training;

pub use error::{Error, Result};
