//! Forward-only continual learning.
//!
//! Learns a sequence of class-incremental tasks without gradients: a CMA-ES
//! search picks prompt tokens for a frozen transformer, and a ridge classifier
//! over random nonlinear features is updated in closed form through a running
//! inverse (the knowledge encoding matrix), giving exactly the weights a joint
//! fit on all data seen so far would give.
//!
//! | module        | contents                                                   |
//! |---------------|------------------------------------------------------------|
//! | [`cma`]       | CMA-ES ask/tell optimizer                                  |
//! | [`backbone`]  | frozen surrogate transformer with prompt injection         |
//! | [`fitness`]   | prompt loss and activation-statistics history              |
//! | [`encoding`]  | random projection, knowledge encoding matrix, classifier   |
//! | [`protocol`]  | task streams, feature files, learning driver, metrics      |
//! | [`cli`]       | experiment configs, run/verify/inspect                     |

pub mod backbone;
pub mod cli;
pub mod cma;
pub mod encoding;
pub mod error;
pub mod fitness;
pub mod io;
pub mod linalg;
pub mod protocol;
pub mod seed;

pub use error::{ForoError, Result};
