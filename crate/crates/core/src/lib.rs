#![cfg_attr(not(feature = "std"), no_std)]
extern crate alloc;

pub mod data;
pub mod dictionary;
pub mod error;
pub mod geometry;
pub mod greedy;
pub mod kernel_oga;
pub mod linalg;
pub mod problems;
pub mod products;
pub(crate) mod math;
pub mod metrics;
pub mod pointwise_oga;

pub use error::{Error, Result};
