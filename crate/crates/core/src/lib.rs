#![cfg_attr(not(feature = "std"), no_std)]
extern crate alloc;

pub mod autodiff;
pub mod control;
pub mod dual;
pub mod dynamics;
pub mod error;
pub mod inference;
pub mod knife;
pub mod math;
pub mod mesh;
pub mod params;
pub mod scalar;
pub mod transport;
pub mod tape;
