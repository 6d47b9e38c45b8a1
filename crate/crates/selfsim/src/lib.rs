//! Numerical construction of self-similar blowup profiles for the Hou-Luo
//! one-dimensional model by fixed-point iteration of the map R.

pub mod quad;
pub mod specfun;
pub mod grid;
pub mod transform;
pub mod maps;
pub mod verify;
pub mod solver;
pub mod profiles;
