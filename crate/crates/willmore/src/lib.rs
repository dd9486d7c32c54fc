//! Willmore surfaces in S^{n+2} from holomorphic loop-algebra potentials.

pub mod lorentz;
pub mod loopgroup;
pub mod factorize;
pub mod gen;
pub mod analytic;
pub mod potential;
pub mod dpw;
pub mod geometry;
pub mod io;
