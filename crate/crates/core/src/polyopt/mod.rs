//! Univariate polynomial and fractional optimization.

mod dinkelbach;
mod moment;
mod poly;
mod sdp;

pub use dinkelbach::{dinkelbach_minimize_ratio, DinkelbachOptions, DinkelbachResult, InnerProblem};
pub use moment::{
    hankel_pair, localizing_blocks, solve_moment_sdp, MomentSolution, MomentVector, HANKEL_DIM, MAX_OBJECTIVE_DEGREE,
    MOMENT_COUNT,
};
pub use poly::{minimize_on_interval, AffineFrame, Interval, Polynomial};
pub use sdp::{InteriorPointSdp, LmiBlock, SdpBackend, SdpProblem, SdpSolution, SdpStatus};
