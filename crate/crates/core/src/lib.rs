pub mod billiard;
pub mod correlation;
pub mod delone;
pub mod geometry;
pub mod observables;
pub mod pipeline;
pub mod stats;
pub mod tower;
