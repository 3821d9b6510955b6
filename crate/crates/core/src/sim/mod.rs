//! Deterministic discrete-event engine: integer-nanosecond clock, ordered
//! event queue and named random streams.

mod queue;
mod rng;
mod time;

pub use queue::{EventHandle, Scheduler, SimEvent};
pub use rng::{poisson_arrivals, PoissonProcess, RngStream};
pub use time::SimTime;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error("event scheduled at {fire_at} but clock is already at {now}")]
    EventInPast { fire_at: SimTime, now: SimTime },
    #[error("arrival rate must be a finite non-negative number, got {0}")]
    InvalidRate(f64),
    #[error("horizon must be positive")]
    EmptyHorizon,
}
