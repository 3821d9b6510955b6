pub mod dba;
pub mod metrics;
pub mod model;
pub mod ran;
pub mod rate;
pub mod scenario;
pub mod sim;
pub mod sweep;
pub mod topology;
pub mod transport;
