pub mod frame;
pub mod matched;
pub mod metrics;
pub mod rd;
pub mod resample;
pub mod schedule;
pub mod video_io;
