pub mod bench;
pub mod config;
pub mod error;
pub mod fft;
pub mod grad;
pub mod io;
pub mod lif;
pub mod metrics;
pub mod network;
pub mod rng;
pub mod s4d;
pub mod sdn;
pub mod sdn_train;
