//! PM-QPSK transmitter and coherent receiver DSP.

pub mod butterfly;
pub mod carrier;
pub mod export;
pub mod metrics;
pub mod prbs;
pub mod tx;

pub use butterfly::{butterfly_equalize, ButterflyConfig, ButterflyOutput};
pub use carrier::{carrier_recover, CarrierConfig, CarrierOutput};
pub use metrics::{evaluate, measure_ber, q_factor_db, RxMetrics};
pub use prbs::generate_prbs;
pub use tx::{modulate_pm_qpsk, Pulse, QpskReference, TxConfig};
