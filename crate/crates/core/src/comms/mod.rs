//! Reporting filter and the simulated robot-to-base link.

pub mod network;
pub mod report;
pub mod wire;

pub use network::{message_bytes, peak_window_bytes, schedule_csv, transmit, Delivery, TransmitOutcome};
pub use report::{
    build_report, comms_filter, select_report_images, Eligibility, ImageRole, ObservationScore, Report, ReportImage, ReportScheduler,
};
pub use wire::{read_all, read_frame, write_frame, WireMessage};
