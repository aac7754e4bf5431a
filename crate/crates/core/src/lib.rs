pub mod qp;
pub mod terrain;
pub mod vertical;
pub mod gait;
pub mod horizontal;
pub mod scenario;
pub mod sim;
pub mod bench;
pub mod report;
pub mod wbc;
