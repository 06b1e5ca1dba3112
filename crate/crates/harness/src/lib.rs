pub mod bench;
pub mod corruption;
pub mod guessing;
pub mod model_check;
pub mod net;
pub mod report;
pub mod rollback;
pub mod scenarios;
pub mod sim;
pub mod vectors;
