pub mod gateway;
pub mod knowledge;
pub mod model;
pub mod net;
pub mod pentest;
pub mod pipeline;
pub mod remediation;
pub mod scoring;
pub mod scripted;
pub mod sim;
