pub mod codec;
pub mod end_system;
pub mod model;
pub mod switch_alloc;
pub mod branch_point;
pub mod fairness;
pub mod merge_point;
pub mod scenario;
pub mod engine;
pub mod report;
