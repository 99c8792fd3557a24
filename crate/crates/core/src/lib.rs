pub mod autodiff;
pub mod bandit;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod sessions;
pub mod training;
