pub mod assumptions;
pub mod contracts;
pub mod greens_study;
pub mod local;
pub mod manufactured;
pub mod series;
pub mod stability;
