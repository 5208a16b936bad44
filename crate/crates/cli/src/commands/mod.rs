pub mod bench;
pub mod compare;
pub mod solve;
pub mod sweep;
