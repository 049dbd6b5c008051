pub mod compare;
pub mod noise;
pub mod shots;
pub mod train;
pub mod verify;
