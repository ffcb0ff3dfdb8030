pub mod ablate;
pub mod bench;
pub mod gen_data;
pub mod rollout;
pub mod train;
pub mod verify;
