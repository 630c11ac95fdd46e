pub mod bb_cmd;
pub mod generate;
pub mod geodesic;
pub mod palm;
pub mod static_cmd;
pub mod verify;
