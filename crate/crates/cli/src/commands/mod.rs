pub mod decompose;
pub mod emission;
pub mod pinem;
