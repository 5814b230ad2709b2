pub mod cli;
pub mod design;
pub mod ensemble;
pub mod error;
pub mod exec;
pub mod presets;
pub mod protocol;
pub mod quadrature;
pub mod radiation;
pub mod statevec;
pub mod vector;
pub mod verify;
