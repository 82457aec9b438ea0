pub mod svg;
pub mod tables;
