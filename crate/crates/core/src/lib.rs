//! Elaboration and periodic maintenance of a temporal object-oriented data warehouse.

pub mod algebra;
pub mod archive;
pub mod dsl;
pub mod model;
pub mod object;
pub mod plan;
pub mod property;
pub mod refresh;
pub mod snapshot;
pub mod source;
pub mod store;
pub mod syntax;
pub mod temporal;
pub mod value;
