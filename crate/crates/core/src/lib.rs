//! Policy synthesis over MDP knowledge graphs.

pub mod expr;
pub mod kg;
pub mod sim;
pub mod vh;
pub mod embed;
pub mod compose;
pub mod dqn;
pub mod derive;
pub mod store;
pub mod bench;
