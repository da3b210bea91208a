pub mod block;
pub mod blocks;
pub mod builders;
pub mod error;
pub mod harness;
pub mod ideal;
pub mod mad;
pub mod orbit;
pub mod perm;
pub mod sets;
pub mod spectrum;
