//! Verifiable observation of permissioned-ledger state.
//!
//! Committee agents fold each block's key/value writes into a dynamic RSA
//! accumulator, publish signed `(digest, height)` views together with a
//! rolling hash of their digest history to a bulletin board, and answer
//! external queries with membership proofs that verify against a published
//! view without any access to the ledger.

pub mod accumulator;
pub mod bulletin;
pub mod encoding;
pub mod identity;
pub mod ledger;
pub mod proofs;
pub mod sim;
