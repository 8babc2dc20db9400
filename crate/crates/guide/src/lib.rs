//! The book's chapters, so `cargo test` runs their listings.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/command.md")]
pub mod command {}
#[doc = include_str!("../../../book/src/compliance.md")]
pub mod compliance {}
#[doc = include_str!("../../../book/src/kinematics.md")]
pub mod kinematics {}
#[doc = include_str!("../../../book/src/skills.md")]
pub mod skills {}
#[doc = include_str!("../../../book/src/locomotion.md")]
pub mod locomotion {}
#[doc = include_str!("../../../book/src/tasks.md")]
pub mod tasks {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/protocol.md")]
pub mod protocol {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
