//! Keeps the guide honest: each chapter of `book/` is included as a doc
//! page here, so `cargo test` compiles and runs the book's code blocks
//! like any other doc-test. A failing module name below points at the
//! chapter whose snippets broke.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/value-equation.md")]
pub mod value_equation {}

#[doc = include_str!("../../../book/src/policy-improvement.md")]
pub mod policy_improvement {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
