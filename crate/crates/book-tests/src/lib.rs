//! Compiles and runs every listing of the guide in `book/src`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/nutrients.md")]
pub mod chapter1 {}
#[doc = include_str!("../../../book/src/volume.md")]
pub mod chapter2 {}
#[doc = include_str!("../../../book/src/synthetic-plates.md")]
pub mod chapter3 {}
#[doc = include_str!("../../../book/src/neural-engine.md")]
pub mod chapter4 {}
#[doc = include_str!("../../../book/src/features-and-heads.md")]
pub mod chapter5 {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod chapter6 {}
#[doc = include_str!("../../../book/src/agreement.md")]
pub mod chapter7 {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod chapter8 {}
