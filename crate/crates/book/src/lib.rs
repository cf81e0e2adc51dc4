//! Code listings from the guide in `book/`, compiled and run as doc-tests so
//! the chapters cannot drift from the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/ratio-bias.md")]
pub mod ratio_bias {}

#[doc = include_str!("../../../book/src/mle.md")]
pub mod mle {}

#[doc = include_str!("../../../book/src/posterior.md")]
pub mod posterior {}

#[doc = include_str!("../../../book/src/hidden-markov.md")]
pub mod hidden_markov {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
