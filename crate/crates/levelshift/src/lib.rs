//! Level shift operators of finite quantum systems coupled to thermal
//! bosonic reservoirs.
//!
//! See the book in `book/` for a walkthrough.

// `!(x > 0.0)` style comparisons also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod higher;
pub mod lso;
pub mod oracle;
pub mod quad;
pub mod reservoir;
pub mod smallsys;

// The book chapters run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/small-system.md")]
    mod small_system {}
    #[doc = include_str!("../../../book/src/reservoirs.md")]
    mod reservoirs {}
    #[doc = include_str!("../../../book/src/level-shift-operator.md")]
    mod level_shift_operator {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/fourth-order.md")]
    mod fourth_order {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
