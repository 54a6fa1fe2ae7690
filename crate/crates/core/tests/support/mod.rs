//! Oracle checks shared by the focused test targets and the acceptance run.
#![allow(dead_code)]

pub mod conv;
pub mod grad;
pub mod metric;
