#![allow(dead_code)]

pub mod flow;
pub mod grad;
pub mod roc;
