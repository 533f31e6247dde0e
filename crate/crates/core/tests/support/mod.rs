#![allow(dead_code)]

pub mod car;
pub mod crossing;
pub mod gen;
