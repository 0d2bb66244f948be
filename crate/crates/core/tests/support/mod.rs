#![allow(dead_code)]

pub mod circuits;
pub mod dags;
pub mod replies;
