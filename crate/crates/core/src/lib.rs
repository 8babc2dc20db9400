pub mod command;
pub mod config;
pub mod controller;
pub mod eval;
pub mod impedance;
pub mod kinematics;
pub mod locomotion;
pub mod pose;
pub mod runtime;
pub mod skills;
pub mod task;
pub mod world;
