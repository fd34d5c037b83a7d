// SPDX-License-Identifier: Apache-2.0

//! Closed-loop RTL timing optimization: analyze critical paths, propose
//! equivalent rewrites, evaluate them, keep the best verified candidate and
//! learn which transformations work for which bottleneck patterns.

pub mod backend;
pub mod canon;
pub mod config;

pub mod orchestrator;
pub mod par;
pub mod proposer;
pub mod rtl;
pub mod scoring;
pub mod skills;
pub mod timing;
pub mod trajectory;
