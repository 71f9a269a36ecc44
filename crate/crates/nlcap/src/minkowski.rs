//! Discrete Minkowski problem (in progress).
