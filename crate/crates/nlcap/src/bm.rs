//! Brunn-Minkowski experiment harness (in progress).
