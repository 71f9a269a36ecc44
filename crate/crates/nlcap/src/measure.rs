//! Capacitary surface measures (in progress).
