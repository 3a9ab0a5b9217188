//! Process-wide switch for outbound network access.
//!
//! Every live HTTP client in the crate calls [`guard`] before sending. A
//! hermetic run calls [`deny_all`] up front, so any attempt fails loudly
//! and [`attempts`] shows whether one was made.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use thiserror::Error;

static DENY: AtomicBool = AtomicBool::new(false);
static ATTEMPTS: AtomicUsize = AtomicUsize::new(0);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("network access to {endpoint} denied in hermetic mode")]
pub struct NetworkDenied {
    pub endpoint: String,
}

pub fn deny_all(deny: bool) {
    DENY.store(deny, Ordering::SeqCst);
}

pub fn is_denied() -> bool {
    DENY.load(Ordering::SeqCst)
}

/// Number of outbound requests attempted (allowed or not) in this process.
pub fn attempts() -> usize {
    ATTEMPTS.load(Ordering::SeqCst)
}

pub fn guard(endpoint: &str) -> Result<(), NetworkDenied> {
    ATTEMPTS.fetch_add(1, Ordering::SeqCst);
    if is_denied() {
        return Err(NetworkDenied {
            endpoint: endpoint.to_string(),
        });
    }
    Ok(())
}
