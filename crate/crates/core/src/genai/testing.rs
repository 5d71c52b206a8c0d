//! Scripted and fault-injecting providers for tests and demos.

use std::collections::{BTreeSet, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use super::{Provider, ProviderCall, ProviderError, RawOutput};

/// Returns queued replies in order; errors once the queue is empty.
pub struct ScriptedProvider {
    replies: Mutex<VecDeque<Result<RawOutput, ProviderError>>>,
    calls: AtomicU64,
}

impl ScriptedProvider {
    pub fn new(replies: Vec<Result<RawOutput, ProviderError>>) -> Self {
        Self {
            replies: Mutex::new(replies.into()),
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Provider for ScriptedProvider {
    fn tag(&self) -> &str {
        "scripted"
    }

    fn call(&self, _call: &ProviderCall<'_>) -> Result<RawOutput, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.replies.lock().unwrap().pop_front().unwrap_or_else(|| {
            Err(ProviderError::Transport {
                message: "script exhausted".into(),
                retriable: false,
            })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Reply with text that is not JSON.
    Malformed,
    /// Fail the call as a (retriable) transport error.
    Transport,
}

/// Delegates to `inner`, except on the listed 1-based call numbers.
pub struct FlakyProvider {
    inner: Arc<dyn Provider>,
    failing: Box<dyn Fn(u64) -> bool + Send + Sync>,
    fault: Fault,
    calls: AtomicU64,
    prompts: Mutex<Vec<String>>,
}

impl FlakyProvider {
    pub fn new(inner: Arc<dyn Provider>, failing: impl IntoIterator<Item = u64>, fault: Fault) -> Self {
        let failing: BTreeSet<u64> = failing.into_iter().collect();
        Self::when(inner, move |n| failing.contains(&n), fault)
    }

    /// Fail whenever `predicate(call_number)` holds.
    pub fn when(
        inner: Arc<dyn Provider>,
        predicate: impl Fn(u64) -> bool + Send + Sync + 'static,
        fault: Fault,
    ) -> Self {
        Self {
            inner,
            failing: Box::new(predicate),
            fault,
            calls: AtomicU64::new(0),
            prompts: Mutex::new(Vec::new()),
        }
    }

    /// Fail every call from now on.
    pub fn always(inner: Arc<dyn Provider>, fault: Fault) -> Self {
        Self::when(inner, |_| true, fault)
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }
}

impl Provider for FlakyProvider {
    fn tag(&self) -> &str {
        self.inner.tag()
    }

    fn call(&self, call: &ProviderCall<'_>) -> Result<RawOutput, ProviderError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        self.prompts.lock().unwrap().push(call.prompt.to_string());
        if (self.failing)(n) {
            return match self.fault {
                Fault::Malformed => Ok(RawOutput::text("this is not json {")),
                Fault::Transport => Err(ProviderError::Transport {
                    message: format!("injected failure on call {n}"),
                    retriable: true,
                }),
            };
        }
        self.inner.call(call)
    }
}
