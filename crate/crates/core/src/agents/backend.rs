use std::time::Duration;

use thiserror::Error;

/// Payload shape requested from a completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemaId {
    TestCases,
    Refinement,
}

impl SchemaId {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemaId::TestCases => "test_cases",
            SchemaId::Refinement => "refinement",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited, retry after {retry_after:?}")]
    RateLimited { retry_after: Duration },
}

/// A text completion endpoint. One call is one independent request; no
/// session state is shared between calls.
pub trait CompletionBackend: Send + Sync {
    fn model_id(&self) -> &str;

    /// Attempts `complete` makes before giving up on malformed output.
    fn max_retries(&self) -> u32 {
        3
    }

    fn send(&self, prompt: &str, schema: SchemaId) -> Result<String, BackendError>;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for &B {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    fn max_retries(&self) -> u32 {
        (**self).max_retries()
    }

    fn send(&self, prompt: &str, schema: SchemaId) -> Result<String, BackendError> {
        (**self).send(prompt, schema)
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<B> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    fn max_retries(&self) -> u32 {
        (**self).max_retries()
    }

    fn send(&self, prompt: &str, schema: SchemaId) -> Result<String, BackendError> {
        (**self).send(prompt, schema)
    }
}
