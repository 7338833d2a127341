//! Subtask translation with a bounded retry loop: every rejected answer
//! is fed back with the validation errors.

use super::command::{parse_command, Command, RecordView};
use super::manifest::DsmManifest;
use crate::datastore::Datastore;
use crate::llm::ChatBackend;
use crate::prompts;

pub const MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct TranslateAttempt {
    /// 1-based.
    pub attempt: u32,
    /// Raw backend output; `None` when the call itself failed.
    pub raw: Option<String>,
    pub errors: Vec<String>,
}

#[allow(clippy::too_many_arguments)]
pub fn translate(
    backend: &dyn ChatBackend,
    manifest: &DsmManifest,
    datastore: &Datastore,
    subtask: &str,
    description: &str,
    records: &[RecordView<'_>],
    seed: Option<u64>,
    mut on_attempt: impl FnMut(&TranslateAttempt),
) -> Result<Command, Vec<String>> {
    let mut errors: Vec<String> = Vec::new();
    for attempt in 1..=MAX_ATTEMPTS {
        let prev = (attempt > 1).then_some(errors.as_slice());
        let user = prompts::translator_user(subtask, manifest, description, records, prev);
        let (raw, result) = match backend.ask(prompts::TRANSLATOR, &user, seed) {
            Ok(raw) => {
                let r = parse_command(&raw, manifest, datastore, records);
                (Some(raw), r)
            }
            Err(e) => (None, Err(vec![format!("backend error: {e}")])),
        };
        let errs = result.as_ref().err().cloned().unwrap_or_default();
        on_attempt(&TranslateAttempt {
            attempt,
            raw,
            errors: errs.clone(),
        });
        match result {
            Ok(cmd) => return Ok(cmd),
            Err(e) => errors = e,
        }
    }
    Err(errors)
}
