//! ADN-Agent runtime: datastore, language-model gateway, DSM suite,
//! request orchestration, fine-tuning data pipeline and benchmark harness.

pub mod bench;
pub mod datastore;
pub mod dsm;
pub mod llm;
pub mod orchestrator;
pub mod pipeline;
pub mod prompts;
