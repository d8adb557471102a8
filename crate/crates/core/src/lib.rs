pub mod agent;
pub mod critic;
pub mod drugdata;
pub mod effect;
pub mod llm;
pub mod message;
pub mod par;
pub mod pipeline;
pub mod rag;
pub mod scoring;
pub mod task;
pub mod tool;
pub mod transcript;
