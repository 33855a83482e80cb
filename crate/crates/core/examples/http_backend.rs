//! Summarizes a document through an OpenAI-compatible server.
//!
//! The API key is read from the environment variable named by
//! `STORYSUM_API_KEY_ENV` (default `OPENAI_API_KEY`), never from a file.
//!
//!     STORYSUM_ENDPOINT=http://localhost:8000/v1 STORYSUM_MODEL=my-model \
//!         cargo run --example http_backend -- PATH

use storysum::{run_pipeline, BackendDescriptor, BackendKind, Medium, NarrativeDocument, Preset};

fn main() -> anyhow::Result<()> {
    let (Ok(endpoint), Ok(model)) = (std::env::var("STORYSUM_ENDPOINT"), std::env::var("STORYSUM_MODEL")) else {
        eprintln!("set STORYSUM_ENDPOINT and STORYSUM_MODEL to run this example");
        return Ok(());
    };
    let key_var = std::env::var("STORYSUM_API_KEY_ENV").unwrap_or_else(|_| "OPENAI_API_KEY".into());
    let api_key_env = std::env::var_os(&key_var).map(|_| key_var);

    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/screenplay_chain/input.txt").into());
    let doc = NarrativeDocument::ingest(&std::fs::read_to_string(path)?, Medium::Screenplay)?;
    let config = Preset::Mensa
        .config()
        .with_backend(BackendDescriptor::new(BackendKind::Http { endpoint, model, api_key_env }).with_max_in_flight(4));
    let manifest = run_pipeline(&doc, &config)?;
    println!("{}", manifest.final_summary.unwrap_or_default());
    eprintln!("{} calls, halt reason {:?}", manifest.totals.calls, manifest.halt_reason);
    Ok(())
}
