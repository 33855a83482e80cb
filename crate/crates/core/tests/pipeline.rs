//! End-to-end runs with deterministic backends. Expected counts are worked
//! out by hand in the comments next to each assertion.

mod common;

use storysum::agents::MockBackend;
use storysum::pipeline::{Ablation, Pipeline, RunStatus};
use storysum::{
    word_count, BackendDescriptor, ChunkSize, HaltReason, Medium, NarrativeDocument, PipelineConfig, StageKind,
};

use common::*;

fn doc(scenes: usize, words: usize) -> NarrativeDocument {
    NarrativeDocument::ingest(&screenplay(scenes, words), Medium::Screenplay).unwrap()
}

#[test]
fn identity_preprocess_and_summarize_call_counts() {
    // 20 scenes in groups of 8: 3 preprocessing calls. Identity keeps every
    // line, so the preprocessed text still has 20 scenes: 3 more calls.
    let d = doc(20, 50);
    let config = PipelineConfig::default()
        .with_stages([StageKind::Preprocess, StageKind::Summarize])
        .with_backend(BackendDescriptor::mock_identity());
    let m = storysum::run_pipeline(&d, &config).unwrap();
    assert_eq!(m.records.len(), 2);
    assert_eq!(m.records[0].calls_made, 3);
    assert_eq!(m.records[1].calls_made, 3);
    assert_eq!(m.totals.calls, 6);
    assert_eq!(m.final_word_count(), Some(1000));
    assert_eq!(m.halt_reason, None);
    assert_eq!(m.status, RunStatus::Complete);
}

#[test]
fn halving_run_matches_hand_arithmetic() {
    // 16 scenes of 200 words (3200). P: two chunks of 1600, each halved to
    // 800 on one line, so the result re-segments into 2 scenes (1600 words).
    // S: one chunk, halved to 800. C with delta 200: each original scene is
    // exactly 200 words of sentences (1 + 3 + 196), giving 4 chunks halved to
    // 100 words each: 400, not below theta 400, kept. Next pass: 2 chunks of
    // 200 halved to 100 each: 200 < 400, so the 400-word iterate is returned.
    let d = doc(16, 200);
    assert_eq!(d.word_count(), 3200);
    let config = PipelineConfig::default()
        .with_backend(BackendDescriptor::mock_halve())
        .with_delta(ChunkSize::Words(200))
        .with_theta(400);
    let m = storysum::run_pipeline(&d, &config).unwrap();

    let summary: Vec<(StageKind, usize, usize, usize, usize)> = m
        .records
        .iter()
        .map(|r| (r.stage, r.iteration, r.chunk_count, r.output_word_count, r.calls_made))
        .collect();
    assert_eq!(
        summary,
        vec![
            (StageKind::Preprocess, 0, 2, 1600, 2),
            (StageKind::Summarize, 0, 1, 800, 1),
            (StageKind::Compress, 1, 4, 400, 4),
            (StageKind::Compress, 2, 2, 200, 2),
        ]
    );
    assert_eq!(m.totals.calls, 9);
    assert_eq!(m.iterations_used, 2);
    assert_eq!(m.halt_reason, Some(HaltReason::BelowThetaPreviousReturned));
    assert_eq!(m.selected_record, Some(2));
    let summary = m.final_summary.as_deref().unwrap();
    assert_eq!(summary, m.records[2].output_text);
    assert_eq!(word_count(summary), 400);
    for (k, chunk) in m.records[2].per_chunk_outputs.iter().enumerate() {
        assert!(chunk.starts_with(&format!("INT. ROOM{k} DAY S{k}w0.")), "chunk {k}: {chunk}");
        assert_eq!(word_count(chunk), 100);
    }
}

#[test]
fn ablations_run_their_stage_subsets() {
    let d = doc(16, 200);
    let base = PipelineConfig::default().with_backend(BackendDescriptor::mock_halve()).with_theta(200);
    let stages = |m: &storysum::RunManifest| {
        let mut v: Vec<StageKind> = m.records.iter().map(|r| r.stage).collect();
        v.dedup();
        v
    };
    use StageKind::*;
    type Expected = (Ablation, &'static [StageKind], Option<usize>, Option<usize>);
    let expect: [Expected; 5] = [
        // One call over all 3200 words.
        (Ablation::ZeroShot, &[Summarize], Some(1), Some(1600)),
        // Two P calls (1600), then one S call over everything.
        (Ablation::PreprocessZeroShot, &[Preprocess, Summarize], Some(3), Some(800)),
        // Two P calls; the result has 2 scenes, so S is one chunk anyway.
        (Ablation::PreprocessSummarize, &[Preprocess, Summarize], Some(3), Some(800)),
        (Ablation::SummarizeCompress, &[Summarize, Compress], None, None),
        (Ablation::Full, &[Preprocess, Summarize, Compress], None, None),
    ];
    for (ablation, kinds, calls, words) in expect {
        let m = storysum::run_pipeline(&d, &ablation.apply(&base)).unwrap();
        assert_eq!(stages(&m), kinds, "{}", ablation.label());
        if let Some(c) = calls {
            assert_eq!(m.totals.calls, c, "{}", ablation.label());
        }
        if let Some(w) = words {
            assert_eq!(m.final_word_count(), Some(w), "{}", ablation.label());
        }
        if kinds.contains(&Compress) {
            assert!(m.halt_reason.is_some());
            assert!(m.final_word_count().unwrap() >= 200, "{}", ablation.label());
        }
    }
}

#[test]
fn runs_are_reproducible() {
    let d = doc(12, 120);
    let config = PipelineConfig::default()
        .with_backend(BackendDescriptor::mock_truncate(0.7))
        .with_delta(ChunkSize::Words(150))
        .with_theta(150);
    let a = storysum::run_pipeline(&d, &config).unwrap();
    let b = storysum::run_pipeline(&d, &config).unwrap();
    assert_ne!(a.run_id, b.run_id);
    assert_eq!(a.without_run_specifics().to_json(), b.without_run_specifics().to_json());
}

#[test]
fn compression_trace_shrinks_and_respects_theta() {
    let d = doc(10, 100);
    for theta in [1, 50, 120, 333, 600, 999] {
        let config = PipelineConfig::default()
            .with_stages([StageKind::Compress])
            .with_backend(BackendDescriptor::mock_truncate(0.6))
            .with_delta(ChunkSize::Words(90))
            .with_theta(theta);
        let m = storysum::run_pipeline(&d, &config).unwrap();
        let trace: Vec<usize> = m.records.iter().map(|r| r.output_word_count).collect();
        let kept = match m.halt_reason.unwrap() {
            HaltReason::Stalled | HaltReason::MaxIterations => trace.len(),
            _ => trace.len() - 1,
        };
        assert!(trace[..kept].windows(2).all(|w| w[1] < w[0]), "theta {theta}: {trace:?}");
        let final_words = m.final_word_count().unwrap();
        match m.halt_reason.unwrap() {
            HaltReason::InitialBelowTheta => assert_eq!(final_words, 1000),
            HaltReason::BelowThetaPreviousReturned => {
                assert!(final_words >= theta);
                assert!(*trace.last().unwrap() < theta);
            }
            HaltReason::MaxIterations => {
                assert_eq!(m.iterations_used, 10);
                assert!(final_words >= theta);
            }
            other => panic!("theta {theta}: unexpected {other}"),
        }
    }
}

#[test]
fn initial_text_within_theta_skips_compression() {
    let d = doc(4, 50);
    let config = PipelineConfig::default()
        .with_stages([StageKind::Compress])
        .with_backend(BackendDescriptor::mock_halve())
        .with_theta(200);
    let m = storysum::run_pipeline(&d, &config).unwrap();
    assert_eq!(m.halt_reason, Some(HaltReason::InitialBelowTheta));
    assert_eq!(m.iterations_used, 0);
    assert_eq!(m.totals.calls, 0);
    assert_eq!(m.final_word_count(), Some(200));
}

#[test]
fn reflection_runs_once_over_the_selected_summary() {
    let d = doc(8, 40);
    let config = PipelineConfig::default()
        .with_stages([StageKind::Summarize, StageKind::Reflect])
        .with_backend(BackendDescriptor::mock_identity());
    let m = storysum::run_pipeline(&d, &config).unwrap();
    let last = m.records.last().unwrap();
    assert_eq!(last.stage, StageKind::Reflect);
    assert_eq!(last.calls_made, 1);
    assert_eq!(m.totals.calls, 2);
}

#[test]
fn failed_run_keeps_completed_stages_on_disk() {
    let d = doc(16, 200);
    let config = PipelineConfig::default()
        .with_backend(BackendDescriptor::mock_halve())
        .with_delta(ChunkSize::Words(200))
        .with_theta(400);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.json");
    // P takes 2 calls and S 1; the fifth call (second C chunk) fails.
    let flaky = FailAfter::new(MockBackend::halve(), 4);
    let err = Pipeline::new(&config, &flaky).persist_to(&path).run(&d).unwrap_err();
    assert!(err.error.backend_error().is_some());
    let partial = storysum::pipeline::load_manifest(&path).unwrap();
    assert!(matches!(partial.status, RunStatus::Failed { .. }));
    assert_eq!(partial.records.len(), 2);
    assert_eq!(err.manifest.unwrap().records.len(), 2);

    // Resuming replays P and S and only makes the 6 compression calls.
    let fresh = FailAfter::new(MockBackend::halve(), usize::MAX);
    let m = Pipeline::new(&config, &fresh).persist_to(&path).resume(partial, &d).unwrap();
    assert_eq!(fresh.calls(), 6);
    assert_eq!(m.totals.calls, 9);
    assert_eq!(m.final_word_count(), Some(400));
    assert_eq!(storysum::pipeline::load_manifest(&path).unwrap(), m);
}

#[test]
fn resume_refuses_a_changed_config() {
    let d = doc(8, 40);
    let config = PipelineConfig::default().with_backend(BackendDescriptor::mock_halve());
    let m = storysum::run_pipeline(&d, &config).unwrap();
    let changed = config.clone().with_theta(10);
    let backend = MockBackend::halve();
    let err = Pipeline::new(&changed, &backend).resume(m, &d).unwrap_err();
    assert!(matches!(err.error, storysum::pipeline::PipelineError::ConfigDrift { .. }));
}
