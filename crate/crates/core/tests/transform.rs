use std::collections::BTreeMap;
use std::sync::Arc;

use dualchain_core::backend::{Client, MockBackend, MockRule, Stage};
use dualchain_core::datamodel::{
    judgment_options, Annotation, AnswerKey, ChoiceOption, Question, QuestionFormat, SeriesCorpus, TaskTaxonomy,
    JUDGMENT_TRUE,
};
use dualchain_core::fixtures::{generate_synthetic_corpus, generation_rules, synthetic_annotations, StorySpec};
use dualchain_core::templates::TemplateSet;
use dualchain_core::transform::{
    generate_tasks, generation_prompt, quality_sample, structural_checker, verdict_checker, GenerationRequest,
    TransformConfig, TransformError,
};

const STATEMENT: &str = "Sima Yi's quilt was praised; then the manager was scared by a spider";

fn corpus() -> SeriesCorpus {
    generate_synthetic_corpus(&StorySpec { n_series: 1, episodes_per_series: 2, ..StorySpec::default() }).unwrap().0
}

fn annotation() -> Annotation {
    Annotation {
        id: "ann-001".into(),
        series_id: "s01".into(),
        episode_index: 1,
        time_spans: vec![[2.0, 6.0], [20.0, 24.0]],
        event_summary: "quilt inspection".into(),
        character_refs: vec![],
        portrait_refs: vec![],
        declarative_statement: STATEMENT.into(),
        subtask: "foreshadowing_and_payoff".into(),
    }
}

fn client(rules: Vec<MockRule>) -> Client {
    Client::new(Arc::new(MockBackend::with_rules(1, rules)))
}

#[test]
fn judgment_keys_the_statement_true() {
    let corpus = corpus();
    let rules = vec![MockRule::reply(format!("Statement: {STATEMENT}.\nAnswer: True"))
        .for_question("ann-001")
        .at_stage(Stage::Generate)
        .containing("true/false")];
    let req = GenerationRequest::from_corpus(annotation(), &corpus, vec![QuestionFormat::Judgment], 1).unwrap();
    let out =
        generate_tasks(&req, &client(rules), &TemplateSet::builtin(), &corpus.taxonomy, &TransformConfig::default())
            .unwrap();
    assert_eq!(out.questions.len(), 1);
    let q = &out.questions[0];
    assert_eq!(q.id, "ann-001-tf");
    assert_eq!(q.options, judgment_options());
    assert_eq!(q.answer_text(), Some(JUDGMENT_TRUE));
    assert!(q.stem.contains("manager was scared by a spider"));
    assert_eq!(q.provenance.as_ref().unwrap().annotation_id, "ann-001");
}

#[test]
fn all_formats_from_scripted_generator() {
    let corpus = corpus();
    let ann = Annotation { character_refs: vec![corpus.series[0].characters[0].name.clone()], ..annotation() };
    let rules = generation_rules(std::slice::from_ref(&ann));
    let formats = vec![QuestionFormat::Multichoice, QuestionFormat::Judgment, QuestionFormat::OpenEnded];
    for d in 1..=4 {
        let req = GenerationRequest::from_corpus(ann.clone(), &corpus, formats.clone(), d).unwrap();
        let out = generate_tasks(
            &req,
            &client(rules.clone()),
            &TemplateSet::builtin(),
            &corpus.taxonomy,
            &TransformConfig { min_overlap: 0.0 },
        )
        .unwrap();
        assert!(out.dropped.is_empty(), "{:?}", out.dropped);
        let mc = out.questions.iter().find(|q| q.format == QuestionFormat::Multichoice).unwrap();
        assert_eq!(mc.options.len(), d + 1);
        assert_eq!(mc.answer, AnswerKey::label("A"));
        let oe = out.questions.iter().find(|q| q.format == QuestionFormat::OpenEnded).unwrap();
        assert_eq!(oe.answer.reference_text.as_deref(), Some(STATEMENT));
    }
}

#[test]
fn prompt_carries_statement_context_and_layout() {
    let corpus = corpus();
    let req = GenerationRequest::from_corpus(annotation(), &corpus, vec![QuestionFormat::Multichoice], 3).unwrap();
    let p = generation_prompt(&req, QuestionFormat::Multichoice, &TemplateSet::builtin()).unwrap();
    assert!(p.contains(STATEMENT));
    assert!(p.contains("Give exactly 4 options"));
    assert!(p.contains(&corpus.series[0].theme_text));
    for l in ["A.", "B.", "C.", "D.", "Answer:"] {
        assert!(p.contains(l), "{l}");
    }
}

#[test]
fn unusable_generations_are_dropped_with_reasons() {
    let corpus = corpus();
    let rules = vec![
        MockRule::reply("Question: Who was scared?\nA. The manager\nB. Nobody")
            .at_stage(Stage::Generate)
            .containing("multiple-choice"),
        MockRule::reply("Question: What happened?\nAnswer: fireworks lit the harbour")
            .at_stage(Stage::Generate)
            .containing("open-ended"),
        MockRule::reply(format!("Statement: {STATEMENT}\nAnswer: True"))
            .at_stage(Stage::Generate)
            .containing("true/false"),
    ];
    let formats = vec![QuestionFormat::Multichoice, QuestionFormat::Judgment, QuestionFormat::OpenEnded];
    let req = GenerationRequest::from_corpus(annotation(), &corpus, formats, 1).unwrap();
    let out =
        generate_tasks(&req, &client(rules), &TemplateSet::builtin(), &corpus.taxonomy, &TransformConfig::default())
            .unwrap();
    assert_eq!(out.questions.len(), 1);
    let reasons: BTreeMap<QuestionFormat, String> = out.dropped.iter().map(|d| (d.format, d.reason.clone())).collect();
    assert_eq!(reasons[&QuestionFormat::Multichoice], "no answer key");
    assert!(reasons[&QuestionFormat::OpenEnded].contains("overlaps"));
}

#[test]
fn nothing_surviving_is_an_error() {
    let corpus = corpus();
    let rules = vec![MockRule::reply("I cannot help with that.").at_stage(Stage::Generate)];
    let req = GenerationRequest::from_corpus(annotation(), &corpus, vec![QuestionFormat::Judgment], 1).unwrap();
    let err =
        generate_tasks(&req, &client(rules), &TemplateSet::builtin(), &corpus.taxonomy, &TransformConfig::default())
            .unwrap_err();
    assert!(matches!(err, TransformError::GenerationFailed { ref dropped, .. } if dropped.len() == 1));
}

#[test]
fn request_validation() {
    let corpus = corpus();
    let req = GenerationRequest::from_corpus(annotation(), &corpus, vec![QuestionFormat::Multichoice], 5);
    assert!(matches!(req, Err(TransformError::DistractorCount(5))));
    let bad = Annotation { episode_index: 9, ..annotation() };
    assert!(matches!(
        GenerationRequest::from_corpus(bad, &corpus, vec![QuestionFormat::Judgment], 1),
        Err(TransformError::MissingEpisode { .. })
    ));
    let empty = Annotation { declarative_statement: " ".into(), ..annotation() };
    let req = GenerationRequest::from_corpus(empty, &corpus, vec![QuestionFormat::Judgment], 1).unwrap();
    let err =
        generate_tasks(&req, &client(vec![]), &TemplateSet::builtin(), &corpus.taxonomy, &TransformConfig::default())
            .unwrap_err();
    assert!(matches!(err, TransformError::InvalidAnnotation { .. }));
}

fn population(n: usize) -> Vec<Question> {
    (0..n)
        .map(|i| Question {
            id: format!("g{i:03}"),
            series_id: "s01".into(),
            episode_index: 1,
            subtask: "plot_development".into(),
            format: QuestionFormat::Multichoice,
            stem: format!("stem {i}"),
            options: vec![ChoiceOption::new("A", "x"), ChoiceOption::new("B", "y")],
            answer: AnswerKey::label("A"),
            split: None,
            provenance: None,
        })
        .collect()
}

#[test]
fn audit_pass_rate_arithmetic() {
    let qs = population(500);
    let verdicts: BTreeMap<String, bool> = qs.iter().enumerate().map(|(i, q)| (q.id.clone(), i % 25 != 0)).collect();
    let report = quality_sample(&qs, 500, 3, verdict_checker(verdicts)).unwrap();
    assert_eq!(report.passed, 480);
    assert!((report.pass_rate - 0.96).abs() < 1e-12);

    let a = quality_sample(&qs, 50, 9, structural_checker(&TaskTaxonomy::builtin())).unwrap();
    let b = quality_sample(&qs, 50, 9, structural_checker(&TaskTaxonomy::builtin())).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.pass_rate, 1.0);
    assert!(matches!(quality_sample(&qs, 501, 1, |_| true), Err(TransformError::SampleTooLarge { .. })));
}

#[test]
fn synthetic_annotations_transform_cleanly() {
    let (corpus, truth) =
        generate_synthetic_corpus(&StorySpec { n_series: 1, episodes_per_series: 2, ..StorySpec::default() }).unwrap();
    let anns = synthetic_annotations(&truth, "plot_development");
    assert!(!anns.is_empty());
    let client = client(generation_rules(&anns));
    for a in anns {
        let req =
            GenerationRequest::from_corpus(a, &corpus, vec![QuestionFormat::Multichoice, QuestionFormat::Judgment], 3)
                .unwrap();
        let out = generate_tasks(&req, &client, &TemplateSet::builtin(), &corpus.taxonomy, &TransformConfig::default())
            .unwrap();
        assert_eq!(out.questions.len(), 2, "{:?}", out.dropped);
    }
}
