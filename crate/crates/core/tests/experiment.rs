use std::path::PathBuf;
use std::sync::Arc;

use async_trait::async_trait;

use zslreq_core::corpus::{build_task, load_promise, TaskKind};
use zslreq_core::embedding::{parse_lexicon, EmbedError, Embedder, EmbedderSpec, EmbeddingVector, StaticEmbedder};
use zslreq_core::experiment::{open_embedder, run_experiment, run_task, ConfigRef, ExperimentSpec};
use zslreq_core::labelspace::{builtin_config, parse_config, ClassId};
use zslreq_core::metrics::{render_report, ReportFormat};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures")).join(name)
}

/// Maps every text to the same vector.
struct Constant;

#[async_trait]
impl Embedder for Constant {
    fn identifier(&self) -> &str {
        "constant"
    }

    async fn embed_batch(&self, texts: &[String]) -> Vec<Result<EmbeddingVector, EmbedError>> {
        texts.iter().map(|_| EmbeddingVector::new(vec![1.0, 1.0])).collect()
    }
}

#[tokio::test]
async fn constant_backend_predicts_the_first_configured_class() {
    let items = load_promise(fixture("promise_small.csv")).unwrap();
    let task = build_task(&TaskKind::FrNfr, &items).unwrap();

    let out = run_task(&task, &builtin_config("FR_A").unwrap(), &Constant).await.unwrap();
    assert!(out.log.iter().all(|r| r.predicted == [ClassId::from("FR")]));
    let support: Vec<usize> = out.report.classes.iter().map(|m| m.support).collect();
    assert_eq!(support, [8, 12]);

    let reversed = parse_config(r#"{"id":"rev","strategy":"original","labels":{"NFR":"b","FR":"a"}}"#).unwrap();
    let out = run_task(&task, &reversed, &Constant).await.unwrap();
    assert!(out.log.iter().all(|r| r.predicted == [ClassId::from("NFR")]));
}

/// Six requirements over a two-axis lexicon: "functional" = [1, 0], "quality"
/// = [0, 1]. With labels FR = "functional" and NFR = "quality" the scores of
/// an item vector x are x0/|x| for FR and x1/|x| for NFR.
///
/// | id | gold | text      | x            | FR     | NFR    | pred |
/// |----|------|-----------|--------------|--------|--------|------|
/// | 1  | F    | save      | (0.8, 0.6)   | 0.8    | 0.6    | FR   |
/// | 2  | F    | print     | (1.0, 0.2)   | 0.9806 | 0.1961 | FR   |
/// | 3  | PE   | fast      | (0.3, 0.95)  | 0.3011 | 0.9536 | NFR  |
/// | 4  | SE   | secure    | (0.6, 0.8)   | 0.6    | 0.8    | NFR  |
/// | 5  | US   | gui       | (0.5, 0.5)   | 0.7071 | 0.7071 | FR (tie, config order) |
/// | 6  | F    | save fast | (0.55, 0.775)| 0.5787 | 0.8155 | NFR  |
///
/// FR: tp 2, fp 1, fn 1; NFR: tp 2, fp 1, fn 1. Every P, R and F1 is 2/3.
#[tokio::test]
async fn six_item_hand_oracle() {
    let lexicon = parse_lexicon(
        "functional 1 0\nquality 0 1\nsave 0.8 0.6\nprint 1 0.2\nfast 0.3 0.95\nsecure 0.6 0.8\ngui 0.5 0.5\n",
    )
    .unwrap();
    let embedder = StaticEmbedder::new(Arc::new(lexicon), "hand");
    let csv = "id,project,class,text\n1,1,F,save\n2,1,F,print\n3,1,PE,fast\n4,1,SE,secure\n5,1,US,gui\n6,1,F,save fast\n";
    let items = zslreq_core::corpus::parse_promise(csv.as_bytes()).unwrap();
    let task = build_task(&TaskKind::FrNfr, &items).unwrap();
    let config =
        parse_config(r#"{"id":"hand","strategy":"original","labels":{"FR":"functional","NFR":"quality"}}"#).unwrap();

    let out = run_task(&task, &config, &embedder).await.unwrap();
    let predicted: Vec<&str> = out.log.iter().map(|r| r.predicted[0].code()).collect();
    assert_eq!(predicted, ["FR", "FR", "NFR", "NFR", "FR", "NFR"]);

    let x: [(f64, f64); 6] = [(0.8, 0.6), (1.0, 0.2), (0.3, 0.95), (0.6, 0.8), (0.5, 0.5), (0.55, 0.775)];
    for (record, (a, b)) in out.log.iter().zip(x) {
        let norm = a.hypot(b);
        let ranking = record.ranking.as_ref().unwrap();
        let score = |code: &str| ranking.entries().iter().find(|s| s.class.code() == code).unwrap().score;
        assert!((score("FR") - a / norm).abs() < 1e-12, "item {}", record.id);
        assert!((score("NFR") - b / norm).abs() < 1e-12, "item {}", record.id);
    }

    for m in &out.report.classes {
        for v in [m.precision, m.recall, m.f1] {
            assert!((v - 2.0 / 3.0).abs() < 1e-12);
        }
    }
    assert!((out.report.weighted.f1 - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(render_report(&out.report, ReportFormat::Csv).lines().last(), Some("weighted,0.67,0.67,0.67,6"));
}

fn fixture_spec(task: &str, config: &str, k: Option<usize>) -> ExperimentSpec {
    ExperimentSpec {
        dataset: fixture("promise_small.csv"),
        task: task.into(),
        scope: None,
        k,
        config: ConfigRef(config.into()),
        backend: EmbedderSpec::static_lexicon(fixture("lexicon.txt")),
        batch_size: 32,
    }
}

#[tokio::test]
async fn multilabel_log_rows_have_k_classes() {
    let spec = fixture_spec("nfr-multilabel", "MultiNFR_A", Some(2));
    let embedder = open_embedder(&spec.backend, spec.batch_size).unwrap();
    let out = run_experiment(&spec, embedder.as_ref()).await.unwrap();
    assert_eq!(out.log.len(), 12);
    assert!(out.log.iter().all(|r| r.predicted.len() == 2));
}

#[tokio::test]
async fn recall_never_drops_when_k_grows() {
    let mut previous: Option<Vec<f64>> = None;
    for k in 1..=4 {
        let spec = fixture_spec("nfr-multilabel", "MultiNFR_B", Some(k));
        let embedder = open_embedder(&spec.backend, spec.batch_size).unwrap();
        let out = run_experiment(&spec, embedder.as_ref()).await.unwrap();
        let recalls: Vec<f64> = out.report.classes.iter().map(|m| m.recall).collect();
        if let Some(p) = previous {
            assert!(p.iter().zip(&recalls).all(|(a, b)| b >= a), "k = {k}");
        }
        previous = Some(recalls);
    }
    assert!(previous.unwrap().iter().all(|r| *r == 1.0));
}

#[tokio::test]
async fn runs_are_deterministic_and_support_matches_gold() {
    for (task, config) in [("fr-nfr", "FR_E"), ("nfr-multiclass", "MultiNFR_C"), ("nfr-binary:US", "US_B")] {
        let spec = fixture_spec(task, config, None);
        let (prepared, _) = spec.prepare().unwrap();
        let a = run_experiment(&spec, open_embedder(&spec.backend, 32).unwrap().as_ref()).await.unwrap();
        let b = run_experiment(&spec, open_embedder(&spec.backend, 32).unwrap().as_ref()).await.unwrap();
        assert_eq!(render_report(&a.report, ReportFormat::Csv), render_report(&b.report, ReportFormat::Csv));
        assert_eq!(a.render_log(), b.render_log());
        let support: Vec<usize> = a.report.classes.iter().map(|m| m.support).collect();
        let gold: Vec<usize> = prepared.class_counts().iter().map(|(_, n)| *n).collect();
        assert_eq!(support, gold, "{task}");
    }
}

#[tokio::test]
async fn bad_specs_are_rejected() {
    let spec = fixture_spec("fr-nfr", "FR_A", Some(2));
    assert!(spec.prepare().is_err());
    let spec = fixture_spec("fr-nfr", "MultiNFR_A", None);
    assert_eq!(spec.prepare().unwrap_err().kind(), zslreq_core::ErrorKind::Data);
    let spec = fixture_spec("fr-nfr", "NoSuchConfig", None);
    assert_eq!(spec.prepare().unwrap_err().kind(), zslreq_core::ErrorKind::Usage);
}
