use std::fs;
use std::io::BufReader;

use wordpix::corpus::{encode_corpus, read_20news, CorpusRecord, EncodeOptions, Manifest, Split};
use wordpix::embeddings::EmbeddingTable;
use wordpix::layout::{EncodingParams, LayoutPlan};
use wordpix::raster::load_png;
use wordpix::tokenizer::Document;

fn toy_table() -> EmbeddingTable {
    EmbeddingTable::from_entries([
        ("kidco", vec![0.0f32, 1.0, 2.0, 3.0, 4.0, 5.0]),
        ("safeway", vec![5.0, 4.0, 3.0, 2.0, 1.0, 0.0]),
        ("gate", vec![2.5, 2.5, 2.5, 2.5, 2.5, 2.5]),
    ])
    .unwrap()
}

fn small_params() -> EncodingParams {
    EncodingParams {
        image_width: 64,
        image_height: 64,
        superpixel: 2,
        word_width: 2,
        spacing: 4,
        feature_count: 6,
        ..EncodingParams::default()
    }
}

fn record(id: &str, label: &str, text: &str, split: Split) -> CorpusRecord {
    CorpusRecord {
        document: Document::new(id, label, text),
        split,
    }
}

#[test]
fn toy_corpus_produces_manifest_and_plans() {
    let dir = tempfile::tempdir().unwrap();
    let records = [
        record("a", "1", "Kidco gate", Split::Train),
        record("b", "2", "safeway mystery gate", Split::Test),
    ];
    let report = encode_corpus(
        &records,
        &toy_table(),
        &small_params(),
        &EncodeOptions::default(),
        dir.path(),
    )
    .unwrap();
    assert_eq!(report.tokens(), 5);
    assert_eq!(report.oov(), 1);
    assert_eq!(report.failed(), 0);

    let manifest =
        Manifest::read(BufReader::new(fs::File::open(dir.path().join("manifest.tsv")).unwrap()))
            .unwrap();
    assert_eq!(manifest, report.manifest);
    assert_eq!(manifest.params_digest, small_params().digest());
    let b = &manifest.entries[1];
    assert_eq!((b.split, b.label.as_str(), b.token_count, b.oov_count), (Split::Test, "2", 3, 1));

    let png = dir.path().join("test/2/b.png");
    let img = load_png(&png).unwrap();
    assert_eq!(img.meta.oov, 1);
    let (plan, params) =
        LayoutPlan::read_sidecar(BufReader::new(fs::File::open(png.with_extension("plan")).unwrap()))
            .unwrap();
    assert_eq!(params.canonical(), small_params().canonical());
    assert_eq!(plan.placements.len(), 2);
}

#[test]
fn all_oov_record_renders_background() {
    let dir = tempfile::tempdir().unwrap();
    let records = [record("x", "1", "nothing known here", Split::Train)];
    let params = EncodingParams {
        background: [9, 8, 7],
        ..small_params()
    };
    let report =
        encode_corpus(&records, &toy_table(), &params, &EncodeOptions::default(), dir.path()).unwrap();
    assert_eq!(report.manifest.entries[0].token_count, 3);
    assert_eq!(report.manifest.entries[0].oov_count, 3);
    let img = load_png(&dir.path().join("train/1/x.png")).unwrap();
    assert!(img.pixels().chunks(3).all(|px| px == [9, 8, 7]));
}

#[test]
fn overflow_is_counted_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let text = vec!["gate"; 200].join(" ");
    let records = [record("long", "1", &text, Split::Train)];
    let report = encode_corpus(
        &records,
        &toy_table(),
        &small_params(),
        &EncodeOptions::default(),
        dir.path(),
    )
    .unwrap();
    let cap = wordpix::layout::capacity(&small_params()).unwrap();
    assert_eq!(report.manifest.entries[0].overflow_count, 200 - cap);
}

#[test]
fn newsgroup_tree_maps_to_coarse_categories() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    for (split, group, file, body) in [
        ("20news-bydate-train", "comp.graphics", "38", "pixels"),
        ("20news-bydate-train", "comp.graphics", "7", "gate"),
        ("20news-bydate-train", "sci.space", "1", "orbit"),
        ("20news-bydate-test", "talk.politics.guns", "12", "law"),
        ("20news-bydate-test", "soc.religion.christian", "3", "faith"),
    ] {
        let d = root.join(split).join(group);
        fs::create_dir_all(&d).unwrap();
        fs::write(d.join(file), body).unwrap();
    }
    let categories: Vec<String> = ["comp", "politics", "rec", "religion"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let corpus = read_20news(root, &categories).unwrap();
    let summary: Vec<(Split, &str, &str)> = corpus
        .records
        .iter()
        .map(|r| (r.split, r.document.label.as_str(), r.document.text.as_str()))
        .collect();
    assert_eq!(
        summary,
        [
            (Split::Train, "comp", "gate"),
            (Split::Train, "comp", "pixels"),
            (Split::Test, "religion", "faith"),
            (Split::Test, "politics", "law"),
        ]
    );
}
