mod common;

use cineforge::compositor::encode_png;
use cineforge::metrics::{evaluate, parsing_accuracy};
use cineforge::FrameBuffer;

#[test]
fn shipped_corpus() {
    let r = parsing_accuracy(&common::corpus_dir()).unwrap();
    assert!(r.well_formed >= 25 && r.malformed >= 10, "{r:?}");
    assert_eq!(r.total, r.well_formed + r.malformed);
    assert_eq!(r.total, r.parsed + r.fallback);
    assert_eq!(r.accuracy, 1.0, "{:?}", r.mismatches);
    assert_eq!(r.malformed_fallbacks, r.malformed, "{:?}", r.mismatches);
    assert!(r.mismatches.is_empty());
}

#[test]
fn corpus_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    assert!(parsing_accuracy(dir.path()).is_err());
    std::fs::write(dir.path().join("readme.md"), "untagged").unwrap();
    assert!(parsing_accuracy(dir.path()).is_err());
    std::fs::write(dir.path().join("a.malformed.json"), "[").unwrap();
    assert!(parsing_accuracy(dir.path()).is_err());

    std::fs::write(dir.path().join("b.wellformed.txt"), "one\n---\ntwo").unwrap();
    // tagged well-formed but actually broken: counted against accuracy
    std::fs::write(dir.path().join("c.wellformed.json"), "{\"scenes\": 3}").unwrap();
    let r = parsing_accuracy(dir.path()).unwrap();
    assert_eq!((r.total, r.parsed, r.fallback), (3, 1, 2));
    assert_eq!(r.accuracy, 0.5);
    assert_eq!(r.mismatches, ["c.wellformed.json"]);
}

#[test]
fn directory_evaluation() {
    let (refs, gens) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let img = FrameBuffer::filled(16, 16, [90, 120, 30]);
    std::fs::write(refs.path().join("s1.png"), encode_png(&img).unwrap()).unwrap();
    // same content at another size: resized before comparison
    std::fs::write(gens.path().join("s1.png"), encode_png(&FrameBuffer::filled(32, 24, [90, 120, 30])).unwrap()).unwrap();
    std::fs::write(refs.path().join("only_ref.png"), encode_png(&img).unwrap()).unwrap();
    std::fs::write(refs.path().join("story.txt"), "the cat sat down").unwrap();
    std::fs::write(gens.path().join("story.txt"), "the cat sat").unwrap();

    let report = evaluate(refs.path(), gens.path(), Some(&common::corpus_dir())).unwrap();
    assert_eq!(report.ssim_pairs, 1);
    assert_eq!(report.ssim_mean, Some(1.0));
    assert_eq!(report.bleu_pairs, 1);
    assert_eq!(report.bleu, Some((1.0f64 - 4.0 / 3.0).exp()));
    assert_eq!(report.parsing.unwrap().accuracy, 1.0);

    let empty = evaluate(gens.path(), refs.path(), None).unwrap();
    assert_eq!(empty.parsing, None);
}
