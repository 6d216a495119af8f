//! Replays the checked-in fuzz corpus through the parsers. Every seed must
//! parse and round-trip; every prefix of every seed must be handled without
//! panicking.

use std::path::PathBuf;

use explicd_core::knowledge::{AnchorSet, KnowledgeBase};
use explicd_core::model::{micro_knowledge_base, Checkpoint};
use explicd_core::pnm::{decode_pgm, decode_ppm, encode_pgm, encode_ppm};
use explicd_core::synthdata::{manifest_text, parse_manifest};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("seed-"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn prefixes(bytes: &[u8]) -> impl Iterator<Item = &[u8]> {
    (0..bytes.len()).map(move |n| &bytes[..n])
}

fn text(bytes: &[u8]) -> Option<&str> {
    std::str::from_utf8(bytes).ok()
}

#[test]
fn knowledge_base_seeds() {
    for (name, bytes) in seeds("kb_json") {
        let kb = KnowledgeBase::from_json_str(text(&bytes).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(KnowledgeBase::from_json_str(&kb.to_json_pretty()).unwrap().digest(), kb.digest());
        for p in prefixes(&bytes).filter_map(text) {
            let _ = KnowledgeBase::from_json_str(p);
        }
    }
}

#[test]
fn anchor_file_seeds() {
    let kb = micro_knowledge_base();
    for (name, bytes) in seeds("anchor_file") {
        let anchors = AnchorSet::parse(text(&bytes).unwrap(), &kb, "seed").unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(AnchorSet::parse(&anchors.to_text(), &kb, "seed").unwrap().bit_eq(&anchors));
        for p in prefixes(&bytes).filter_map(text) {
            let _ = AnchorSet::parse(p, &kb, "seed");
        }
    }
}

#[test]
fn checkpoint_seeds() {
    for (name, bytes) in seeds("checkpoint") {
        let ckpt = Checkpoint::parse(text(&bytes).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(Checkpoint::parse(&ckpt.to_text()).unwrap(), ckpt);
        for p in prefixes(&bytes).filter_map(text) {
            let _ = Checkpoint::parse(p);
        }
    }
}

#[test]
fn pnm_seeds() {
    for (name, bytes) in seeds("pnm") {
        let ppm = decode_ppm(&bytes).ok();
        let pgm = decode_pgm(&bytes).ok();
        assert!(ppm.is_some() != pgm.is_some(), "{name} should decode as exactly one kind");
        if let Some(r) = ppm {
            assert_eq!(decode_ppm(&encode_ppm(&r)).unwrap(), r);
        }
        if let Some(r) = pgm {
            assert_eq!(decode_pgm(&encode_pgm(&r)).unwrap(), r);
        }
        for p in prefixes(&bytes) {
            let _ = decode_ppm(p);
            let _ = decode_pgm(p);
        }
    }
}

#[test]
fn manifest_seeds() {
    for (name, bytes) in seeds("manifest") {
        let entries = parse_manifest(text(&bytes).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(parse_manifest(&manifest_text(&entries)).unwrap(), entries);
        for p in prefixes(&bytes).filter_map(text) {
            let _ = parse_manifest(p);
        }
    }
}
