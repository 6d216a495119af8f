#![no_main]

use explicd_core::knowledge::AnchorSet;
use explicd_core::model::micro_knowledge_base;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let kb = micro_knowledge_base();
    if let Ok(anchors) = AnchorSet::parse(text, &kb, "fuzz") {
        let again = AnchorSet::parse(&anchors.to_text(), &kb, "fuzz").expect("written anchors reparse");
        assert!(again.bit_eq(&anchors));
    }
});
