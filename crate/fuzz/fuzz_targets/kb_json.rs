#![no_main]

use explicd_core::knowledge::KnowledgeBase;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(kb) = KnowledgeBase::from_json_str(text) {
        let again = KnowledgeBase::from_json_str(&kb.to_json_pretty()).expect("serialized knowledge base reparses");
        assert_eq!(again.digest(), kb.digest());
    }
});
