#![no_main]

use explicd_core::pnm::{decode_pgm, decode_ppm, encode_pgm, encode_ppm};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(r) = decode_ppm(data) {
        assert_eq!(decode_ppm(&encode_ppm(&r)).expect("encoded PPM decodes"), r);
    }
    if let Ok(r) = decode_pgm(data) {
        assert_eq!(decode_pgm(&encode_pgm(&r)).expect("encoded PGM decodes"), r);
    }
});
