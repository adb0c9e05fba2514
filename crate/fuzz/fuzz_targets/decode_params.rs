//! Parameter snapshots: decoding arbitrary bytes must not panic, and
//! whatever decodes must re-encode to bytes that decode to the same value.
#![no_main]

use dopanet::runner::{decode_params, encode_params};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(params) = decode_params(data) {
        let again = decode_params(&encode_params(&params)).expect("re-encoded snapshot decodes");
        assert_eq!(params, again);
    }
});
