#![no_main]

use dopanet::runner::{parse_samples_csv, samples_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(table) = parse_samples_csv(text) {
        let again = parse_samples_csv(&samples_csv(&table.values, table.codes.as_deref()))
            .expect("written samples parse");
        assert_eq!(again.codes, table.codes);
        assert_eq!(again.values, table.values);
    }
});
