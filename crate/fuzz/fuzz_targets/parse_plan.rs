//! Plan files are user input: parsing must return Ok or Err, never panic,
//! and an accepted plan must expand into runs.
#![no_main]

use dopanet::runner::parse_plan;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(plan) = parse_plan(text) {
        let runs = plan.runs().expect("validated plan expands");
        assert!(!runs.is_empty());
    }
});
