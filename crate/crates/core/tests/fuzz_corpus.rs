//! Replays the fuzz seed corpus, plus truncations and bit flips of every
//! seed, through the same invariants the fuzz targets assert.

use std::fs;
use std::path::PathBuf;

use dopanet::runner::{decode_params, encode_params, parse_plan, parse_samples_csv, samples_csv};

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds for {target}");
    files.into_iter().map(|p| fs::read(p).unwrap()).collect()
}

fn variants(seed: &[u8]) -> Vec<Vec<u8>> {
    let mut out = vec![seed.to_vec()];
    let step = (seed.len() / 64).max(1);
    for cut in (0..seed.len()).step_by(step) {
        out.push(seed[..cut].to_vec());
        let mut flipped = seed.to_vec();
        flipped[cut] ^= 1 << (cut % 8);
        out.push(flipped);
    }
    out
}

#[test]
fn plan_seeds() {
    let mut accepted = 0;
    for seed in seeds("parse_plan") {
        for bytes in variants(&seed) {
            let Ok(text) = std::str::from_utf8(&bytes) else {
                continue;
            };
            if let Ok(plan) = parse_plan(text) {
                assert!(!plan.runs().unwrap().is_empty());
                accepted += 1;
            }
        }
    }
    assert!(accepted >= 3);
}

#[test]
fn params_seeds() {
    for seed in seeds("decode_params") {
        assert!(decode_params(&seed).is_ok(), "seed must decode");
        for bytes in variants(&seed) {
            if let Ok(params) = decode_params(&bytes) {
                assert_eq!(decode_params(&encode_params(&params)).unwrap(), params);
            }
        }
    }
}

#[test]
fn samples_seeds() {
    for seed in seeds("parse_samples_csv") {
        for bytes in variants(&seed) {
            let Ok(text) = std::str::from_utf8(&bytes) else {
                continue;
            };
            if let Ok(table) = parse_samples_csv(text) {
                let again =
                    parse_samples_csv(&samples_csv(&table.values, table.codes.as_deref())).unwrap();
                assert_eq!(again.codes, table.codes);
                assert_eq!(again.values, table.values);
            }
        }
    }
}
