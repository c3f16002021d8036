//! Shared fixtures for the integration and acceptance tests.
#![allow(dead_code)]

use hookgan::codec::{ColumnKind, ColumnSpec, TableSchema};
use hookgan::gan::Hyper;
use hookgan::rng::{seeded, standard_normal};
use rand::Rng;

/// X ~ 0.5·N(0,1) + 0.5·N(5,1); K ∈ {a, b} with P(b | X > 2.5) = 0.9 and
/// P(b | X ≤ 2.5) = 0.1.
pub fn toy_rows(n: usize, seed: u64) -> Vec<Vec<String>> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| {
            let x = if rng.gen::<bool>() { 0.0 } else { 5.0 } + standard_normal(&mut rng);
            let p_b = if x > 2.5 { 0.9 } else { 0.1 };
            let k = if rng.gen::<f64>() < p_b { "b" } else { "a" };
            vec![format!("{x}"), k.to_string()]
        })
        .collect()
}

pub fn toy_schema() -> TableSchema {
    TableSchema::new(vec![
        ColumnSpec::new("x", ColumnKind::Continuous),
        ColumnSpec::new("k", ColumnKind::Categorical).target(),
    ])
    .unwrap()
}

/// A small network for tests that exercise plumbing, not fidelity.
pub fn tiny_hyper(steps: u64) -> Hyper {
    Hyper {
        z_dim: 8,
        gen_hidden: vec![16],
        disc_hidden: vec![16],
        aux_hidden: vec![8; 4],
        batch: 8,
        steps,
        token_width: 4,
        ..Hyper::default()
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// CSV text of a table with a header.
pub fn csv_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut buf = Vec::new();
    hookgan::cli::write_table(&mut buf, header, rows).unwrap();
    String::from_utf8(buf).unwrap()
}
