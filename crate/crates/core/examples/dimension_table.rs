//! Print dim I_{n,m} for plane quartics with timings.
//!
//! `cargo run --release -p undulation-core --example dimension_table`

use std::time::Instant;

use undulation_core::exactnum::MERSENNE_61;
use undulation_core::idealgen::{component_dim, ComponentSpec};

fn main() {
    for (n, max_m) in [(1, 7), (2, 7), (3, 6)] {
        let t = Instant::now();
        let dims: Vec<String> = (0..=max_m)
            .map(|m| {
                let spec = ComponentSpec::total(4, n, m, MERSENNE_61, 1).expect("valid spec");
                component_dim(&spec).map_or_else(|e| format!("({e})"), |d| d.to_string())
            })
            .collect();
        println!("n={n}: {}   [{:.1?}]", dims.join(" "), t.elapsed());
    }
}
