//! Value-guess probability against measurement angle, and its maximum.

use std::f64::consts::PI;

use laqkd::metrics::{breidbart_bound_oracle, value_guess_probability};

fn main() {
    for i in 0..=16 {
        let theta = PI * i as f64 / 32.0;
        let p = value_guess_probability(theta);
        println!(
            "{theta:.4} {p:.4} {}",
            "#".repeat(((p - 0.5) * 100.0) as usize)
        );
    }
    let bound = breidbart_bound_oracle(3600).expect("resolution");
    println!(
        "max {:.6} at {:.6} rad (pi/8 = {:.6})",
        bound.max_probability,
        bound.argmax,
        PI / 8.0
    );
}
