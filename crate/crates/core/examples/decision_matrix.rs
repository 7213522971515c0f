//! Walks the decision matrix across a range of Z* means.
//!
//! cargo run --example decision_matrix

use btba::diagnostics::classify;

fn main() {
    println!("{:>6} {:>6}  {:<20} row", "M", "V", "verdict");
    for m in [0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, -0.25] {
        // With the population variance, V = 1 - M².
        let v: f64 = 1.0 - m * m;
        let verdict = classify(m, v);
        println!("{m:>6.2} {v:>6.4}  {:<20} {}", verdict.verdict.to_string(), verdict.row.interpretation());
    }
    let wide = classify(0.0, 1.05);
    println!("V = 1.05 -> {} with flags {:?}", wide.verdict, wide.flags);
}
