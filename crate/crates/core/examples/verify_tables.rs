//! Every encoding-table row checked against the simulator.

fn main() {
    let report = laqkd::protocols::verify_tables();
    println!("{report}");
    if !report.all_ok() {
        std::process::exit(1);
    }
}
