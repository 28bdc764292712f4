use agentnet_graph::theory::{check_frequency_distinguisher, check_tree_protocols, fast_checks};

#[test]
fn fast_checks_pass() {
    for check in fast_checks(7).unwrap() {
        println!("{}", check.line());
        assert!(check.pass, "{}", check.line());
    }
}

#[test]
fn monte_carlo_report() {
    let t = std::time::Instant::now();
    for check in check_tree_protocols(7, 1).unwrap() {
        println!("{}", check.line());
    }
    for check in check_frequency_distinguisher(7, 1).unwrap() {
        println!("{}", check.line());
    }
    println!("{:?}", t.elapsed());
}
