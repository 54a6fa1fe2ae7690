//! Analytic gradients against central finite differences.

mod support;

#[test]
fn operators() {
    for line in support::grad::operators() {
        println!("{line}");
    }
}

#[test]
fn toy_networks() {
    for line in support::grad::toy_networks() {
        println!("{line}");
    }
}
