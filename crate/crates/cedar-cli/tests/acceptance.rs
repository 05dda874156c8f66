//! Acceptance suite: runs the full verification once on the reference
//! configuration and asserts every criterion, printing one pass/fail line
//! per criterion.

use std::path::Path;
use std::sync::OnceLock;

use cedar_cli::config::RunConfig;
use cedar_cli::verify::{self, VerifyReport};

struct Shared {
    report: VerifyReport,
    _dir: tempfile::TempDir,
}

fn reference_config() -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example1.json");
    RunConfig::load(&path).expect("reference config loads")
}

fn shared() -> &'static Shared {
    static SHARED: OnceLock<Shared> = OnceLock::new();
    SHARED.get_or_init(|| {
        let dir = tempfile::tempdir().expect("tempdir");
        let mut cfg = reference_config();
        cfg.outputs = dir.path().join("verify");
        let report = verify::run_verify(&cfg, false).expect("verification suite runs");
        Shared { report, _dir: dir }
    })
}

fn check(id: u32) {
    let c = shared()
        .report
        .criteria
        .iter()
        .find(|c| c.id == id)
        .unwrap_or_else(|| panic!("criterion {id} missing from report"));
    println!("{}", c.line());
    assert!(c.pass, "criterion {id} failed: {:#?}", c.details);
}

#[test]
fn criterion_01_grid_arithmetic() {
    check(1);
}

#[test]
fn criterion_02_quadrature_oracle() {
    check(2);
}

#[test]
fn criterion_03_feynman_kac_oracle() {
    check(3);
}

#[test]
fn criterion_04_envelope_sandwich() {
    check(4);
}

#[test]
fn criterion_05_zero_intensity_reduction() {
    check(5);
}

#[test]
fn criterion_06_bond_envelopes() {
    check(6);
}

#[test]
fn criterion_07_verification_by_monte_carlo() {
    check(7);
}

#[test]
fn criterion_08_monotonicity_suite() {
    check(8);
}

#[test]
fn criterion_09_gradient_cap_doubling() {
    check(9);
}

#[test]
fn criterion_10_determinism() {
    check(10);
}

/// The reduced-grid quick mode must reach the same qualitative conclusions.
#[test]
fn quick_mode_reruns_qualitatively() {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut cfg = reference_config();
    cfg.outputs = dir.path().join("verify_quick");
    let report = verify::run_verify(&cfg, true).expect("quick suite runs");
    for c in &report.criteria {
        println!("quick {}", c.line());
    }
    assert!(report.all_pass, "quick mode failed: {report:#?}");
}
