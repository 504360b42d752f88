//! Real compiler round trip with the default g++ configuration.

use perfedit::harness::{judge, CompileConfig, CompileError, Harness, Judgement, TestCase, Verdict};
use perfedit::perf::{ManifestBackend, Unit};
use perfedit::process::Limits;

const SUM: &str = r#"#include <iostream>
int main() {
    long long a, b;
    std::cin >> a >> b;
    std::cout << a + b << "\n";
}
"#;

fn have_gxx() -> bool {
    std::process::Command::new("g++").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn compiles_and_passes_with_gxx() {
    if !have_gxx() {
        eprintln!("g++ not found; skipping");
        return;
    }
    let work = tempfile::tempdir().unwrap();
    let harness = Harness::new(CompileConfig::default(), Limits::default());
    let mut backend = ManifestBackend::default();
    backend.insert("sum", 0, 3.0);
    backend.insert("sum", 1, 4.0);
    let suite = vec![TestCase::new(0, "1 2\n", "3\n"), TestCase::new(1, "40 2", "42")];
    let report = harness.evaluate("sum", SUM, &suite, &backend, work.path());
    assert_eq!(report.verdicts, vec![Verdict::Pass, Verdict::Pass]);
    assert_eq!(judge(&report), Judgement::Correct);
    let total = report.total_runtime.unwrap();
    assert_eq!(total.value(), 7.0);
    assert_eq!(total.unit(), Unit::CostUnits);
}

#[test]
fn syntax_error_is_a_compile_error() {
    if !have_gxx() {
        eprintln!("g++ not found; skipping");
        return;
    }
    let work = tempfile::tempdir().unwrap();
    let harness = Harness::new(CompileConfig::default(), Limits::default());
    let err = harness.compile("bad", "int main( { return 0 }\n", work.path()).unwrap_err();
    assert!(matches!(err, CompileError::Failed { .. }), "{err:?}");
    assert!(err.stderr().contains("error"));

    let report = harness.evaluate("bad", "int main( {", &[TestCase::new(0, "", "")], &ManifestBackend::default(), work.path());
    assert!(!report.compile_ok);
    assert_eq!(judge(&report), Judgement::Incorrect);
}

#[test]
fn runaway_compile_times_out() {
    if !have_gxx() {
        eprintln!("g++ not found; skipping");
        return;
    }
    // Constant evaluation that would take minutes.
    let bomb = r#"constexpr long spin() {
    long s = 0;
    for (long i = 0; i < 2000000000L; ++i) s += i % 7;
    return s;
}
static_assert(spin() > 0);
int main() {}
"#;
    let work = tempfile::tempdir().unwrap();
    let mut cfg = CompileConfig::default();
    cfg.flags.push("-fconstexpr-loop-limit=2147483647".into());
    cfg.flags.push("-fconstexpr-ops-limit=1099511627776".into());
    cfg.timeout_s = 1.0;
    let harness = Harness::new(cfg, Limits::default());
    let start = std::time::Instant::now();
    let err = harness.compile("bomb", bomb, work.path()).unwrap_err();
    assert!(matches!(err, CompileError::Timeout { .. }), "{err:?}");
    assert!(start.elapsed() < std::time::Duration::from_secs(10));
}
