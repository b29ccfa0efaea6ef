use std::process::{Command, Output};

use incomplete_ustat::estimators::incomplete_u;
use incomplete_ustat::rng::{domain, stream};
use incomplete_ustat::{sample_design, BernoulliDesign, Dataset, Kernel, SourceLaw};

fn ustat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ustat")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const ESTIMATE: [&str; 13] = [
    "estimate", "--law", "uniform3", "--kernel", "sample_variance", "--n", "8", "--m", "2", "--N", "10", "--seed", "7",
];

#[test]
fn estimate_is_byte_identical_across_runs() {
    let (a, b) = (ustat(&ESTIMATE), ustat(&ESTIMATE));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn estimate_output_round_trips_the_library_values() {
    let out = stdout(&ustat(&ESTIMATE));
    let mut lines = out.lines();
    assert!(lines.next().unwrap().starts_with("# "));
    assert_eq!(lines.next().unwrap(), "u_complete,u_incomplete,u_incomplete_det,b_n,u_h2,u_abs_h3,n_hat,p");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();

    let data = Dataset::generate(&SourceLaw::uniform3(), 8, 1, 7);
    let design = BernoulliDesign::new(8, 2, 10, 7).unwrap();
    let sd = sample_design(&design, &mut stream(7, domain::DESIGN, 0));
    let b = incomplete_u(&data, &Kernel::sample_variance(), &sd, 0.0).unwrap();
    let expected = [b.u_complete, b.u_incomplete, b.u_incomplete_det, b.b_n, b.u_h2, b.u_abs_h3];
    for (field, want) in row.iter().zip(expected) {
        assert_eq!(field.parse::<f64>().unwrap().to_bits(), want.to_bits(), "{field}");
    }
    assert_eq!(row[6].parse::<u64>().unwrap(), b.n_hat);
}

#[test]
fn degree_outside_the_design_regime_is_a_usage_error() {
    let o = ustat(&[
        "bounds", "--regime", "thm32", "--kernel", "mean_pow3", "--law", "uniform3", "--n", "10", "--m", "6", "--N", "5",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--m"));
}

#[test]
fn unknown_flags_and_names_are_usage_errors() {
    let o = ustat(&["estimate", "--law", "uniform3", "--bogus", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--bogus"));
    let o = ustat(&["estimate", "--law", "cauchy", "--kernel", "product", "--n", "10", "--N", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--law"));
    let o = ustat(&["estimate", "--law", "uniform3", "--kernel", "product", "--n", "10", "--N", "45"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--N"));
}

#[test]
fn version_prints_a_build_digest() {
    let o = ustat(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout(&o);
    assert!(v.starts_with("ustat 0.1.0 (") && v.trim_end().ends_with(')'), "{v}");
}

#[test]
fn bounds_rows_sum_to_the_total() {
    let o = ustat(&[
        "bounds", "--regime", "thm31", "--kernel", "sample_variance", "--law", "uniform3", "--n", "400", "--m", "2", "--N",
        "20000",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let rows: Vec<(String, f64)> = out
        .lines()
        .filter(|l| !l.starts_with('#') && *l != "term,value")
        .map(|l| {
            let (k, v) = l.split_once(',').unwrap();
            (k.to_string(), v.parse().unwrap())
        })
        .collect();
    let (total, terms) = rows.split_last().unwrap();
    assert_eq!(total.0, "total");
    assert!(terms.iter().any(|t| t.0 == "B2.lyapunov"));
    let sum: f64 = terms.iter().map(|t| t.1).sum();
    assert!((sum - total.1).abs() <= 1e-15 * total.1);
}

#[test]
fn simulate_and_rate_emit_the_csv_schema() {
    let dir = std::env::temp_dir().join(format!("ustat-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("sim.csv");
    let o = ustat(&[
        "simulate", "--regime", "regime3", "--kernel", "sample_variance", "--law", "uniform3", "--n", "40", "--N", "cn:2",
        "--reps", "500", "--threads", "2", "--output", path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines[0], "regime,kernel,law,n,m,N,R,ks,dkw_band,mean,var,seconds");
    assert!(lines[1].starts_with("regime3,sample_variance,uniform3,40,2,80,500,"));

    let o = ustat(&[
        "rate", "--regime", "regime2", "--kernel", "product", "--law", "rademacher", "--grid", "40,80,160", "--N", "cn:1",
        "--reps", "400",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with("regime2,")).count(), 3);
    assert!(out.lines().any(|l| l.starts_with("# rate_fit slope=")));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn check_appendix_passes() {
    let o = ustat(&["check", "appendix", "--pairs", "1000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn check_acceptance_reports_per_criterion() {
    let o = ustat(&["check", "acceptance", "--criterion", "3,4"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS criterion")).count(), 2);
    let o = ustat(&["check", "acceptance", "--criterion", "7"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL criterion  7"));
    assert_eq!(ustat(&["check", "acceptance", "--criterion", "12"]).status.code(), Some(2));
}
