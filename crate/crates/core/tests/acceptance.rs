//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Block-size, ACK-fraction, power and feedback checks use 10⁶-slot runs; the
//! sweeps use 2·10⁵ slots per run with 3 seeds.

use rateless_nca::engine::{run, run_all, ExperimentConfig, MetricsReport, Strategy};
use rateless_nca::oracle::{selftest, SelftestOptions};

const LONG: u64 = 1_000_000;
const SWEEP: u64 = 200_000;
const SEEDS: [u64; 3] = [1, 2, 3];

struct Verdicts(Vec<(String, bool)>);

impl Verdicts {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        self.0.push((name.to_string(), ok));
    }
}

fn base(t_slots: u64) -> ExperimentConfig {
    ExperimentConfig {
        t_slots,
        ..ExperimentConfig::default()
    }
}

fn grid(points: &[ExperimentConfig], strategies: &[Strategy]) -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for p in points {
        for &seed in &SEEDS {
            for &strategy in strategies {
                out.push(ExperimentConfig {
                    seed,
                    strategy,
                    ..p.clone()
                });
            }
        }
    }
    out
}

fn mean_of<F: Fn(&MetricsReport) -> bool>(reports: &[MetricsReport], pick: F, metric: fn(&MetricsReport) -> f64) -> f64 {
    let v: Vec<f64> = reports.iter().filter(|r| pick(r)).map(metric).collect();
    assert!(!v.is_empty());
    v.iter().sum::<f64>() / v.len() as f64
}

fn utility(r: &MetricsReport) -> f64 {
    r.total_utility
}

#[test]
fn acceptance() {
    let mut verdicts = Verdicts(Vec::new());
    let mut all_reports: Vec<MetricsReport> = Vec::new();

    // Long runs: block size, ACK rate, power, feedback.
    let long = base(LONG);
    let points: Vec<ExperimentConfig> = [2.0, 5.0, 10.0, 20.0]
        .iter()
        .map(|&l_av| ExperimentConfig { l_av, ..long.clone() })
        .collect();
    let t1 = run_all(&grid(&points, &[Strategy::Nca])).unwrap();

    let worst_block = t1
        .iter()
        .flat_map(|r| r.avg_block_size.iter().map(move |b| (b - r.config.l_av).abs() / r.config.l_av))
        .fold(0.0, f64::max);
    verdicts.check(
        "block_size_target",
        worst_block <= 0.02,
        format!("worst |L̄−L_av|/L_av = {worst_block:.4} over {} runs (tol 0.02)", t1.len()),
    );

    let worst_ack = t1
        .iter()
        .map(|r| r.ack_fraction - 1.0 / r.config.l_av)
        .fold(f64::NEG_INFINITY, f64::max);
    verdicts.check(
        "ack_fraction",
        worst_ack <= 0.01,
        format!("max(ack_fraction − 1/L_av) = {worst_ack:.5} (tol 0.01)"),
    );

    let worst_power = t1.iter().map(|r| r.avg_power / r.config.p_av).fold(0.0, f64::max);
    verdicts.check(
        "average_power",
        worst_power <= 1.02,
        format!("max avg_power/P_av = {worst_power:.5} (tol 1.02)"),
    );

    let worst_feedback = t1
        .iter()
        .map(|r| r.ack_count as f64 / (r.scheduled_count as f64 / r.config.l_av))
        .fold(0.0, f64::max);
    verdicts.check(
        "feedback_accounting",
        worst_feedback <= 1.05,
        format!("max ACKs/(scheduled/L_av) = {worst_feedback:.4} (tol 1.05)"),
    );
    all_reports.extend(t1);

    // Oracle suites at full size.
    let oracle = selftest(&SelftestOptions::default());
    let detail = oracle
        .iter()
        .map(|r| format!("{}={:.2e}/{:.0e}", r.name, r.worst, r.tolerance))
        .collect::<Vec<_>>()
        .join(" ");
    verdicts.check("oracle_selftest", oracle.iter().all(|r| r.passed), detail);

    // Utility versus V.
    let fig = base(SWEEP);
    let vs = [1e2, 1e3, 1e4, 1e5];
    let points: Vec<ExperimentConfig> = vs
        .iter()
        .map(|&m| ExperimentConfig { v: m * fig.k, ..fig.clone() })
        .collect();
    let f1 = run_all(&grid(&points, &Strategy::ALL)).unwrap();
    let nca_at = |m: f64| mean_of(&f1, |r| r.config.strategy == Strategy::Nca && r.config.v == m * fig.k, utility);
    let curve: Vec<f64> = vs.iter().map(|&m| nca_at(m)).collect();
    let rising = curve[0] < curve[1] && curve[1] < curve[2];
    let plateau = (curve[3] - curve[2]).abs() / curve[2];
    let top = |s: Strategy| mean_of(&f1, |r| r.config.strategy == s && r.config.v == 1e5 * fig.k, utility);
    let (g, n, f) = (top(Strategy::Genie), top(Strategy::Nca), top(Strategy::FixedRate));
    verdicts.check(
        "utility_vs_v",
        rising && plateau < 0.03 && g >= n && n >= f,
        format!(
            "NCA utility {:?}; change 1e4K→1e5K {:.4} (tol 0.03); at 1e5K genie {g:.4} ≥ nca {n:.4} ≥ fixed {f:.4}",
            curve.iter().map(|u| (u * 1e4).round() / 1e4).collect::<Vec<_>>(),
            plateau
        ),
    );
    all_reports.extend(f1);

    // Utility versus L_av.
    let ls = [1.0, 2.0, 5.0, 10.0, 20.0];
    let points: Vec<ExperimentConfig> = ls
        .iter()
        .map(|&l_av| ExperimentConfig { l_av, ..fig.clone() })
        .collect();
    let f2 = run_all(&grid(&points, &[Strategy::Nca, Strategy::FixedRate])).unwrap();
    let at = |s: Strategy, l: f64| mean_of(&f2, |r| r.config.strategy == s && r.config.l_av == l, utility);
    let nca: Vec<f64> = ls.iter().map(|&l| at(Strategy::Nca, l)).collect();
    let fixed: Vec<f64> = ls.iter().map(|&l| at(Strategy::FixedRate, l)).collect();
    let monotone = nca.windows(2).all(|w| w[1] >= w[0] * 0.99 - 1e-12);
    let beats = ls.iter().zip(nca.iter().zip(&fixed)).all(|(&l, (n, f))| l < 2.0 || n >= f);
    verdicts.check(
        "utility_vs_block_target",
        monotone && beats,
        format!(
            "NCA {:?}; fixed {:?}",
            nca.iter().map(|u| (u * 1e4).round() / 1e4).collect::<Vec<_>>(),
            fixed.iter().map(|u| (u * 1e4).round() / 1e4).collect::<Vec<_>>()
        ),
    );
    all_reports.extend(f2);

    // Estimate quality endpoints.
    let no_csi = ExperimentConfig { rho: 0.0, ..fig.clone() };
    let perfect = ExperimentConfig {
        rho: 1.0,
        rho1_encoding_fix: true,
        ..fig.clone()
    };
    let f3 = run_all(&grid(&[no_csi, perfect], &Strategy::ALL)).unwrap();
    let se = |s: Strategy| mean_of(&f3, |r| r.config.strategy == s && r.config.rho == 0.0, |r| r.spectral_efficiency);
    let ratio = se(Strategy::Nca) / se(Strategy::FixedRate);
    verdicts.check(
        "no_csi_spectral_ratio",
        (1.4..=2.0).contains(&ratio),
        format!(
            "NCA {:.4} vs fixed-rate {:.4} bits/symbol, ratio {ratio:.4} (range [1.4, 2.0])",
            se(Strategy::Nca),
            se(Strategy::FixedRate)
        ),
    );
    let u1: Vec<f64> = Strategy::ALL
        .iter()
        .map(|&s| mean_of(&f3, |r| r.config.strategy == s && r.config.rho == 1.0, utility))
        .collect();
    let spread = (u1.iter().cloned().fold(f64::MIN, f64::max) - u1.iter().cloned().fold(f64::MAX, f64::min))
        / u1.iter().cloned().fold(f64::MIN, f64::max);
    verdicts.check(
        "perfect_csi_agreement",
        spread <= 0.02,
        format!("utilities nca/genie/fixed {u1:.4?}, relative spread {spread:.2e} (tol 0.02)"),
    );
    all_reports.extend(f3);

    // Utility versus S.
    let ss = [1usize, 2, 4, 8];
    let points: Vec<ExperimentConfig> = ss
        .iter()
        .map(|&s_users| ExperimentConfig { s_users, ..fig.clone() })
        .collect();
    let f4 = run_all(&grid(&points, &Strategy::ALL)).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for s in Strategy::ALL {
        let c: Vec<f64> = ss
            .iter()
            .map(|&n| mean_of(&f4, |r| r.config.strategy == s && r.config.s_users == n, utility))
            .collect();
        ok &= c.windows(2).all(|w| w[1] >= w[0]);
        detail.push(format!("{} {:?}", s.name(), c.iter().map(|u| (u * 1e4).round() / 1e4).collect::<Vec<_>>()));
    }
    verdicts.check("utility_vs_users", ok, detail.join("; "));
    all_reports.extend(f4);

    // Determinism.
    let mut same = true;
    for s in Strategy::ALL {
        let c = ExperimentConfig {
            strategy: s,
            t_slots: 100_000,
            seed: 99,
            ..ExperimentConfig::default()
        };
        same &= run(&c).unwrap() == run(&c).unwrap();
    }
    verdicts.check("determinism", same, "re-runs of each strategy compared field by field".into());

    // Queue bound over everything above.
    let failures = all_reports.iter().filter(|r| !r.passed()).count();
    let bound_hits: u64 = all_reports.iter().map(|r| r.violations.queue_bound).sum();
    let max_ratio = all_reports
        .iter()
        .flat_map(|r| r.max_queue.iter().map(move |q| q / (r.config.v / (2.0 * r.config.k))))
        .fold(0.0, f64::max);
    verdicts.check(
        "queue_bound",
        failures == 0 && bound_hits == 0,
        format!(
            "{} runs, {bound_hits} bound violations, {failures} failed runs, max q/(bV/2) = {max_ratio:.6}",
            all_reports.len()
        ),
    );
    let max_z = all_reports.iter().map(|r| r.max_z).fold(0.0, f64::max);
    println!("INFO empirical max Z over all runs: {max_z:.1}");

    let failed: Vec<&str> = verdicts.0.iter().filter(|(_, ok)| !ok).map(|(n, _)| n.as_str()).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
