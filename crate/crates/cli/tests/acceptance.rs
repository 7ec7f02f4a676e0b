//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Thresholds and runtime limits are pinned below. A criterion passes only
//! if its check passes within its runtime limit. Criteria listed in
//! `KNOWN_RED` are still run and still reported as FAIL; they do not fail
//! the process, every other failure does. A known-red criterion that starts
//! passing is reported so the list can be pruned.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use anyhow::{ensure, Context};
use ef_lab::{reproduce, ReproOptions, Reproduction};
use ef_lab_core::checks::{self, CheckOutcome, CheckSettings};

/// Criteria that fail for reasons analysed in the README ("Known red").
const KNOWN_RED: &[u32] = &[1];

struct Criterion {
    id: u32,
    title: &'static str,
    limit: Duration,
    run: fn() -> anyhow::Result<(bool, String)>,
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn repro(which: Reproduction) -> anyhow::Result<(bool, String)> {
    let dir = tempfile::tempdir()?;
    let opts = ReproOptions {
        jobs: 4,
        ..ReproOptions::default()
    };
    let v = reproduce(which, dir.path(), &opts)?;
    let failing: Vec<&String> = v.lines.iter().filter(|l| l.starts_with("[FAIL]")).collect();
    let detail = if failing.is_empty() {
        let checks = v.lines.iter().filter(|l| l.starts_with("[ok]")).count();
        format!("{checks} verdict checks ok")
    } else {
        failing.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" | ")
    };
    Ok((v.passed, detail))
}

fn check(outcome: CheckOutcome) -> anyhow::Result<(bool, String)> {
    Ok((outcome.passed, outcome.detail))
}

const DETERMINISM_CONFIG: &str = r#"
oracle.kind = "theorem1"
oracle.d = 12
oracle.seed = 5
optimizer.rule = "ec_sgd"
optimizer.compressor = "rand_k:3"
optimizer.gamma = 0.0005
run.T = 400
run.seeds = [1, 2, 3, 4]
run.x0 = "zeros"
record.span = true
record.phi = true
"#;

fn read_outputs(dir: &Path) -> anyhow::Result<Vec<(String, Vec<u8>)>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    files.sort();
    files
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| Ok((p.display().to_string(), std::fs::read(&p)?)))
        .collect()
}

fn determinism() -> anyhow::Result<(bool, String)> {
    let tmp = tempfile::tempdir()?;
    let out = tmp.path().join("out");
    let cfg = tmp.path().join("exp.toml");
    std::fs::write(&cfg, format!("{DETERMINISM_CONFIG}output.dir = \"{}\"\n", out.display()))?;
    let invoke = || -> anyhow::Result<Vec<(String, Vec<u8>)>> {
        let status = Command::new(env!("CARGO_BIN_EXE_ef-lab"))
            .args(["run", "--jobs", "4"])
            .arg(&cfg)
            .env_remove("EF_LAB_SEED")
            .output()
            .context("spawning ef-lab")?;
        ensure!(status.status.success(), "ef-lab run failed: {}", String::from_utf8_lossy(&status.stderr));
        read_outputs(&out)
    };
    let first = invoke()?;
    let second = invoke()?;
    let bytes: usize = first.iter().map(|(_, b)| b.len()).sum();
    Ok((
        first == second && first.len() == 5,
        format!("{} CSV files, {bytes} bytes, identical across two runs: {}", first.len(), first == second),
    ))
}

fn criteria() -> Vec<Criterion> {
    vec![
        Criterion {
            id: 1,
            title: "ce2 exactness (signSGD on x1+x2=2, EF-signSGD gamma=0.1 reaches f<0.01)",
            limit: secs(1),
            run: || repro(Reproduction::Ce2),
        },
        Criterion {
            id: 2,
            title: "ce3 trap (signSGD f>=2 on grid, EC-SGD seed-mean f<0.02)",
            limit: secs(5),
            run: || repro(Reproduction::Ce3),
        },
        Criterion {
            id: 3,
            title: "ce1 drift (signSGD increases, SGD final f<-0.2)",
            limit: secs(5),
            run: || repro(Reproduction::Ce1),
        },
        Criterion {
            id: 4,
            title: "theorem1 construction (sign pattern, distance to optimum)",
            limit: secs(10),
            run: || repro(Reproduction::Theorem1),
        },
        Criterion {
            id: 5,
            title: "residual error bound on ce3 with top_k:1",
            limit: secs(5),
            run: || check(checks::lemma2_empirical(&CheckSettings::default())),
        },
        Criterion {
            id: 6,
            title: "non-convex rate on 0.5||x||^2 with top_k:25",
            limit: secs(30),
            run: || check(checks::theorem2_empirical(&CheckSettings::default())),
        },
        Criterion {
            id: 7,
            title: "span distance <= ||e_t|| for every compressor",
            limit: secs(30),
            run: || check(checks::span_inequality()),
        },
        Criterion {
            id: 8,
            title: "transcript identity x_t - e_t = x_0 - gamma sum g_i",
            limit: secs(60),
            run: || check(checks::transcript_identity()),
        },
        Criterion {
            id: 9,
            title: "full-batch GD on wilson reaches the min-norm solution",
            limit: secs(60),
            run: || check(checks::min_norm_convergence()),
        },
        Criterion {
            id: 10,
            title: "wilson span/test-loss picture (EF -> 0, signSGD/signum test > 0.8)",
            limit: secs(120),
            run: || repro(Reproduction::Fig2Span),
        },
        Criterion {
            id: 11,
            title: "sparse-noise ordering at t=500 (signSGD < SGD ~ EF)",
            limit: secs(10),
            run: || repro(Reproduction::ToyA1),
        },
        Criterion {
            id: 12,
            title: "compressor contracts",
            limit: secs(30),
            run: || check(checks::compressor_contracts(&CheckSettings::default())),
        },
        Criterion {
            id: 13,
            title: "byte-identical reruns of `ef-lab run`",
            limit: secs(60),
            run: determinism,
        },
    ]
}

fn main() {
    // Accept and ignore libtest arguments such as `--nocapture`.
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut unexpected = Vec::new();
    let mut passed = 0;
    let mut total = 0;
    for c in criteria() {
        if let Some(f) = &filter {
            if !c.id.to_string().eq(f) && !c.title.contains(f.as_str()) {
                continue;
            }
        }
        total += 1;
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e:#}")),
        };
        let in_time = elapsed <= c.limit;
        let pass = ok && in_time;
        let timing = format!("{:.2}s/{}s", elapsed.as_secs_f64(), c.limit.as_secs());
        let timing = if in_time { timing } else { format!("{timing} TOO SLOW") };
        let known = KNOWN_RED.contains(&c.id);
        println!(
            "{} criterion {:>2} [{timing}] {}: {detail}{}",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.title,
            if !pass && known { " (known red)" } else { "" }
        );
        if pass {
            passed += 1;
            if known {
                println!("     criterion {} is listed as known red but passed", c.id);
            }
        } else if !known {
            unexpected.push(c.id);
        }
    }
    println!("acceptance: {passed}/{total} criteria pass");
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
