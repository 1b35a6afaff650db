// SPDX-License-Identifier: Apache-2.0

//! Micro-benchmarks. Each suite warms all of its cases round-robin for the
//! configured warmup, then takes a fixed number of samples per case. A
//! sample times a batch of iterations sized from the warmup estimate and
//! records the per-iteration mean.

use std::fmt::Write as _;
use std::hint::black_box;
use std::str::FromStr;
use std::time::{Duration, Instant};

use sha2::Digest as _;

use crate::enclave::Attributes;
use crate::hashcore::{sha256, Digest, HashState};
use crate::scenario::{Keys, Scenario};
use crate::sigstruct::{SigStruct, SigStructBody, SignerKey};
use crate::transport::VerifierClient;
use crate::verifier::PolicyMode;

pub const KB: usize = 1024;
pub const MB: usize = 1024 * KB;
pub const SHA_SIZES: [usize; 6] = [2 * KB, 16 * KB, 128 * KB, MB, 8 * MB, 64 * MB];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Sha,
    Sign,
    Verify,
    Retrieval,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Sha, Suite::Sign, Suite::Verify, Suite::Retrieval];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Sha => "sha",
            Suite::Sign => "sign",
            Suite::Verify => "verify",
            Suite::Retrieval => "retrieval",
        }
    }
}

impl FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown suite {s:?}"))
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub warmup: Duration,
    pub samples: usize,
    /// Target wall time of one sample.
    pub sample_target: Duration,
    pub sha_sizes: Vec<usize>,
    pub seed: Option<String>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            warmup: Duration::from_secs(3),
            samples: 20,
            sample_target: Duration::from_millis(20),
            sha_sizes: SHA_SIZES.to_vec(),
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub suite: &'static str,
    pub case: String,
    /// Input size for throughput cases.
    pub bytes: Option<usize>,
    pub samples: usize,
    pub iters_per_sample: u64,
    pub mean: Duration,
    pub stddev: Duration,
    pub median: Duration,
    pub min: Duration,
}

impl BenchRow {
    pub fn throughput_mb_s(&self) -> Option<f64> {
        let b = self.bytes? as f64;
        Some(b / MB as f64 / self.mean.as_secs_f64())
    }
}

#[derive(Clone, Debug, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn find(&self, suite: &str, case: &str, bytes: Option<usize>) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.suite == suite && r.case == case && r.bytes == bytes)
    }

    pub const CSV_HEADER: &'static str =
        "suite,case,bytes,samples,iters_per_sample,mean_ns,stddev_ns,median_ns,min_ns,throughput_mb_s";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.suite,
                r.case,
                r.bytes.map_or(String::new(), |b| b.to_string()),
                r.samples,
                r.iters_per_sample,
                r.mean.as_nanos(),
                r.stddev.as_nanos(),
                r.median.as_nanos(),
                r.min.as_nanos(),
                r.throughput_mb_s().map_or(String::new(), |t| format!("{t:.1}")),
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<10} {:<22} {:>10} {:>14} {:>12} {:>12}\n",
            "suite", "case", "size", "mean", "stddev", "MB/s"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<10} {:<22} {:>10} {:>14} {:>12} {:>12}",
                r.suite,
                r.case,
                r.bytes.map_or("-".into(), human_size),
                format!("{:.3?}", r.mean),
                format!("{:.3?}", r.stddev),
                r.throughput_mb_s().map_or("-".into(), |t| format!("{t:.1}")),
            );
        }
        if let Some(ratio) = self.finalize_base_ratio() {
            let _ = writeln!(out, "finalize_base 64MB/2KB snapshot time ratio: {ratio:.3}");
        }
        out
    }

    /// Mean finalize time of the largest snapshot over the smallest.
    pub fn finalize_base_ratio(&self) -> Option<f64> {
        let fin: Vec<_> = self.rows.iter().filter(|r| r.case == "finalize-base").collect();
        let small = fin.iter().min_by_key(|r| r.bytes)?;
        let large = fin.iter().max_by_key(|r| r.bytes)?;
        if small.bytes == large.bytes {
            return None;
        }
        Some(large.mean.as_secs_f64() / small.mean.as_secs_f64())
    }
}

pub fn human_size(b: usize) -> String {
    if b >= MB && b.is_multiple_of(MB) {
        format!("{}MB", b / MB)
    } else if b >= KB && b.is_multiple_of(KB) {
        format!("{}KB", b / KB)
    } else {
        format!("{b}B")
    }
}

struct Case<'a> {
    case: String,
    bytes: Option<usize>,
    run: Box<dyn FnMut() + 'a>,
    warm_iters: u64,
    warm_time: Duration,
}

impl<'a> Case<'a> {
    fn new(case: impl Into<String>, bytes: Option<usize>, run: impl FnMut() + 'a) -> Self {
        Case {
            case: case.into(),
            bytes,
            run: Box::new(run),
            warm_iters: 0,
            warm_time: Duration::ZERO,
        }
    }
}

fn run_cases(suite: Suite, cfg: &BenchConfig, mut cases: Vec<Case<'_>>) -> Vec<BenchRow> {
    // Every case runs at least once during warmup.
    let start = Instant::now();
    loop {
        for c in cases.iter_mut() {
            let t = Instant::now();
            (c.run)();
            c.warm_time += t.elapsed();
            c.warm_iters += 1;
        }
        if start.elapsed() >= cfg.warmup {
            break;
        }
    }
    log::debug!("{} warmup took {:?}", suite.name(), start.elapsed());

    let mut rows = Vec::with_capacity(cases.len());
    for c in cases.iter_mut() {
        let per_iter = c.warm_time.as_secs_f64() / c.warm_iters as f64;
        let iters = ((cfg.sample_target.as_secs_f64() / per_iter.max(1e-9)) as u64).max(1);
        let mut samples: Vec<f64> = (0..cfg.samples.max(1))
            .map(|_| {
                let t = Instant::now();
                for _ in 0..iters {
                    (c.run)();
                }
                t.elapsed().as_secs_f64() / iters as f64
            })
            .collect();
        samples.sort_by(f64::total_cmp);
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        rows.push(BenchRow {
            suite: suite.name(),
            case: c.case.clone(),
            bytes: c.bytes,
            samples: samples.len(),
            iters_per_sample: iters,
            mean: Duration::from_secs_f64(mean),
            stddev: Duration::from_secs_f64(var.sqrt()),
            median: Duration::from_secs_f64(samples[samples.len() / 2]),
            min: Duration::from_secs_f64(samples[0]),
        });
    }
    rows
}

/// Deterministic, non-trivial input buffer.
pub fn bench_buffer(len: usize) -> Vec<u8> {
    let mut x: u32 = 0x9e37_79b9;
    (0..len)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 17;
            x ^= x << 5;
            x as u8
        })
        .collect()
}

fn sha_suite(cfg: &BenchConfig) -> Vec<BenchRow> {
    let max = cfg.sha_sizes.iter().copied().max().unwrap_or(0);
    let buf = bench_buffer(max);
    let mut cases = Vec::new();
    for &size in &cfg.sha_sizes {
        let data = &buf[..size];
        // Snapshot of a `size`-byte measurement, ready to finalize.
        let mut st = HashState::new();
        st.update(data).expect("bench input within limits");
        let base = st.export_base().expect("bench sizes are block multiples");
        let split = (size / 2) & !63;
        cases.push(Case::new("sha2-crate", Some(size), move || {
            black_box(sha2::Sha256::digest(black_box(data)));
        }));
        cases.push(Case::new("portable-oneshot", Some(size), move || {
            black_box(sha256(black_box(data)));
        }));
        cases.push(Case::new("resumable", Some(size), move || {
            let mut s = HashState::new();
            s.update(&data[..split]).unwrap();
            let snap = s.export_base().unwrap();
            let mut s = HashState::resume(&snap);
            s.update(&data[split..]).unwrap();
            black_box(s.finalize());
        }));
        cases.push(Case::new("finalize-base", Some(size), move || {
            black_box(black_box(&base).finalize());
        }));
    }
    run_cases(Suite::Sha, cfg, cases)
}

fn sample_body() -> SigStructBody {
    SigStructBody {
        date: 0,
        attributes: Attributes::new(Attributes::MODE64),
        attribute_mask: Attributes::all_ones(),
        mrenclave: Digest([0x5a; 32]),
        isvprodid: 1,
        isvsvn: 1,
    }
}

fn bench_key(cfg: &BenchConfig) -> SignerKey {
    SignerKey::from_seed_label(cfg.seed.as_deref().unwrap_or("bench"), "bench-signer").expect("key generation")
}

fn sign_suite(cfg: &BenchConfig, key: &SignerKey) -> Vec<BenchRow> {
    let body = sample_body();
    let cases = vec![Case::new("sigstruct-sign-rsa3072", None, move || {
        black_box(SigStruct::sign(key, black_box(body)).unwrap());
    })];
    run_cases(Suite::Sign, cfg, cases)
}

fn verify_suite(cfg: &BenchConfig, key: &SignerKey) -> Vec<BenchRow> {
    let ss = SigStruct::sign(key, sample_body()).expect("signing");
    let cases = vec![Case::new("sigstruct-verify-rsa3072", None, move || {
        black_box(black_box(&ss).verify().unwrap());
    })];
    run_cases(Suite::Verify, cfg, cases)
}

fn retrieval_suite(cfg: &BenchConfig) -> anyhow::Result<Vec<BenchRow>> {
    let seed = cfg.seed.as_deref();
    let scenario = Scenario::start(Keys::generate(seed.or(Some("bench")))?, PolicyMode::Singleton, seed)?;
    let req = scenario.start_request();
    let addr = scenario.address();
    let mut starter = scenario.starter("bench");
    let probe = starter.request_singleton(&req)?;
    let issued_starter = scenario.starter("bench-construct");
    let cases = vec![
        Case::new("connect-close", None, || {
            VerifierClient::connect(&addr).expect("connect").close();
        }),
        Case::new("request-singleton", None, || {
            black_box(issued_starter.request_singleton(&req).expect("issue"));
        }),
        Case::new("construct-einit", None, || {
            black_box(
                issued_starter
                    .construct_singleton(&req, &probe.instance_page, &probe.sigstruct)
                    .expect("construct"),
            );
        }),
        Case::new("full-retrieval", None, || {
            black_box(starter.run_singleton(&req).expect("retrieval"));
        }),
    ];
    let rows = run_cases(Suite::Retrieval, cfg, cases);
    scenario.shutdown();
    Ok(rows)
}

pub fn run_suite(suite: Suite, cfg: &BenchConfig) -> anyhow::Result<BenchReport> {
    run_suites(&[suite], cfg)
}

pub fn run_suites(suites: &[Suite], cfg: &BenchConfig) -> anyhow::Result<BenchReport> {
    let mut report = BenchReport::default();
    let needs_key = suites.iter().any(|s| matches!(s, Suite::Sign | Suite::Verify));
    let key = needs_key.then(|| bench_key(cfg));
    for &suite in suites {
        log::info!("running {} suite", suite.name());
        let rows = match suite {
            Suite::Sha => sha_suite(cfg),
            Suite::Sign => sign_suite(cfg, key.as_ref().expect("key")),
            Suite::Verify => verify_suite(cfg, key.as_ref().expect("key")),
            Suite::Retrieval => retrieval_suite(cfg)?,
        };
        report.rows.extend(rows);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_one_line_per_row() {
        let cfg = BenchConfig {
            warmup: Duration::from_millis(10),
            samples: 3,
            sample_target: Duration::from_micros(200),
            sha_sizes: vec![2 * KB, 16 * KB],
            seed: None,
        };
        let report = run_suite(Suite::Sha, &cfg).unwrap();
        assert_eq!(report.rows.len(), 8);
        assert_eq!(report.to_csv().lines().count(), 9);
        assert!(report.finalize_base_ratio().is_some());
        assert!(report.find("sha", "resumable", Some(2 * KB)).is_some());
    }

    #[test]
    fn sizes_render() {
        assert_eq!(human_size(2048), "2KB");
        assert_eq!(human_size(64 * MB), "64MB");
        assert_eq!(human_size(100), "100B");
    }
}
