use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const DEFAULT_WARMUP: usize = 3;

/// Stage keys every pipeline benchmark reports.
pub const STAGES: [&str; 4] = ["downscale", "propose", "ynet", "postproc"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub median_ms: f64,
    pub p95_ms: f64,
    pub samples: usize,
}

/// Median (mean of the middle pair for even counts) and nearest-rank p95.
pub fn latency_stats(samples_ms: &[f64]) -> LatencyStats {
    if samples_ms.is_empty() {
        return LatencyStats {
            median_ms: 0.0,
            p95_ms: 0.0,
            samples: 0,
        };
    }
    let mut s = samples_ms.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let median_ms = if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    };
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    LatencyStats {
        median_ms,
        p95_ms: s[rank - 1],
        samples: n,
    }
}

/// Wall-clock samples of one measured run, in milliseconds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunTiming {
    pub stages: BTreeMap<String, f64>,
    pub total_ms: f64,
}

impl RunTiming {
    pub fn add(&mut self, stage: &str, ms: f64) {
        *self.stages.entry(stage.to_string()).or_insert(0.0) += ms;
    }

    /// Stages are sub-spans of the run, so their sum must stay below it.
    pub fn accounting_ok(&self) -> bool {
        self.stages.values().sum::<f64>() < self.total_ms
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub hardware: String,
    pub warmup: usize,
    pub repetitions: usize,
    pub images: usize,
    pub stages: BTreeMap<String, LatencyStats>,
    pub end_to_end: LatencyStats,
    pub sliding_window: Option<LatencyStats>,
    /// Sliding-window median over pipeline median.
    pub speedup: Option<f64>,
    /// True if any run's stage sum reached its end-to-end time.
    pub accounting_violation: bool,
}

impl BenchReport {
    pub fn from_runs(
        runs: &[RunTiming],
        warmup: usize,
        repetitions: usize,
        images: usize,
        sliding: Option<&[f64]>,
    ) -> Self {
        let mut stages = BTreeMap::new();
        for key in STAGES {
            let s: Vec<f64> = runs
                .iter()
                .map(|r| r.stages.get(key).copied().unwrap_or(0.0))
                .collect();
            stages.insert(key.to_string(), latency_stats(&s));
        }
        let totals: Vec<f64> = runs.iter().map(|r| r.total_ms).collect();
        let end_to_end = latency_stats(&totals);
        let sliding_window = sliding.map(latency_stats);
        let speedup = sliding_window
            .filter(|_| end_to_end.median_ms > 0.0)
            .map(|s| s.median_ms / end_to_end.median_ms);
        Self {
            hardware: hardware_descriptor(),
            warmup,
            repetitions,
            images,
            stages,
            end_to_end,
            sliding_window,
            speedup,
            accounting_violation: runs.iter().any(|r| !r.accounting_ok()),
        }
    }
}

/// CPU model, logical core count and OS.
pub fn hardware_descriptor() -> String {
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let cores = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    format!(
        "{model}; {cores} logical cores; {}-{}",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}
