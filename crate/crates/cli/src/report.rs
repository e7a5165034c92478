use std::fmt::Write as _;
use std::path::Path;

use gmsdb::pipeline::StageTimings;
use gmsdb::{GmsdbConfig, GmsdbModel};
use serde::Serialize;

use crate::error::CliResult;

#[derive(Debug, Clone, Serialize)]
pub struct TraceSummary {
    pub iterations: usize,
    pub exit_iteration: Option<usize>,
    pub final_mc: Option<f64>,
    pub max_mc: Option<f64>,
    /// `(epsilon, superclusters, mc)` per visited radius.
    pub records: Vec<(f64, usize, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub stage1: f64,
    pub stage2: f64,
    pub stage34: f64,
    pub total: f64,
}

impl From<StageTimings> for Timings {
    fn from(t: StageTimings) -> Self {
        Self { stage1: t.mixture, stage2: t.distances, stage34: t.grouping, total: t.total }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub dataset: String,
    pub config: GmsdbConfig,
    pub n_points: usize,
    pub dim: usize,
    pub n_bic: usize,
    pub n_superclusters: usize,
    pub chosen_epsilon: Option<f64>,
    pub delta_d: f64,
    pub mc_trace: TraceSummary,
    pub rand_index: Option<f64>,
    pub pwtp: Option<f64>,
    pub pwtn: Option<f64>,
    pub seconds: Timings,
}

impl RunReport {
    pub fn new(dataset: &str, n_points: usize, model: &GmsdbModel, pairs: Option<gmsdb::metrics::PairCounts>) -> Self {
        let records = model.mc_trace.records();
        let exit = gmsdb::pipeline::select_iteration(&model.mc_trace);
        Self {
            dataset: dataset.to_string(),
            config: model.config.clone(),
            n_points,
            dim: model.dim(),
            n_bic: model.n_bic(),
            n_superclusters: model.n_superclusters(),
            chosen_epsilon: model.chosen_epsilon,
            delta_d: model.delta_d,
            mc_trace: TraceSummary {
                iterations: records.len(),
                exit_iteration: exit,
                final_mc: exit.map(|i| records[i].mc),
                max_mc: records.iter().map(|r| r.mc).reduce(f64::max),
                records: records.iter().map(|r| (r.epsilon, r.n_superclusters, r.mc)).collect(),
            },
            rand_index: pairs.map(|p| p.rand_index()),
            pwtp: pairs.map(|p| p.pwtp()),
            pwtn: pairs.map(|p| p.pwtn()),
            seconds: model.stage_timings.into(),
        }
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.6}"));
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "dataset          {}", self.dataset);
        let _ = writeln!(s, "points           {} x {}", self.n_points, self.dim);
        let _ = writeln!(
            s,
            "config           alpha={} n_min={} n_max={} restarts={} pair_cap={} ridge={} seed={} patience={}",
            c.alpha, c.n_min, c.n_max, c.restarts, c.pair_cap, c.ridge, c.seed, c.single_cluster_patience
        );
        let _ = writeln!(s, "N_BIC            {}", self.n_bic);
        let _ = writeln!(s, "N_S              {}", self.n_superclusters);
        let _ = writeln!(s, "chosen epsilon   {}", opt(self.chosen_epsilon));
        let _ = writeln!(s, "deltaD           {:.6}", self.delta_d);
        let t = &self.mc_trace;
        let _ = writeln!(
            s,
            "MC trace         {} radii, exit at {}, MC at exit {}, max MC {}",
            t.iterations,
            t.exit_iteration.map_or("n/a".to_string(), |i| i.to_string()),
            opt(t.final_mc),
            opt(t.max_mc)
        );
        let _ = writeln!(s, "RI               {}", opt(self.rand_index));
        let _ = writeln!(s, "PWTP / PWTN      {} / {}", opt(self.pwtp), opt(self.pwtn));
        let x = &self.seconds;
        let _ = writeln!(
            s,
            "seconds          stage1={:.3} stage2={:.3} stage3-4={:.4} total={:.3}",
            x.stage1, x.stage2, x.stage34, x.total
        );
        s
    }

    /// Writes the text report to `path` and the JSON sidecar next to it.
    pub fn write(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_text())?;
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(sidecar_path(path), json + "\n")?;
        Ok(())
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
