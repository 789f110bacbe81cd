use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::run;
use super::scenario::Scenario;
use super::SimError;

/// Values to vary; an empty axis keeps the base scenario's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub sf: Vec<u8>,
    pub bw: Vec<u32>,
    pub cr: Vec<u8>,
    pub snr_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepMetrics {
    pub bitrate_bps: f64,
    pub aggregate_bps: f64,
    pub ber: f64,
    pub tx_delay_ms: f64,
    pub current_ma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub scenario_id: String,
    pub sf: u8,
    pub bw_hz: u32,
    pub cr: u8,
    pub snr_db: f64,
    #[serde(flatten)]
    pub metrics: Option<SweepMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const SWEEP_CSV_HEADER: &str =
    "scenario_id,sf,bw_hz,cr,snr_db,bitrate_bps,aggregate_bps,ber,tx_delay_ms,current_ma";
/// Placed in every metric column of a row whose run failed.
pub const ERROR_MARKER: &str = "error";

impl SweepRow {
    pub fn to_csv(&self) -> String {
        let head = format!(
            "{},{},{},{},{}",
            self.scenario_id, self.sf, self.bw_hz, self.cr, self.snr_db
        );
        match &self.metrics {
            Some(m) => format!(
                "{head},{},{},{},{},{}",
                m.bitrate_bps,
                m.aggregate_bps,
                m.ber,
                m.tx_delay_ms,
                m.current_ma.map_or_else(|| "NA".to_string(), |c| c.to_string())
            ),
            None => format!("{head}{}", format!(",{ERROR_MARKER}").repeat(5)),
        }
    }
}

/// Runs the Cartesian product of `axes` over `base` (sf, bw, cr, snr_db
/// nesting order) in parallel; rows come back in that order. Axis values
/// apply to every link.
pub fn sweep(base: &Scenario, axes: &SweepAxes) -> Vec<SweepRow> {
    let first = base.links.iter().find(|l| l.enabled).unwrap_or(&base.links[0]).chirp;
    let sfs = or_base(axes.sf.clone(), first.sf());
    let bws = or_base(axes.bw.clone(), first.bw());
    let crs = or_base(axes.cr.clone(), first.cr());
    let snrs = or_base(axes.snr_db.clone(), base.snr_db);

    let mut combos = Vec::new();
    for &sf in &sfs {
        for &bw in &bws {
            for &cr in &crs {
                for &snr in &snrs {
                    combos.push((sf, bw, cr, snr));
                }
            }
        }
    }
    combos
        .into_par_iter()
        .enumerate()
        .map(|(i, (sf, bw, cr, snr_db))| {
            let scenario_id = format!("{}-{i:04}", base.name);
            let result = configure(base, sf, bw, cr, snr_db).and_then(|s| {
                let out = run(&s)?;
                let m = out.report.metrics;
                let lead = s.links.iter().position(|l| l.enabled).unwrap_or(0);
                Ok(SweepMetrics {
                    bitrate_bps: m.per_stream_bitrate_bps[lead],
                    aggregate_bps: m.aggregate_bps,
                    ber: m.ber,
                    tx_delay_ms: m.tx_delay_ms,
                    current_ma: m.est_current_ma,
                })
            });
            let (metrics, error) = match result {
                Ok(m) => (Some(m), None),
                Err(e) => (None, Some(e.to_string())),
            };
            SweepRow {
                scenario_id,
                sf,
                bw_hz: bw,
                cr,
                snr_db,
                metrics,
                error,
            }
        })
        .collect()
}

fn or_base<T>(values: Vec<T>, base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values
    }
}

fn configure(base: &Scenario, sf: u8, bw: u32, cr: u8, snr_db: f64) -> Result<Scenario, SimError> {
    let mut s = base.clone();
    s.snr_db = snr_db;
    for link in &mut s.links {
        link.chirp = link.chirp.with_sf(sf)?.with_bw(bw)?.with_cr(cr)?;
    }
    Ok(s)
}
