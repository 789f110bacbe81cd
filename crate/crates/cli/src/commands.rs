use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use lora_mimo::css::{
    cross_correlation, error_rate, ChirpParams, ErrorRatePoint, SUPPORTED_BW, SUPPORTED_CR, SUPPORTED_SF,
};
use lora_mimo::mimo::{generate_channel, svd, ChannelMatrix, ChannelModel, STREAM_GAIN_FLOOR};
use lora_mimo::protocol::write_jsonl;
use lora_mimo::radio::{bitrate, rate_table, RateRow};
use lora_mimo::sim::{run, sweep, Scenario, SweepAxes, SWEEP_CSV_HEADER};
use serde::Serialize;

use crate::args::{BerArgs, Format, OrthoArgs, RateArgs, SimulateArgs, SvdArgs, SweepArgs};

/// Failure mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, unreadable or invalid configuration.
    Usage(String),
    /// The run finished but the message was not delivered intact.
    Delivery(String),
    /// Output could not be written.
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Delivery(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Delivery(m) | Failure::Io(m) => m,
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

fn pick(format: Option<Format>, allowed: &[Format], command: &str) -> Result<Format, Failure> {
    let f = format.unwrap_or(allowed[0]);
    if allowed.contains(&f) {
        Ok(f)
    } else {
        let names: Vec<&str> = allowed.iter().map(|f| f.name()).collect();
        Err(usage(format!("{command} supports --format {}", names.join(", "))))
    }
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize + ?Sized>(value: &T, out: &mut dyn Write) -> Result<(), Failure> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn write_csv<T: Serialize>(rows: &[T], out: &mut dyn Write) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario, Failure> {
    let mut s = Scenario::load(path).map_err(usage)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(s)
}

pub fn rate(args: &RateArgs) -> Result<(), Failure> {
    let format = pick(args.format, &[Format::Text, Format::Csv, Format::Json], "rate")?;
    let chirp = ChirpParams::baseband(args.sf, args.bw, args.cr).map_err(usage)?;
    let rows = rate_table(&[args.sf], &[args.bw], &[args.cr]).map_err(usage)?;
    let mut out = sink(None)?;
    match format {
        Format::Csv => write_csv(&rows, &mut out)?,
        Format::Json => write_json(&rows[0], &mut out)?,
        _ => {
            let bps = bitrate(&chirp);
            writeln!(out, "{bps:.2} bps ({:.2} kbps)", bps / 1000.0)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn sweep_cmd(args: &SweepArgs, verbose: u8) -> Result<(), Failure> {
    let format = pick(args.format, &[Format::Csv, Format::Json], "sweep")?;
    let sfs = args.sf_range.as_ref().map(|r| r.0.clone());
    let Some(path) = &args.scenario else {
        if args.snr_set.is_some() {
            return Err(usage("--snr-set requires --scenario"));
        }
        let sfs = sfs.unwrap_or_else(|| SUPPORTED_SF.collect());
        let bws = args.bw_set.clone().unwrap_or_else(|| SUPPORTED_BW.to_vec());
        let crs = args.cr_set.clone().unwrap_or_else(|| SUPPORTED_CR.collect());
        let rows: Vec<RateRow> = rate_table(&sfs, &bws, &crs).map_err(usage)?;
        let mut out = sink(args.out.as_deref())?;
        match format {
            Format::Json => write_json(&rows, &mut out)?,
            _ => write_csv(&rows, &mut out)?,
        }
        out.flush()?;
        return Ok(());
    };

    let base = load_scenario(path, args.seed)?;
    base.validate().map_err(usage)?;
    let axes = SweepAxes {
        sf: sfs.unwrap_or_default(),
        bw: args.bw_set.clone().unwrap_or_default(),
        cr: args.cr_set.clone().unwrap_or_default(),
        snr_db: args.snr_set.clone().unwrap_or_default(),
    };
    let rows = sweep(&base, &axes);
    if verbose > 0 {
        let failed = rows.iter().filter(|r| r.error.is_some()).count();
        eprintln!("sweep {}: {} rows, {failed} failed", base.name, rows.len());
    }
    let mut out = sink(args.out.as_deref())?;
    match format {
        Format::Json => write_json(&rows, &mut out)?,
        _ => {
            writeln!(out, "{SWEEP_CSV_HEADER}")?;
            for row in &rows {
                writeln!(out, "{}", row.to_csv())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct OrthoConfig {
    sf: u8,
    bw_hz: u32,
}

#[derive(Serialize)]
struct OrthoReport {
    oversample: usize,
    configs: Vec<OrthoConfig>,
    matrix: Vec<Vec<f64>>,
}

/// Correlation matrix over `sfs x bws`, sf-major.
pub fn ortho_matrix(sfs: &[u8], bws: &[u32], oversample: usize) -> Result<(Vec<ChirpParams>, Vec<Vec<f64>>), Failure> {
    if sfs.is_empty() || bws.is_empty() {
        return Err(usage("ortho needs at least one sf and one bw"));
    }
    let mut grid = Vec::with_capacity(sfs.len() * bws.len());
    for &sf in sfs {
        for &bw in bws {
            grid.push(
                ChirpParams::baseband(sf, bw, 1)
                    .and_then(|c| c.with_oversample(oversample))
                    .map_err(usage)?,
            );
        }
    }
    let n = grid.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        m[i][i] = cross_correlation(&grid[i], &grid[i]);
        for j in i + 1..n {
            let v = cross_correlation(&grid[i], &grid[j]);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    Ok((grid, m))
}

pub fn ortho(args: &OrthoArgs) -> Result<(), Failure> {
    let format = pick(args.format, &[Format::Csv, Format::Json], "ortho")?;
    let (grid, matrix) = ortho_matrix(&args.sf_set, &args.bw_set, args.oversample)?;
    let mut out = sink(args.out.as_deref())?;
    match format {
        Format::Json => {
            let configs = grid
                .iter()
                .map(|c| OrthoConfig {
                    sf: c.sf(),
                    bw_hz: c.bw(),
                })
                .collect();
            write_json(
                &OrthoReport {
                    oversample: args.oversample,
                    configs,
                    matrix,
                },
                &mut out,
            )?;
        }
        _ => {
            let labels: Vec<String> = grid.iter().map(|c| format!("sf{}_bw{}", c.sf(), c.bw())).collect();
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(std::iter::once("config").chain(labels.iter().map(String::as_str)))?;
            for (label, row) in labels.iter().zip(&matrix) {
                w.write_record(std::iter::once(label.clone()).chain(row.iter().map(f64::to_string)))?;
            }
            w.flush()?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SvdReport {
    h: ChannelMatrix,
    #[serde(flatten)]
    factors: lora_mimo::mimo::SvdFactors,
    rank: usize,
    reconstruction_error: f64,
    u_unitarity_defect: f64,
    v_unitarity_defect: f64,
}

#[derive(Serialize)]
struct SvdEntry {
    matrix: &'static str,
    row: usize,
    col: usize,
    re: f64,
    im: f64,
}

pub fn svd_cmd(args: &SvdArgs) -> Result<(), Failure> {
    let format = pick(args.format, &[Format::Json, Format::Csv], "svd")?;
    let h = if let Some(path) = &args.channel {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        ChannelMatrix::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
    } else {
        let model = match args.rayleigh {
            Some(seed) => ChannelModel::Rayleigh { seed },
            None => ChannelModel::Identity,
        };
        generate_channel(&model).map_err(usage)?
    };
    let f = svd(&h).map_err(usage)?;
    let mut out = sink(args.out.as_deref())?;
    match format {
        Format::Csv => {
            let mut rows = Vec::new();
            for (name, m) in [("h", h.matrix()), ("u", &f.u), ("v", &f.v)] {
                for row in 0..4 {
                    for col in 0..4 {
                        let z = m[(row, col)];
                        rows.push(SvdEntry {
                            matrix: name,
                            row,
                            col,
                            re: z.re,
                            im: z.im,
                        });
                    }
                }
            }
            for (i, &s) in f.sigma.iter().enumerate() {
                rows.push(SvdEntry {
                    matrix: "sigma",
                    row: i,
                    col: i,
                    re: s,
                    im: 0.0,
                });
            }
            write_csv(&rows, &mut out)?;
        }
        _ => {
            let norm = h.matrix().frobenius_norm().max(f64::MIN_POSITIVE);
            let report = SvdReport {
                h,
                factors: f,
                rank: f.rank(STREAM_GAIN_FLOOR),
                reconstruction_error: h.matrix().sub(&f.reconstruct()).frobenius_norm() / norm,
                u_unitarity_defect: f.u.unitarity_defect(),
                v_unitarity_defect: f.v.unitarity_defect(),
            };
            write_json(&report, &mut out)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn simulate(args: &SimulateArgs, verbose: u8) -> Result<(), Failure> {
    let format = pick(args.format, &[Format::Json, Format::Jsonl], "simulate")?;
    let scenario = load_scenario(&args.scenario, args.seed)?;
    let output = run(&scenario).map_err(usage)?;
    let report = &output.report;

    let mut out = sink(args.out.as_deref())?;
    match format {
        Format::Jsonl => {
            serde_json::to_writer(&mut out, report)?;
            out.write_all(b"\n")?;
        }
        _ => write_json(report, &mut out)?,
    }
    out.flush()?;
    if let Some(path) = &args.events {
        let mut log = sink(Some(path))?;
        write_jsonl(&output.events, &mut log)?;
        log.flush()?;
    }
    if verbose > 0 {
        eprintln!(
            "{}: aggregate {:.2} bps, ber {}, {} events",
            report.scenario,
            report.metrics.aggregate_bps,
            report.metrics.ber,
            output.events.len()
        );
    }
    if report.delivered() {
        Ok(())
    } else {
        Err(Failure::Delivery(format!(
            "message not delivered: {}",
            serde_json::to_string(&report.delivery)?
        )))
    }
}

pub fn ber(args: &BerArgs, verbose: u8) -> Result<(), Failure> {
    let format = pick(args.format, &[Format::Csv, Format::Json], "ber")?;
    let params = ChirpParams::baseband(args.sf, args.bw, args.cr)
        .and_then(|c| c.with_oversample(args.oversample))
        .map_err(usage)?;
    if args.snr_set.iter().any(|s| !s.is_finite()) {
        return Err(usage("snr values must be finite"));
    }
    let mut points: Vec<ErrorRatePoint> = Vec::with_capacity(args.snr_set.len());
    for (i, &snr) in args.snr_set.iter().enumerate() {
        let p = error_rate(&params, snr, args.symbols, args.seed.wrapping_add(i as u64)).map_err(usage)?;
        if verbose > 0 {
            eprintln!("snr {snr} dB: ber {}", p.ber);
        }
        points.push(p);
    }
    let mut out = sink(args.out.as_deref())?;
    match format {
        Format::Json => write_json(&points, &mut out)?,
        _ => write_csv(&points, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_config_ortho_is_unit() {
        let (grid, m) = ortho_matrix(&[7], &[125_000], 1).unwrap();
        assert_eq!(grid.len(), 1);
        assert!((m[0][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ortho_rejects_empty_sets() {
        assert!(matches!(ortho_matrix(&[], &[125_000], 1), Err(Failure::Usage(_))));
    }

    #[test]
    fn format_restrictions() {
        assert_eq!(pick(None, &[Format::Csv, Format::Json], "x").unwrap(), Format::Csv);
        assert!(pick(Some(Format::Jsonl), &[Format::Csv, Format::Json], "x").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Failure::Usage(String::new()).exit_code(), 2);
        assert_eq!(Failure::Delivery(String::new()).exit_code(), 3);
    }
}
