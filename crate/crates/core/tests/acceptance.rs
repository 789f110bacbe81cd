//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fail.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use lora_mimo::css::{cross_correlation, error_rate, modulate, ChirpParams, Demodulator};
use lora_mimo::mimo::{
    apply_channel, eigen_streams, generate_channel, postprocess, precode, svd, CMatrix4, ChannelModel, StreamKind,
    StreamVector,
};
use lora_mimo::protocol::{
    run_transfer, write_jsonl, EventKind, Lossless, Packet, RadioId, Side, UartModel, TX_RADIOS,
};
use lora_mimo::radio::{
    aggregate_throughput, bitrate, current_draw, transmission_delay, CurrentModel, LinkConfig, RadioState,
};
use lora_mimo::sim::{run, Scenario};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn scenario(name: &str) -> Result<Scenario, String> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    Scenario::load(&path).map_err(|e| e.to_string())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn chirp(sf: u8, bw: u32) -> ChirpParams {
    ChirpParams::baseband(sf, bw, 1).unwrap()
}

fn c1_bitrates() -> Outcome {
    let cases = [
        ((6, 500_000), 37_500.0),
        ((7, 500_000), 21_875.0),
        ((6, 250_000), 18_750.0),
        ((8, 500_000), 12_500.0),
    ];
    for ((sf, bw), want) in cases {
        let got = bitrate(&chirp(sf, bw));
        ensure(got == want, || format!("sf {sf} bw {bw}: {got} != {want}"))?;
    }
    Ok("37500 / 21875 / 18750 / 12500 bps exact".into())
}

fn c2_aggregate() -> Outcome {
    let got = aggregate_throughput(&[36_000.0, 20_250.0, 18_000.0, 11_000.0]).map_err(|e| e.to_string())?;
    ensure(got == 85_250.0, || format!("aggregate {got}"))?;
    Ok("85250 bps".into())
}

fn c3_delays() -> Outcome {
    let s = scenario("link_delays.toml")?;
    let ideal_want = [51.2, 87.8, 102.4, 153.6];
    let measured = [67.0, 112.0, 125.0, 197.0];
    let mut rows = Vec::new();
    for (i, link) in s.links.iter().enumerate() {
        let ideal = transmission_delay(link, 240, 0.0);
        ensure((ideal - ideal_want[i]).abs() <= 0.05, || {
            format!("link {}: ideal {ideal}", i + 1)
        })?;
        let model = transmission_delay(link, 240, link.overhead_ms);
        ensure((model - measured[i]).abs() <= 2.0, || {
            format!("link {}: model {model} vs {}", i + 1, measured[i])
        })?;
        rows.push((bitrate(&link.chirp), model));
    }
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));
    ensure(rows.windows(2).all(|w| w[0].1 < w[1].1), || {
        format!("ordering {rows:?}")
    })?;
    let delays: Vec<String> = rows.iter().map(|r| format!("{:.1}", r.1)).collect();
    Ok(format!("fitted delays {} ms", delays.join(" / ")))
}

fn c4_svd() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..100 {
        let h = generate_channel(&ChannelModel::Rayleigh { seed }).map_err(|e| e.to_string())?;
        let f = svd(&h).map_err(|e| e.to_string())?;
        let norm = h.matrix().frobenius_norm();
        let recon = h.matrix().sub(&f.reconstruct()).frobenius_norm() / norm.max(1.0);
        let unit =
            f.u.unitarity_defect()
                .max(f.v.unitarity_defect())
                .max((f.v * f.v.adjoint()).sub(&CMatrix4::identity()).frobenius_norm());
        let gt = StreamVector::new(
            StreamKind::PrecodedTransmit,
            std::array::from_fn(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))),
        );
        let chained = postprocess(
            &f,
            &apply_channel(&h, &precode(&f, &gt), &StreamVector::zeros(StreamKind::Noise)),
        );
        let oracle = eigen_streams(&f, &gt, &StreamVector::zeros(StreamKind::TransformedNoise));
        let comp = (0..4)
            .map(|i| (chained.values[i] - oracle.values[i]).norm())
            .fold(0.0, f64::max);
        ensure(recon <= 1e-10, || format!("seed {seed}: reconstruction {recon:e}"))?;
        ensure(unit <= 1e-10, || format!("seed {seed}: unitarity {unit:e}"))?;
        ensure(comp <= 1e-9, || format!("seed {seed}: composition {comp:e}"))?;
        worst = (worst.0.max(recon), worst.1.max(unit), worst.2.max(comp));
    }
    Ok(format!(
        "100 channels, worst recon {:.1e}, unitarity {:.1e}, composition {:.1e}",
        worst.0, worst.1, worst.2
    ))
}

fn c5_protocol() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let chunks = [4usize, 16, 60, 255];
    let mut seen = [false; 5];
    let mut medium = Lossless {
        airtime: |_: RadioId, p: &Packet| p.wire_len() as f64 * 0.05,
    };
    for case in 0..500 {
        let len = rng.random_range(1..=1000);
        let message: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let chunk = chunks[case % chunks.len()];
        let t = run_transfer(
            &message,
            (case % 0x8000) as u16,
            chunk,
            &TX_RADIOS,
            UartModel::default(),
            &mut medium,
        )
        .map_err(|e| e.to_string())?;
        let back = t.message().map_err(|e| format!("case {case}: {e}"))?;
        ensure(back == message, || format!("case {case}: bytes differ"))?;
        for &b in &t.batch_sizes {
            seen[b] = true;
        }
    }
    ensure(seen[1..].iter().all(|&s| s), || format!("batch sizes seen {seen:?}"))?;
    Ok("500 messages byte-exact, batch sizes 4/3/2/1 covered".into())
}

fn c6_stagger() -> Outcome {
    let s = scenario("four_link_stagger.toml")?;
    let out = run(&s).map_err(|e| e.to_string())?;
    let stagger = out.report.metrics.rx_stagger_ms.ok_or("first batch incomplete")?;
    ensure((stagger - 21.0).abs() <= 0.5, || format!("rx_stagger {stagger} ms"))?;
    let first_msg = out
        .events
        .iter()
        .find(|e| e.kind == EventKind::Rx)
        .ok_or("no receptions")?
        .msg_id;
    let master_rx: Vec<f64> = out
        .events
        .iter()
        .filter(|e| e.unit == Side::Rx && e.kind == EventKind::Rx && e.msg_id == first_msg && e.chunk_idx < 2)
        .map(|e| e.t_ms)
        .collect();
    ensure(master_rx.len() == 2 && master_rx[0] == master_rx[1], || {
        format!("master arrivals {master_rx:?}")
    })?;
    Ok(format!(
        "rx_stagger {stagger:.3} ms, master pair at {:.3} ms",
        master_rx[0]
    ))
}

fn c7_css() -> Outcome {
    for sf in 6..=8u8 {
        let p = chirp(sf, 125_000);
        let demod = Demodulator::new(&p);
        for s in 0..p.chips() as u32 {
            let x = modulate(&p, s).map_err(|e| e.to_string())?;
            let (got, _) = demod.demodulate(&x.samples).map_err(|e| e.to_string())?;
            ensure(got == s, || format!("sf {sf}: symbol {s} decoded as {got}"))?;
        }
    }
    let p = chirp(7, 125_000);
    let mut bers = Vec::new();
    for snr in [-10.0, -5.0, 0.0, 5.0, 10.0, 20.0] {
        bers.push(error_rate(&p, snr, 10_000, 7).map_err(|e| e.to_string())?.ber);
    }
    ensure(bers.windows(2).all(|w| w[1] <= w[0]), || {
        format!("BER not monotone: {bers:?}")
    })?;

    let grid: Vec<ChirpParams> = [6u8, 7, 8]
        .iter()
        .flat_map(|&sf| [125_000u32, 250_000, 500_000].map(|bw| chirp(sf, bw)))
        .collect();
    let mut violations = Vec::new();
    for i in 0..grid.len() {
        let d = cross_correlation(&grid[i], &grid[i]);
        ensure((d - 1.0).abs() <= 1e-9, || format!("diagonal {i} = {d}"))?;
        for j in i + 1..grid.len() {
            let v = cross_correlation(&grid[i], &grid[j]);
            if v >= 0.5 {
                violations.push(format!(
                    "sf{}/{}k vs sf{}/{}k = {v}",
                    grid[i].sf(),
                    grid[i].bw() / 1000,
                    grid[j].sf(),
                    grid[j].bw() / 1000
                ));
            }
        }
    }
    ensure(violations.is_empty(), || {
        format!(
            "loopback and BER ok; off-diagonal bound < 0.5 violated: {}",
            violations.join(", ")
        )
    })?;
    Ok(format!("loopback exhaustive, BER {bers:?}, correlations < 0.5"))
}

fn c8_current() -> Outcome {
    let m = CurrentModel::published();
    let idle = current_draw(&m, RadioState::Idle).map_err(|e| e.to_string())?;
    let rx = current_draw(&m, RadioState::Rx).map_err(|e| e.to_string())?;
    let tx = current_draw(
        &m,
        RadioState::Tx {
            sf: 8,
            payload_bytes: 240,
        },
    )
    .map_err(|e| e.to_string())?;
    ensure(idle == 45.0 && rx == 80.0 && tx == 137.0, || {
        format!("anchors {idle} / {rx} / {tx}")
    })?;
    for payload in [40u16, 100, 160, 240] {
        let row: Vec<f64> = (6..=8)
            .map(|sf| {
                current_draw(
                    &m,
                    RadioState::Tx {
                        sf,
                        payload_bytes: payload,
                    },
                )
            })
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        ensure(row.windows(2).all(|w| w[0] <= w[1]), || {
            format!("payload {payload}: {row:?}")
        })?;
    }
    let _ = LinkConfig::new(chirp(8, 125_000), 20.0, 240).map_err(|e| e.to_string())?;
    Ok("idle 45 / rx 80 / tx 137 mA, monotone in sf".into())
}

fn c9_determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("lora-mimo-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let mut checked = Vec::new();
    for name in ["four_link_stagger", "channel_rates"] {
        let s = scenario(&format!("{name}.toml"))?;
        let mut files = Vec::new();
        for k in 0..2 {
            let out = run(&s).map_err(|e| e.to_string())?;
            let report = dir.join(format!("{name}-{k}.json"));
            let events = dir.join(format!("{name}-{k}.jsonl"));
            std::fs::write(
                &report,
                serde_json::to_vec_pretty(&out.report).map_err(|e| e.to_string())?,
            )
            .map_err(|e| e.to_string())?;
            let mut log = Vec::new();
            write_jsonl(&out.events, &mut log).map_err(|e| e.to_string())?;
            std::fs::write(&events, log).map_err(|e| e.to_string())?;
            files.push((std::fs::read(report).unwrap(), std::fs::read(events).unwrap()));
        }
        ensure(files[0] == files[1], || format!("{name}: outputs differ"))?;
        checked.push(name);
    }
    std::fs::remove_dir_all(&dir).ok();
    Ok(format!(
        "byte-identical report and event log for {}",
        checked.join(", ")
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("bitrate reproduction", c1_bitrates, Duration::from_secs(1)),
        ("aggregate throughput", c2_aggregate, Duration::from_secs(1)),
        ("delay model", c3_delays, Duration::from_secs(1)),
        ("SVD suite", c4_svd, Duration::from_secs(5)),
        ("protocol round-trip", c5_protocol, Duration::from_secs(10)),
        ("receiver stagger", c6_stagger, Duration::from_secs(5)),
        ("CSS properties", c7_css, Duration::from_secs(60)),
        ("current model anchors", c8_current, Duration::from_secs(1)),
        ("determinism", c9_determinism, Duration::from_secs(10)),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > budget => Err(format!("{msg}; took {elapsed:.2?}, budget {budget:?}")),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("PASS  {}. {name}: {msg} ({elapsed:.2?})", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {}. {name}: {msg} ({elapsed:.2?})", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
