//! Chirp spread spectrum modem.
//!
//! A symbol `s` at spreading factor `sf` is the base up-chirp (sweeping
//! `-bw/2 .. +bw/2` over `2^sf / bw` seconds) cyclically shifted by `s` chips.
//! The receiver multiplies by the conjugate base chirp and picks the strongest
//! DFT bin.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SUPPORTED_SF: std::ops::RangeInclusive<u8> = 6..=12;
pub const SUPPORTED_BW: [u32; 3] = [125_000, 250_000, 500_000];
pub const SUPPORTED_CR: std::ops::RangeInclusive<u8> = 1..=4;

/// Default carrier used when a configuration does not name one (868 MHz band).
pub const DEFAULT_CARRIER_HZ: f64 = 868.0e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModemError {
    #[error("sf out of range: {0} (expected 6..=12)")]
    SpreadingFactor(u8),
    #[error("bw out of range: {0} Hz (expected 125000, 250000 or 500000)")]
    Bandwidth(u32),
    #[error("cr out of range: {0} (expected 1..=4)")]
    CodingRate(u8),
    #[error("oversample must be at least 1")]
    Oversample,
    #[error("carrier frequency must be finite and positive, got {0}")]
    Carrier(f64),
    #[error("symbol {symbol} out of range for sf {sf}")]
    SymbolRange { symbol: u32, sf: u8 },
    #[error("signal length {got} does not match one symbol ({expected} samples)")]
    LengthMismatch { expected: usize, got: usize },
    #[error("signal contains non-finite samples")]
    NonFinite,
}

/// Modulation configuration of one SISO link.
///
/// `cr` is the coding-rate index: the code rate is `4 / (4 + cr)`, so `cr = 1`
/// is the 4/5 setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChirpParams")]
pub struct ChirpParams {
    sf: u8,
    bw: u32,
    cr: u8,
    cf: f64,
    oversample: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChirpParams {
    sf: u8,
    bw: u32,
    #[serde(default = "default_cr")]
    cr: u8,
    #[serde(default = "default_cf")]
    cf: f64,
    #[serde(default = "default_oversample")]
    oversample: usize,
}

fn default_cr() -> u8 {
    1
}

fn default_cf() -> f64 {
    DEFAULT_CARRIER_HZ
}

fn default_oversample() -> usize {
    1
}

impl TryFrom<RawChirpParams> for ChirpParams {
    type Error = ModemError;

    fn try_from(raw: RawChirpParams) -> Result<Self, Self::Error> {
        ChirpParams::new(raw.sf, raw.bw, raw.cr, raw.cf)?.with_oversample(raw.oversample)
    }
}

impl ChirpParams {
    pub fn new(sf: u8, bw: u32, cr: u8, cf: f64) -> Result<Self, ModemError> {
        if !SUPPORTED_SF.contains(&sf) {
            return Err(ModemError::SpreadingFactor(sf));
        }
        if !SUPPORTED_BW.contains(&bw) {
            return Err(ModemError::Bandwidth(bw));
        }
        if !SUPPORTED_CR.contains(&cr) {
            return Err(ModemError::CodingRate(cr));
        }
        if !(cf.is_finite() && cf > 0.0) {
            return Err(ModemError::Carrier(cf));
        }
        Ok(Self {
            sf,
            bw,
            cr,
            cf,
            oversample: 1,
        })
    }

    /// Shorthand for a config on the default carrier.
    pub fn baseband(sf: u8, bw: u32, cr: u8) -> Result<Self, ModemError> {
        Self::new(sf, bw, cr, DEFAULT_CARRIER_HZ)
    }

    pub fn with_oversample(mut self, oversample: usize) -> Result<Self, ModemError> {
        if oversample == 0 {
            return Err(ModemError::Oversample);
        }
        self.oversample = oversample;
        Ok(self)
    }

    pub fn with_carrier(self, cf: f64) -> Result<Self, ModemError> {
        Self::new(self.sf, self.bw, self.cr, cf)?.with_oversample(self.oversample)
    }

    pub fn with_sf(self, sf: u8) -> Result<Self, ModemError> {
        Self::new(sf, self.bw, self.cr, self.cf)?.with_oversample(self.oversample)
    }

    pub fn with_bw(self, bw: u32) -> Result<Self, ModemError> {
        Self::new(self.sf, bw, self.cr, self.cf)?.with_oversample(self.oversample)
    }

    pub fn with_cr(self, cr: u8) -> Result<Self, ModemError> {
        Self::new(self.sf, self.bw, cr, self.cf)?.with_oversample(self.oversample)
    }

    pub fn sf(&self) -> u8 {
        self.sf
    }

    pub fn bw(&self) -> u32 {
        self.bw
    }

    pub fn cr(&self) -> u8 {
        self.cr
    }

    pub fn cf(&self) -> f64 {
        self.cf
    }

    pub fn oversample(&self) -> usize {
        self.oversample
    }

    /// Chips per symbol, `2^sf`.
    pub fn chips(&self) -> usize {
        1 << self.sf
    }

    pub fn samples_per_symbol(&self) -> usize {
        self.chips() * self.oversample
    }

    pub fn sample_rate(&self) -> f64 {
        self.bw as f64 * self.oversample as f64
    }
}

/// Symbol duration `2^sf / bw` in seconds.
pub fn symbol_duration(params: &ChirpParams) -> f64 {
    params.chips() as f64 / params.bw as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasebandSignal {
    pub samples: Vec<Complex64>,
    pub sample_rate: f64,
}

impl BasebandSignal {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|s| s.re.is_finite() && s.im.is_finite())
    }
}

/// Phase of a chirp shifted by `symbol` chips at position `u` (in chips,
/// `0 <= u < chips`). The instantaneous frequency wraps from `+bw/2` back to
/// `-bw/2` at `u = chips - symbol`; the phase stays continuous across the wrap.
fn chirp_phase(chips: usize, symbol: usize, u: f64) -> f64 {
    let m = chips as f64;
    let s = symbol as f64;
    let mut cycles = (s / m - 0.5) * u + u * u / (2.0 * m);
    let wrap = m - s;
    if u >= wrap {
        cycles -= u - wrap;
    }
    2.0 * PI * cycles
}

/// One symbol's samples of a chirp at an arbitrary sample rate.
fn chirp_samples(params: &ChirpParams, symbol: usize, sample_rate: f64) -> Vec<Complex64> {
    let chips = params.chips();
    let bw = params.bw as f64;
    let n = (symbol_duration(params) * sample_rate).round() as usize;
    (0..n)
        .map(|k| {
            let u = k as f64 * bw / sample_rate;
            Complex64::from_polar(1.0, chirp_phase(chips, symbol, u))
        })
        .collect()
}

/// Unshifted up-chirp at the config's own sample rate.
pub fn base_chirp(params: &ChirpParams) -> BasebandSignal {
    BasebandSignal {
        samples: chirp_samples(params, 0, params.sample_rate()),
        sample_rate: params.sample_rate(),
    }
}

/// Modulates one symbol.
pub fn modulate(params: &ChirpParams, symbol: u32) -> Result<BasebandSignal, ModemError> {
    if symbol as usize >= params.chips() {
        return Err(ModemError::SymbolRange { symbol, sf: params.sf });
    }
    Ok(BasebandSignal {
        samples: chirp_samples(params, symbol as usize, params.sample_rate()),
        sample_rate: params.sample_rate(),
    })
}

/// Modulates a symbol sequence back to back.
pub fn modulate_all(params: &ChirpParams, symbols: &[u32]) -> Result<BasebandSignal, ModemError> {
    let mut samples = Vec::with_capacity(symbols.len() * params.samples_per_symbol());
    for &s in symbols {
        samples.extend(modulate(params, s)?.samples);
    }
    Ok(BasebandSignal {
        samples,
        sample_rate: params.sample_rate(),
    })
}

/// Dechirp + DFT receiver for one configuration. Holds the FFT plan and the
/// conjugate reference chirp so repeated symbols do not re-plan.
pub struct Demodulator {
    params: ChirpParams,
    downchirp: Vec<Complex64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Demodulator {
    pub fn new(params: &ChirpParams) -> Self {
        let critical = params.with_oversample(1).expect("oversample 1 is valid");
        let downchirp = chirp_samples(&critical, 0, critical.sample_rate())
            .into_iter()
            .map(|z| z.conj())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(params.chips());
        Self {
            params: *params,
            downchirp,
            fft,
        }
    }

    pub fn params(&self) -> &ChirpParams {
        &self.params
    }

    /// Demodulates exactly one symbol worth of samples. Returns the detected
    /// symbol and the peak magnitude normalised so a clean matched symbol gives
    /// 1.0.
    pub fn demodulate(&self, samples: &[Complex64]) -> Result<(u32, f64), ModemError> {
        let expected = self.params.samples_per_symbol();
        if samples.len() != expected {
            return Err(ModemError::LengthMismatch {
                expected,
                got: samples.len(),
            });
        }
        let os = self.params.oversample;
        let mut buf: Vec<Complex64> = samples
            .iter()
            .step_by(os)
            .zip(&self.downchirp)
            .map(|(x, d)| x * d)
            .collect();
        if buf.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(ModemError::NonFinite);
        }
        self.fft.process(&mut buf);
        let mut best = 0usize;
        let mut best_mag = buf[0].norm();
        for (k, z) in buf.iter().enumerate().skip(1) {
            let mag = z.norm();
            if mag > best_mag {
                best = k;
                best_mag = mag;
            }
        }
        Ok((best as u32, best_mag / self.params.chips() as f64))
    }

    /// Demodulates a back-to-back symbol stream. Trailing samples shorter than
    /// one symbol are ignored.
    pub fn demodulate_stream(&self, samples: &[Complex64]) -> Result<Vec<u32>, ModemError> {
        samples
            .chunks_exact(self.params.samples_per_symbol())
            .map(|chunk| self.demodulate(chunk).map(|(s, _)| s))
            .collect()
    }
}

/// Demodulates one symbol. Builds a fresh [`Demodulator`]; reuse one directly
/// when processing many symbols.
pub fn demodulate(params: &ChirpParams, signal: &BasebandSignal) -> Result<(u32, f64), ModemError> {
    Demodulator::new(params).demodulate(&signal.samples)
}

/// Normalised peak circular cross-correlation between the base chirps of two
/// configurations.
///
/// Both chirps are sampled at a common rate (the larger bandwidth times the
/// larger oversampling factor) over the longer of the two symbol durations; the
/// shorter chirp repeats back to back to fill that window. The result is the
/// largest correlation magnitude over all cyclic lags divided by the window
/// length, so identical configurations give 1.0. Carrier frequency is ignored:
/// this measures interference between links sharing one carrier.
pub fn cross_correlation(a: &ChirpParams, b: &ChirpParams) -> f64 {
    let sample_rate = a.bw.max(b.bw) as f64 * a.oversample.max(b.oversample) as f64;
    let xa = chirp_samples(a, 0, sample_rate);
    let xb = chirp_samples(b, 0, sample_rate);
    let (long, short) = if xa.len() >= xb.len() { (xa, xb) } else { (xb, xa) };
    let len = long.len();
    // Symbol durations are 2^k multiples of each other for the supported grid.
    debug_assert_eq!(len % short.len(), 0);
    let mut tiled: Vec<Complex64> = short.iter().cycle().take(len).copied().collect();
    let mut spectrum = long;

    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(len);
    let inverse = planner.plan_fft_inverse(len);
    forward.process(&mut spectrum);
    forward.process(&mut tiled);
    let mut corr: Vec<Complex64> = spectrum.iter().zip(&tiled).map(|(x, y)| x * y.conj()).collect();
    inverse.process(&mut corr);

    // Unnormalised inverse FFT scales by len, and the correlation sum itself
    // peaks at len for identical unit-modulus chirps.
    let scale = (len * len) as f64;
    let peak = corr.iter().map(|z| z.norm()).fold(0.0, f64::max) / scale;
    peak.min(1.0)
}

/// Maps bytes onto `sf`-bit symbols, MSB first. The final symbol is zero-padded.
pub fn bytes_to_symbols(bytes: &[u8], sf: u8) -> Vec<u32> {
    let sf = sf as usize;
    let total_bits = bytes.len() * 8;
    let n_symbols = total_bits.div_ceil(sf);
    let bit = |i: usize| -> u32 {
        if i < total_bits {
            ((bytes[i / 8] >> (7 - i % 8)) & 1) as u32
        } else {
            0
        }
    };
    (0..n_symbols)
        .map(|s| (0..sf).fold(0u32, |acc, j| (acc << 1) | bit(s * sf + j)))
        .collect()
}

/// Inverse of [`bytes_to_symbols`], keeping the first `n_bytes` bytes.
pub fn symbols_to_bytes(symbols: &[u32], sf: u8, n_bytes: usize) -> Vec<u8> {
    let sf = sf as usize;
    let mut out = vec![0u8; n_bytes];
    for i in 0..(n_bytes * 8).min(symbols.len() * sf) {
        let sym = symbols[i / sf];
        let b = (sym >> (sf - 1 - i % sf)) & 1;
        out[i / 8] |= (b as u8) << (7 - i % 8);
    }
    out
}

/// Seeded circularly-symmetric complex Gaussian noise.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    rng: ChaCha8Rng,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// One sample with total variance `variance` (half per component).
    pub fn sample(&mut self, variance: f64) -> Complex64 {
        let sd = (variance / 2.0).sqrt();
        let re: f64 = StandardNormal.sample(&mut self.rng);
        let im: f64 = StandardNormal.sample(&mut self.rng);
        Complex64::new(re * sd, im * sd)
    }

    /// Adds AWGN so the per-sample SNR against a unit-power signal is `snr_db`.
    pub fn add_awgn(&mut self, samples: &mut [Complex64], snr_db: f64) {
        let variance = 10f64.powf(-snr_db / 10.0);
        for s in samples {
            *s += self.sample(variance);
        }
    }

    pub fn uniform_symbol(&mut self, chips: usize) -> u32 {
        self.rng.random_range(0..chips as u32)
    }
}

/// One point of a symbol/bit error measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRatePoint {
    pub snr_db: f64,
    pub symbols: usize,
    pub symbol_errors: usize,
    pub bit_errors: usize,
    pub ser: f64,
    pub ber: f64,
}

/// Monte-Carlo symbol and bit error rate over AWGN at `snr_db`, uniform random
/// symbols, plain binary symbol-to-bit mapping.
pub fn error_rate(params: &ChirpParams, snr_db: f64, symbols: usize, seed: u64) -> Result<ErrorRatePoint, ModemError> {
    let demod = Demodulator::new(params);
    let mut noise = NoiseSource::new(seed);
    let mut symbol_errors = 0;
    let mut bit_errors = 0;
    for _ in 0..symbols {
        let tx = noise.uniform_symbol(params.chips());
        let mut signal = modulate(params, tx)?;
        noise.add_awgn(&mut signal.samples, snr_db);
        let (rx, _) = demod.demodulate(&signal.samples)?;
        if rx != tx {
            symbol_errors += 1;
            bit_errors += (rx ^ tx).count_ones() as usize;
        }
    }
    let bits = symbols * params.sf as usize;
    Ok(ErrorRatePoint {
        snr_db,
        symbols,
        symbol_errors,
        bit_errors,
        ser: if symbols == 0 {
            0.0
        } else {
            symbol_errors as f64 / symbols as f64
        },
        ber: if bits == 0 {
            0.0
        } else {
            bit_errors as f64 / bits as f64
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(sf: u8, bw: u32) -> ChirpParams {
        ChirpParams::baseband(sf, bw, 1).unwrap()
    }

    #[test]
    fn rejects_invalid_params() {
        assert_eq!(
            ChirpParams::baseband(13, 125_000, 1),
            Err(ModemError::SpreadingFactor(13))
        );
        assert_eq!(
            ChirpParams::baseband(5, 125_000, 1),
            Err(ModemError::SpreadingFactor(5))
        );
        assert_eq!(
            ChirpParams::baseband(7, 200_000, 1),
            Err(ModemError::Bandwidth(200_000))
        );
        assert_eq!(ChirpParams::baseband(7, 125_000, 0), Err(ModemError::CodingRate(0)));
        assert_eq!(ChirpParams::baseband(7, 125_000, 5), Err(ModemError::CodingRate(5)));
        assert_eq!(p(7, 125_000).with_oversample(0), Err(ModemError::Oversample));
        assert!(ChirpParams::new(7, 125_000, 1, f64::NAN).is_err());
    }

    #[test]
    fn symbol_durations() {
        assert!((symbol_duration(&p(7, 125_000)) - 1.024e-3).abs() < 1e-15);
        assert!((symbol_duration(&p(6, 500_000)) - 0.128e-3).abs() < 1e-15);
        assert!((symbol_duration(&p(12, 125_000)) - 32.768e-3).abs() < 1e-15);
        assert!((symbol_duration(&p(8, 125_000)) - 2.048e-3).abs() < 1e-15);
    }

    #[test]
    fn base_chirp_sweeps_full_band() {
        let params = p(7, 125_000);
        let x = modulate(&params, 0).unwrap();
        assert_eq!(x.len(), 128);
        assert_eq!(x.sample_rate, 125_000.0);
        // Instantaneous frequency from phase differences, in units of bw.
        let freq = |k: usize| (x.samples[k + 1] * x.samples[k].conj()).arg() / (2.0 * PI);
        assert!((freq(0) - (-0.5 + 0.5 / 128.0)).abs() < 1e-12);
        assert!((freq(126) - (0.5 - 1.5 / 128.0)).abs() < 1e-12);
    }

    #[test]
    fn half_shift_is_cyclic_rotation_of_base() {
        let params = p(7, 125_000).with_oversample(1).unwrap();
        let base = modulate(&params, 0).unwrap().samples;
        let shifted = modulate(&params, 64).unwrap().samples;
        // s_64[n] equals base[n + 64] up to a constant phase.
        let ref_phase = shifted[0] * base[64].conj();
        for n in 0..128 {
            let z = shifted[n] * base[(n + 64) % 128].conj();
            assert!((z - ref_phase).norm() < 1e-9, "n={n}");
        }
    }

    #[test]
    fn symbol_out_of_range() {
        assert_eq!(
            modulate(&p(7, 125_000), 128),
            Err(ModemError::SymbolRange { symbol: 128, sf: 7 })
        );
    }

    #[test]
    fn length_mismatch() {
        let params = p(7, 125_000);
        let x = modulate(&p(8, 125_000), 3).unwrap();
        assert_eq!(
            demodulate(&params, &x),
            Err(ModemError::LengthMismatch {
                expected: 128,
                got: 256
            })
        );
    }

    #[test]
    fn unit_power() {
        for os in [1, 2, 4] {
            let params = p(9, 250_000).with_oversample(os).unwrap();
            for s in [0, 1, 255, 511] {
                let x = modulate(&params, s).unwrap();
                assert!((x.mean_power() - 1.0).abs() < 1e-9);
                assert!(x.is_finite());
            }
        }
    }

    #[test]
    fn loopback_oversampled() {
        for os in [2, 4] {
            let params = p(7, 500_000).with_oversample(os).unwrap();
            let demod = Demodulator::new(&params);
            for s in 0..128 {
                let x = modulate(&params, s).unwrap();
                let (got, peak) = demod.demodulate(&x.samples).unwrap();
                assert_eq!(got, s);
                assert!((peak - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn loopback_large_sf_sampled() {
        for sf in 9..=12u8 {
            let params = p(sf, 125_000);
            let demod = Demodulator::new(&params);
            let chips = params.chips() as u32;
            for s in [0, 1, chips / 3, chips / 2, chips - 1] {
                let x = modulate(&params, s).unwrap();
                assert_eq!(demod.demodulate(&x.samples).unwrap().0, s);
            }
        }
    }

    #[test]
    fn noisy_demod_at_20db() {
        let point = error_rate(&p(7, 125_000), 20.0, 10_000, 11).unwrap();
        assert!(point.ser <= 0.001, "ser {}", point.ser);
    }

    #[test]
    fn mismatched_sf_has_low_peak() {
        // A sf+1 chirp truncated to one sf symbol spreads over many DFT bins.
        // At sf 6 there are too few chips and the peak is ~0.21.
        for sf in 7..=11u8 {
            let rx = p(sf, 125_000);
            let tx = p(sf + 1, 125_000);
            let x = modulate(&tx, 0).unwrap();
            let window = &x.samples[..rx.samples_per_symbol()];
            let (_, peak) = Demodulator::new(&rx).demodulate(window).unwrap();
            assert!(peak <= 0.15, "sf {sf}: {peak}");
        }
    }

    #[test]
    fn autocorrelation_is_one() {
        for sf in 6..=8 {
            for bw in SUPPORTED_BW {
                let a = p(sf, bw);
                assert!((cross_correlation(&a, &a) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn correlation_ignores_carrier() {
        let a = p(7, 125_000);
        let b = a.with_carrier(915e6).unwrap();
        assert!((cross_correlation(&a, &b) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bit_mapping_roundtrip() {
        let bytes = b"LoRa MIMO";
        for sf in 6..=12u8 {
            let syms = bytes_to_symbols(bytes, sf);
            assert_eq!(syms.len(), (bytes.len() * 8).div_ceil(sf as usize));
            assert!(syms.iter().all(|&s| s < (1 << sf)));
            assert_eq!(symbols_to_bytes(&syms, sf, bytes.len()), bytes);
        }
    }

    #[test]
    fn bit_mapping_is_msb_first() {
        assert_eq!(bytes_to_symbols(&[0b1000_0001], 6), vec![0b100000, 0b010000]);
    }

    #[test]
    fn noise_is_seeded() {
        let mut a = NoiseSource::new(5);
        let mut b = NoiseSource::new(5);
        for _ in 0..16 {
            assert_eq!(a.sample(1.0), b.sample(1.0));
        }
    }

    #[test]
    fn params_deserialize_with_defaults() {
        let params: ChirpParams = serde_json::from_str(r#"{"sf":7,"bw":125000}"#).unwrap();
        assert_eq!(params.cr(), 1);
        assert_eq!(params.oversample(), 1);
        assert_eq!(params.cf(), DEFAULT_CARRIER_HZ);
        assert!(serde_json::from_str::<ChirpParams>(r#"{"sf":13,"bw":125000}"#).is_err());
    }
}
