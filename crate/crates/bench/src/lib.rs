//! Shared fixtures for the benchmarks.

use lora_mimo::css::ChirpParams;
use lora_mimo::sim::Scenario;

pub fn chirp(sf: u8, bw: u32) -> ChirpParams {
    ChirpParams::baseband(sf, bw, 1).expect("valid chirp")
}

/// Four sf7/125k links over a Rayleigh channel, one 240-byte message.
pub fn waveform_scenario() -> Scenario {
    let link = "[[links]]\nchirp = { sf = 7, bw = 125000, cr = 1 }\npayload_bytes = 60\n";
    let text = format!(
        "name = \"bench\"\nmode = \"waveform\"\nsnr_db = 20.0\nmessage = {{ random = 240 }}\n\
         channel = {{ type = \"rayleigh\", seed = 1 }}\n\
         [plan]\ntx_freqs = [865.0e6, 866.0e6, 867.0e6, 868.0e6]\nrx_freqs = [865.0e6, 866.0e6, 867.0e6, 868.0e6]\n{}",
        link.repeat(4)
    );
    Scenario::from_toml_str(&text).expect("valid scenario")
}
