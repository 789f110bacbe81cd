//! 4x4 MIMO channel with SVD precoding.
//!
//! The receive vector is `rho = H gamma + omega`. With `H = U S V^H`, the
//! transmitter sends `gamma = V gamma~` and the receiver forms
//! `rho~ = U^H rho`, which leaves four decoupled streams
//! `rho~_i = sigma_i gamma~_i + omega~_i`.

mod matrix;
mod svd;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use matrix::{inner, vec_norm, CMatrix4, DIM};
pub use svd::SvdFactors;

/// Singular values at or below this count as a dead eigen-channel.
pub const STREAM_GAIN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("channel matrix has non-finite entries")]
    NonFinite,
    #[error("diagonal channel needs exactly 4 gains, got {0}")]
    DiagonalLength(usize),
    #[error("channel matrix must be 4x4")]
    Shape,
}

/// The 4x4 channel matrix `H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelMatrix(CMatrix4);

impl ChannelMatrix {
    pub fn new(h: CMatrix4) -> Result<Self, ChannelError> {
        if !h.is_finite() {
            return Err(ChannelError::NonFinite);
        }
        Ok(Self(h))
    }

    pub fn matrix(&self) -> &CMatrix4 {
        &self.0
    }

    /// Row-major `[re, im]` pairs.
    pub fn to_pairs(&self) -> [[[f64; 2]; DIM]; DIM] {
        matrix_pairs(&self.0)
    }

    pub fn from_pairs(rows: &[Vec<[f64; 2]>]) -> Result<Self, ChannelError> {
        if rows.len() != DIM || rows.iter().any(|r| r.len() != DIM) {
            return Err(ChannelError::Shape);
        }
        let mut h = CMatrix4::zeros();
        for (i, row) in rows.iter().enumerate() {
            for (j, [re, im]) in row.iter().enumerate() {
                h[(i, j)] = Complex64::new(*re, *im);
            }
        }
        Self::new(h)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("matrix serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn matrix_pairs(m: &CMatrix4) -> [[[f64; 2]; DIM]; DIM] {
    std::array::from_fn(|i| std::array::from_fn(|j| [m[(i, j)].re, m[(i, j)].im]))
}

pub(crate) fn serialize_matrix<S: Serializer>(m: &CMatrix4, s: S) -> Result<S::Ok, S::Error> {
    matrix_pairs(m).serialize(s)
}

impl Serialize for ChannelMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        serialize_matrix(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for ChannelMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        ChannelMatrix::from_pairs(&rows).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Transmit,
    Receive,
    PrecodedTransmit,
    PostProcessed,
    Noise,
    TransformedNoise,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamVector {
    pub values: [Complex64; DIM],
    pub kind: StreamKind,
}

impl StreamVector {
    pub fn new(kind: StreamKind, values: [Complex64; DIM]) -> Self {
        Self { values, kind }
    }

    pub fn zeros(kind: StreamKind) -> Self {
        Self::new(kind, [Complex64::new(0.0, 0.0); DIM])
    }

    pub fn from_real(kind: StreamKind, values: [f64; DIM]) -> Self {
        Self::new(kind, values.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn norm(&self) -> f64 {
        vec_norm(&self.values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// `rho = H gamma + omega`.
pub fn apply_channel(h: &ChannelMatrix, gamma: &StreamVector, noise: &StreamVector) -> StreamVector {
    debug_assert_eq!(gamma.kind, StreamKind::Transmit);
    debug_assert_eq!(noise.kind, StreamKind::Noise);
    let mut rho = h.0.mul_vec(&gamma.values);
    for (r, w) in rho.iter_mut().zip(&noise.values) {
        *r += w;
    }
    StreamVector::new(StreamKind::Receive, rho)
}

pub fn svd(h: &ChannelMatrix) -> Result<SvdFactors, ChannelError> {
    svd::jacobi_svd(&h.0)
}

/// `gamma = V gamma~`.
pub fn precode(factors: &SvdFactors, gamma_tilde: &StreamVector) -> StreamVector {
    debug_assert_eq!(gamma_tilde.kind, StreamKind::PrecodedTransmit);
    StreamVector::new(StreamKind::Transmit, factors.v.mul_vec(&gamma_tilde.values))
}

/// `rho~ = U^H rho`.
pub fn postprocess(factors: &SvdFactors, rho: &StreamVector) -> StreamVector {
    debug_assert_eq!(rho.kind, StreamKind::Receive);
    StreamVector::new(StreamKind::PostProcessed, factors.u.adjoint().mul_vec(&rho.values))
}

/// `omega~ = U^H omega`.
pub fn transform_noise(factors: &SvdFactors, noise: &StreamVector) -> StreamVector {
    StreamVector::new(StreamKind::TransformedNoise, factors.u.adjoint().mul_vec(&noise.values))
}

/// Decoupled per-stream model `rho~_i = sigma_i gamma~_i + omega~_i`.
pub fn eigen_streams(factors: &SvdFactors, gamma_tilde: &StreamVector, noise_tilde: &StreamVector) -> StreamVector {
    let values = std::array::from_fn(|i| gamma_tilde.values[i] * factors.sigma[i] + noise_tilde.values[i]);
    StreamVector::new(StreamKind::PostProcessed, values)
}

/// How to realise `H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ChannelModel {
    Identity,
    Diagonal {
        gains: Vec<f64>,
    },
    /// i.i.d. CN(0, 1) entries drawn from `seed`.
    Rayleigh {
        seed: u64,
    },
    /// Explicit matrix.
    Matrix {
        h: Box<ChannelMatrix>,
    },
}

pub fn generate_channel(model: &ChannelModel) -> Result<ChannelMatrix, ChannelError> {
    match model {
        ChannelModel::Identity => Ok(ChannelMatrix(CMatrix4::identity())),
        ChannelModel::Diagonal { gains } => {
            let gains: [f64; DIM] = gains
                .as_slice()
                .try_into()
                .map_err(|_| ChannelError::DiagonalLength(gains.len()))?;
            ChannelMatrix::new(CMatrix4::from_real_diagonal(gains))
        }
        ChannelModel::Rayleigh { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let sd = std::f64::consts::FRAC_1_SQRT_2;
            let mut h = CMatrix4::zeros();
            for i in 0..DIM {
                for j in 0..DIM {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    h[(i, j)] = Complex64::new(re * sd, im * sd);
                }
            }
            Ok(ChannelMatrix(h))
        }
        ChannelModel::Matrix { h } => Ok(**h),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn identity_channel_passthrough() {
        let h = generate_channel(&ChannelModel::Identity).unwrap();
        let gamma = StreamVector::from_real(StreamKind::Transmit, [1.0, 2.0, 3.0, 4.0]);
        let rho = apply_channel(&h, &gamma, &StreamVector::zeros(StreamKind::Noise));
        assert_eq!(rho.values, gamma.values);
        assert_eq!(rho.kind, StreamKind::Receive);
    }

    #[test]
    fn zero_channel_is_pure_noise() {
        let h = ChannelMatrix::new(CMatrix4::zeros()).unwrap();
        let noise = StreamVector::new(
            StreamKind::Noise,
            [Complex64::new(0.1, -0.2), c(0.3), Complex64::new(0.0, 1.0), c(-4.0)],
        );
        let gamma = StreamVector::from_real(StreamKind::Transmit, [5.0, 6.0, 7.0, 8.0]);
        assert_eq!(apply_channel(&h, &gamma, &noise).values, noise.values);
    }

    #[test]
    fn diagonal_channel() {
        let h = generate_channel(&ChannelModel::Diagonal {
            gains: vec![2.0, 1.0, 0.5, 0.1],
        })
        .unwrap();
        let gamma = StreamVector::from_real(StreamKind::Transmit, [1.0; 4]);
        let rho = apply_channel(&h, &gamma, &StreamVector::zeros(StreamKind::Noise));
        assert_eq!(rho.values, [c(2.0), c(1.0), c(0.5), c(0.1)]);
    }

    #[test]
    fn diagonal_wrong_length() {
        assert_eq!(
            generate_channel(&ChannelModel::Diagonal { gains: vec![1.0; 3] }),
            Err(ChannelError::DiagonalLength(3))
        );
    }

    #[test]
    fn rayleigh_is_seeded() {
        let a = generate_channel(&ChannelModel::Rayleigh { seed: 42 }).unwrap();
        let b = generate_channel(&ChannelModel::Rayleigh { seed: 42 }).unwrap();
        let other = generate_channel(&ChannelModel::Rayleigh { seed: 43 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, other);
    }

    #[test]
    fn identity_factors_are_neutral() {
        let h = generate_channel(&ChannelModel::Identity).unwrap();
        let f = svd(&h).unwrap();
        let x = StreamVector::new(
            StreamKind::PrecodedTransmit,
            [Complex64::new(1.0, 2.0), c(-1.0), c(0.0), Complex64::new(0.0, 3.0)],
        );
        assert_eq!(precode(&f, &x).values, x.values);
        let rho = StreamVector::new(StreamKind::Receive, x.values);
        assert_eq!(postprocess(&f, &rho).values, x.values);
    }

    #[test]
    fn basis_vector_selects_v_column() {
        let h = generate_channel(&ChannelModel::Rayleigh { seed: 7 }).unwrap();
        let f = svd(&h).unwrap();
        let mut e1 = StreamVector::zeros(StreamKind::PrecodedTransmit);
        e1.values[0] = c(1.0);
        assert_eq!(precode(&f, &e1).values, f.v.column(0));
    }

    #[test]
    fn eigen_streams_scale_by_sigma() {
        let h = generate_channel(&ChannelModel::Diagonal {
            gains: vec![2.0, 1.0, 0.5, 0.1],
        })
        .unwrap();
        let f = svd(&h).unwrap();
        let ones = StreamVector::from_real(StreamKind::PrecodedTransmit, [1.0; 4]);
        let out = eigen_streams(&f, &ones, &StreamVector::zeros(StreamKind::TransformedNoise));
        assert_eq!(out.values, [c(2.0), c(1.0), c(0.5), c(0.1)]);
    }

    #[test]
    fn dead_stream_carries_only_noise() {
        let h = generate_channel(&ChannelModel::Diagonal {
            gains: vec![1.0, 1.0, 1.0, 0.0],
        })
        .unwrap();
        let f = svd(&h).unwrap();
        assert_eq!(f.rank(STREAM_GAIN_FLOOR), 3);
        let x = StreamVector::from_real(StreamKind::PrecodedTransmit, [1.0; 4]);
        let w = StreamVector::from_real(StreamKind::TransformedNoise, [0.0, 0.0, 0.0, 0.25]);
        assert_eq!(eigen_streams(&f, &x, &w).values[3], c(0.25));
    }

    #[test]
    fn json_roundtrip_and_shape() {
        let h = generate_channel(&ChannelModel::Rayleigh { seed: 3 }).unwrap();
        let text = h.to_json();
        assert!(text.starts_with("[[["));
        assert_eq!(ChannelMatrix::from_json(&text).unwrap(), h);
        assert!(ChannelMatrix::from_json("[[[1,0]]]").is_err());
        assert!(ChannelMatrix::from_pairs(&vec![vec![[1.0, 0.0]; 4]; 3]).is_err());
    }

    #[test]
    fn model_deserialises_from_toml() {
        let m: ChannelModel = toml::from_str("type = \"rayleigh\"\nseed = 9").unwrap();
        assert_eq!(m, ChannelModel::Rayleigh { seed: 9 });
        let m: ChannelModel = toml::from_str("type = \"diagonal\"\ngains = [2.0, 1.0, 0.5, 0.1]").unwrap();
        assert!(matches!(m, ChannelModel::Diagonal { .. }));
    }
}
