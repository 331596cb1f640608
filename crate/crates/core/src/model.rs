//! Constellations, bit mapping, channel and noise generation, and the
//! complex-to-real system transform.
//!
//! Conventions fixed here and used everywhere else:
//! - Real stacking order is [Re; Im] for vectors, matching the block channel
//!   expansion [[Re, −Im], [Im, Re]].
//! - Gray bit mapping with the all-zero group on the most negative amplitude
//!   and lexicographic (most significant first) bit order.
//! - SNR is received SNR per BS antenna: σ_v² = N_t · 10^(−SNR/10), with
//!   σ_r² = σ_v²/2 per real noise component.

use crate::mat::{real_expansion, CMat, RMat};
use crate::Error;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// Square-QAM constellation described per real dimension.
///
/// `alphabet` holds the √M amplitudes in ascending order; a complex symbol is
/// a pair of independent amplitudes. `gamma` normalizes the average complex
/// symbol energy to one, and `l = (√M − 1)/gamma` is the box bound of the
/// relaxed detection problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub m: u32,
    pub gamma: f64,
    pub alphabet: Vec<f64>,
    pub l: f64,
    pub bits_per_real_dim: u32,
}

impl Constellation {
    /// Nearest alphabet amplitude; exact midpoint ties go to the more
    /// negative amplitude (ascending scan with strict improvement).
    pub fn nearest(&self, v: f64) -> f64 {
        self.alphabet[self.nearest_index(v)]
    }

    pub fn nearest_index(&self, v: f64) -> usize {
        let mut best = 0;
        let mut best_d = (v - self.alphabet[0]).abs();
        for (i, &a) in self.alphabet.iter().enumerate().skip(1) {
            let d = (v - a).abs();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

/// Builds the supported square-QAM constellations (M = 4 or 16).
pub fn build_constellation(m: u32) -> Result<Constellation, Error> {
    let side: u32 = match m {
        4 => 2,
        16 => 4,
        _ => return Err(Error::UnsupportedModulation(m)),
    };
    // Amplitudes are the odd integers {±1, ±3, …} scaled so the average
    // complex-symbol energy E|x̃|² = 2·mean(a²) equals one.
    let odd: Vec<f64> = (0..side).map(|j| 2.0 * j as f64 - (side as f64 - 1.0)).collect();
    let mean_sq = odd.iter().map(|a| a * a).sum::<f64>() / side as f64;
    let gamma = (2.0 * mean_sq).sqrt();
    let alphabet: Vec<f64> = odd.iter().map(|a| a / gamma).collect();
    let l = *alphabet.last().unwrap();
    Ok(Constellation { m, gamma, alphabet, l, bits_per_real_dim: side.trailing_zeros() })
}

fn gray_encode(index: u32) -> u32 {
    index ^ (index >> 1)
}

fn gray_decode(mut g: u32) -> u32 {
    let mut b = 0;
    while g != 0 {
        b ^= g;
        g >>= 1;
    }
    b
}

/// Maps a bit vector onto the length-2N_t real symbol vector.
///
/// Consecutive groups of `bits_per_real_dim` bits fill the output in order,
/// so the first N_t groups are in-phase and the last N_t are quadrature
/// components.
pub fn modulate(bits: &[u8], c: &Constellation, n_t: usize) -> Result<Vec<f64>, Error> {
    let bprd = c.bits_per_real_dim as usize;
    let want = 2 * n_t * bprd;
    if bits.len() != want {
        return Err(Error::BitLengthMismatch { got: bits.len(), want });
    }
    if let Some(bad) = bits.iter().position(|&b| b > 1) {
        return Err(Error::NonBinaryBit(bad));
    }
    let mut out = Vec::with_capacity(2 * n_t);
    for group in bits.chunks_exact(bprd) {
        let g = group.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
        out.push(c.alphabet[gray_decode(g) as usize]);
    }
    Ok(out)
}

/// Inverse of [`modulate`] for alphabet-valued (or near-alphabet) vectors;
/// each entry is sliced to the nearest amplitude and Gray-encoded back.
pub fn demodulate(x: &[f64], c: &Constellation) -> Vec<u8> {
    let bprd = c.bits_per_real_dim;
    let mut bits = Vec::with_capacity(x.len() * bprd as usize);
    for &v in x {
        let g = gray_encode(c.nearest_index(v) as u32);
        for shift in (0..bprd).rev() {
            bits.push(((g >> shift) & 1) as u8);
        }
    }
    bits
}

/// Deterministic per-trial random stream.
///
/// The same (seed, stream_id) pair reproduces the same draws regardless of
/// scheduling or worker count. Within a trial the draw order is fixed:
/// bits, then channel, then noise.
#[derive(Debug, Clone)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn bit(&mut self) -> u8 {
        self.rng.random::<bool>() as u8
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn normal(&mut self, std: f64) -> f64 {
        std * self.standard_normal()
    }
}

/// One channel/symbol/noise realization in both complex and real form.
///
/// `y_real = h_real · x_true_real + v_real` holds exactly by construction,
/// and every entry of `x_true_real` is an alphabet amplitude.
#[derive(Debug, Clone)]
pub struct MimoSystem {
    pub n_t: usize,
    pub n_r: usize,
    pub h_complex: CMat,
    pub h_real: RMat,
    pub x_true_real: Vec<f64>,
    pub y_real: Vec<f64>,
    pub noise_var_complex: f64,
    pub snr_db: f64,
}

impl MimoSystem {
    /// Assembles a system from explicit parts; the received vector is formed
    /// as h_real·x_true_real + v_real so the model identity holds exactly.
    pub fn from_parts(
        h_complex: CMat,
        x_true_real: Vec<f64>,
        v_real: Vec<f64>,
        noise_var_complex: f64,
        snr_db: f64,
    ) -> Result<Self, Error> {
        let (n_r, n_t) = (h_complex.rows(), h_complex.cols());
        if x_true_real.len() != 2 * n_t {
            return Err(Error::LengthMismatch { got: x_true_real.len(), want: 2 * n_t });
        }
        if v_real.len() != 2 * n_r {
            return Err(Error::LengthMismatch { got: v_real.len(), want: 2 * n_r });
        }
        let h_real = real_expansion(&h_complex);
        let mut y_real = h_real.matvec(&x_true_real);
        for (yk, vk) in y_real.iter_mut().zip(&v_real) {
            *yk += vk;
        }
        Ok(Self { n_t, n_r, h_complex, h_real, x_true_real, y_real, noise_var_complex, snr_db })
    }
}

/// Draws an i.i.d. CN(0,1) channel (real and imaginary parts each N(0, 1/2))
/// and returns it with its real block expansion.
pub fn generate_channel(n_t: usize, n_r: usize, rng: &mut RngStream) -> Result<(CMat, RMat), Error> {
    if n_t == 0 || n_r == 0 {
        return Err(Error::InvalidConfig("n_t and n_r must be at least 1".into()));
    }
    let std = std::f64::consts::FRAC_1_SQRT_2;
    let mut h = CMat::zeros(n_r, n_t);
    for c in 0..n_t {
        for r in 0..n_r {
            let re = rng.normal(std);
            let im = rng.normal(std);
            h.set(r, c, Complex64::new(re, im));
        }
    }
    let hr = real_expansion(&h);
    Ok((h, hr))
}

/// Received SNR per BS antenna: σ_v² = N_t·10^(−SNR/10) for the complex
/// noise, σ_r² = σ_v²/2 per real component. An infinite SNR yields zero
/// noise.
pub fn snr_to_noise_variance(snr_db: f64, n_t: usize) -> (f64, f64) {
    let sigma_v_sq = n_t as f64 * 10f64.powf(-snr_db / 10.0);
    (sigma_v_sq, sigma_v_sq / 2.0)
}

/// Draws bits, modulates, draws channel and noise, and forms the received
/// vector.
pub fn realize_system(
    n_t: usize,
    n_r: usize,
    c: &Constellation,
    snr_db: f64,
    rng: &mut RngStream,
) -> Result<MimoSystem, Error> {
    let bprd = c.bits_per_real_dim as usize;
    let bits: Vec<u8> = (0..2 * n_t * bprd).map(|_| rng.bit()).collect();
    let x_true_real = modulate(&bits, c, n_t)?;
    let (h_complex, h_real) = generate_channel(n_t, n_r, rng)?;
    let (noise_var_complex, sigma_r_sq) = snr_to_noise_variance(snr_db, n_t);
    let std = sigma_r_sq.sqrt();
    let mut y_real = h_real.matvec(&x_true_real);
    for yk in y_real.iter_mut() {
        *yk += rng.normal(std);
    }
    Ok(MimoSystem { n_t, n_r, h_complex, h_real, x_true_real, y_real, noise_var_complex, snr_db })
}
