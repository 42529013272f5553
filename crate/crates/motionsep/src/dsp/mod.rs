//! Time-frequency transforms, masks, and waveform I/O.
//!
//! The canonical analysis setup is a 1022-sample frame with a 172-sample hop
//! at 11025 Hz, Hann-windowed, no center padding. Reconstruction is
//! squared-window overlap-add, exact on the interior wherever the window
//! energy is nonzero.

mod container;
mod wav;

pub use container::{load_spectrogram, save_spectrogram};
pub use wav::{load_wav, save_wav};

use crate::{Error, Result};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::cell::RefCell;
use std::sync::Arc;

/// Default analysis frame length in samples.
pub const DEFAULT_FRAME_SIZE: usize = 1022;
/// Default hop between frames in samples.
pub const DEFAULT_HOP_SIZE: usize = 172;
/// Canonical audio sample rate in Hz.
pub const DEFAULT_SAMPLE_RATE: u32 = 11025;
/// Default soft-mask binarization threshold.
pub const DEFAULT_MASK_THRESHOLD: f32 = 0.5;

/// Mono audio signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidWaveform("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidWaveform("non-finite sample".into()));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Waveform {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let e: f64 = self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
        (e / self.samples.len() as f64).sqrt()
    }
}

/// Complex STFT grid, indexed `[bin][frame]` row-major over bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    bins: Vec<Complex<f32>>,
    freq_bins: usize,
    frames: usize,
    frame_size: usize,
    hop_size: usize,
    sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn new(
        bins: Vec<Complex<f32>>,
        freq_bins: usize,
        frames: usize,
        frame_size: usize,
        hop_size: usize,
        sample_rate: u32,
    ) -> Result<Self> {
        if bins.len() != freq_bins * frames {
            return Err(Error::ShapeMismatch(format!(
                "spectrogram data {} vs {}×{}",
                bins.len(),
                freq_bins,
                frames
            )));
        }
        if freq_bins != frame_size / 2 + 1 {
            return Err(Error::ShapeMismatch(format!(
                "freq bins {} but frame {} implies {}",
                freq_bins,
                frame_size,
                frame_size / 2 + 1
            )));
        }
        Ok(ComplexSpectrogram {
            bins,
            freq_bins,
            frames,
            frame_size,
            hop_size,
            sample_rate,
        })
    }

    pub fn freq_bins(&self) -> usize {
        self.freq_bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn frame_size(&self) -> usize {
        self.frame_size
    }

    pub fn hop_size(&self) -> usize {
        self.hop_size
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn bins(&self) -> &[Complex<f32>] {
        &self.bins
    }

    pub fn bin(&self, f: usize, t: usize) -> Complex<f32> {
        self.bins[f * self.frames + t]
    }

    /// Elementwise sum; shapes and metadata must agree.
    pub fn add(&self, other: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
        if self.freq_bins != other.freq_bins
            || self.frames != other.frames
            || self.frame_size != other.frame_size
            || self.hop_size != other.hop_size
        {
            return Err(Error::ShapeMismatch("spectrogram sum".into()));
        }
        let bins = self
            .bins
            .iter()
            .zip(&other.bins)
            .map(|(a, b)| a + b)
            .collect();
        Ok(ComplexSpectrogram {
            bins,
            ..self.clone()
        })
    }
}

/// Non-negative magnitude grid with the same layout as its complex source.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    bins: Vec<f32>,
    freq_bins: usize,
    frames: usize,
    frame_size: usize,
    hop_size: usize,
    sample_rate: u32,
}

impl MagnitudeSpectrogram {
    pub fn freq_bins(&self) -> usize {
        self.freq_bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn frame_size(&self) -> usize {
        self.frame_size
    }

    pub fn hop_size(&self) -> usize {
        self.hop_size
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn bins(&self) -> &[f32] {
        &self.bins
    }

    pub fn bin(&self, f: usize, t: usize) -> f32 {
        self.bins[f * self.frames + t]
    }
}

/// Per-bin {0, 1} indicator, same layout as its companion spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    bins: Vec<u8>,
    freq_bins: usize,
    frames: usize,
}

impl BinaryMask {
    pub fn new(bins: Vec<u8>, freq_bins: usize, frames: usize) -> Result<Self> {
        if bins.len() != freq_bins * frames {
            return Err(Error::ShapeMismatch(format!(
                "mask data {} vs {}×{}",
                bins.len(),
                freq_bins,
                frames
            )));
        }
        if bins.iter().any(|&b| b > 1) {
            return Err(Error::InvalidMask("values outside {0, 1}".into()));
        }
        Ok(BinaryMask {
            bins,
            freq_bins,
            frames,
        })
    }

    pub fn ones(freq_bins: usize, frames: usize) -> Self {
        BinaryMask {
            bins: vec![1; freq_bins * frames],
            freq_bins,
            frames,
        }
    }

    pub fn freq_bins(&self) -> usize {
        self.freq_bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> &[u8] {
        &self.bins
    }

    pub fn get(&self, f: usize, t: usize) -> u8 {
        self.bins[f * self.frames + t]
    }
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f32> {
    (0..len)
        .map(|n| {
            let phase = 2.0 * std::f64::consts::PI * n as f64 / len as f64;
            (0.5 - 0.5 * phase.cos()) as f32
        })
        .collect()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f32>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn rustfft::Fft<f32>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Short-time Fourier transform; no center padding, trailing remainder
/// samples are dropped.
pub fn stft(
    w: &Waveform,
    frame_size: usize,
    hop_size: usize,
    window: &[f32],
) -> Result<ComplexSpectrogram> {
    if w.len() < frame_size {
        return Err(Error::InputTooShort {
            got: w.len(),
            need: frame_size,
        });
    }
    if hop_size == 0 {
        return Err(Error::ShapeMismatch("hop size must be positive".into()));
    }
    if window.len() != frame_size {
        return Err(Error::ShapeMismatch(format!(
            "window length {} vs frame size {}",
            window.len(),
            frame_size
        )));
    }
    let freq_bins = frame_size / 2 + 1;
    let frames = (w.len() - frame_size) / hop_size + 1;
    let fft = plan(frame_size, false);
    let mut bins = vec![Complex::new(0.0f32, 0.0); freq_bins * frames];
    let mut buf = vec![Complex::new(0.0f32, 0.0); frame_size];
    for t in 0..frames {
        let start = t * hop_size;
        for (n, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(w.samples[start + n] * window[n], 0.0);
        }
        fft.process(&mut buf);
        for f in 0..freq_bins {
            bins[f * frames + t] = buf[f];
        }
    }
    ComplexSpectrogram::new(bins, freq_bins, frames, frame_size, hop_size, w.sample_rate)
}

/// Convenience: canonical parameters with a Hann window.
pub fn stft_default(w: &Waveform) -> Result<ComplexSpectrogram> {
    let window = hann_window(DEFAULT_FRAME_SIZE);
    stft(w, DEFAULT_FRAME_SIZE, DEFAULT_HOP_SIZE, &window)
}

/// Inverse STFT by squared-window overlap-add. Output has
/// `(frames − 1)·hop + frame_size` samples; positions with no window energy
/// come back as silence.
pub fn istft(s: &ComplexSpectrogram, window: &[f32]) -> Result<Waveform> {
    if s.hop_size > s.frame_size {
        return Err(Error::WindowOverlapViolated {
            hop: s.hop_size,
            frame: s.frame_size,
        });
    }
    if window.len() != s.frame_size {
        return Err(Error::ShapeMismatch(format!(
            "window length {} vs frame size {}",
            window.len(),
            s.frame_size
        )));
    }
    let n = s.frame_size;
    let out_len = (s.frames - 1) * s.hop_size + n;
    let fft = plan(n, true);
    let mut acc = vec![0.0f64; out_len];
    let mut den = vec![0.0f64; out_len];
    let mut buf = vec![Complex::new(0.0f32, 0.0); n];
    let scale = 1.0 / n as f32;
    for t in 0..s.frames {
        for f in 0..s.freq_bins {
            buf[f] = s.bins[f * s.frames + t];
        }
        // Hermitian completion of the upper half.
        for f in s.freq_bins..n {
            buf[f] = s.bins[(n - f) * s.frames + t].conj();
        }
        fft.process(&mut buf);
        let start = t * s.hop_size;
        for i in 0..n {
            let v = buf[i].re * scale;
            acc[start + i] += (window[i] * v) as f64;
            den[start + i] += (window[i] * window[i]) as f64;
        }
    }
    let samples = acc
        .iter()
        .zip(&den)
        .map(|(&a, &d)| if d > 1e-10 { (a / d) as f32 } else { 0.0 })
        .collect();
    Waveform::new(samples, s.sample_rate)
}

/// Elementwise complex modulus.
pub fn magnitude(s: &ComplexSpectrogram) -> MagnitudeSpectrogram {
    MagnitudeSpectrogram {
        bins: s.bins.iter().map(|c| c.norm()).collect(),
        freq_bins: s.freq_bins,
        frames: s.frames,
        frame_size: s.frame_size,
        hop_size: s.hop_size,
        sample_rate: s.sample_rate,
    }
}

/// Ideal binary masks: source `n` claims a bin iff its magnitude is ≥ every
/// other source there, so ties set the bin in every tying mask.
pub fn ideal_binary_mask(sources: &[MagnitudeSpectrogram]) -> Result<Vec<BinaryMask>> {
    if sources.len() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "ideal_binary_mask needs at least 2 sources, got {}",
            sources.len()
        )));
    }
    let (fb, fr) = (sources[0].freq_bins, sources[0].frames);
    for s in sources {
        if s.freq_bins != fb || s.frames != fr {
            return Err(Error::ShapeMismatch(format!(
                "source grids disagree: {}×{} vs {}×{}",
                s.freq_bins, s.frames, fb, fr
            )));
        }
    }
    let numel = fb * fr;
    let mut max = vec![f32::NEG_INFINITY; numel];
    for s in sources {
        for (m, &v) in max.iter_mut().zip(&s.bins) {
            if v > *m {
                *m = v;
            }
        }
    }
    Ok(sources
        .iter()
        .map(|s| BinaryMask {
            bins: s
                .bins
                .iter()
                .zip(&max)
                .map(|(&v, &m)| u8::from(v >= m))
                .collect(),
            freq_bins: fb,
            frames: fr,
        })
        .collect())
}

/// Keep masked bins of the mixture; the mixture phase rides along unchanged.
pub fn apply_mask(mix: &ComplexSpectrogram, m: &BinaryMask) -> Result<ComplexSpectrogram> {
    if mix.freq_bins != m.freq_bins || mix.frames != m.frames {
        return Err(Error::ShapeMismatch(format!(
            "mask {}×{} vs spectrogram {}×{}",
            m.freq_bins, m.frames, mix.freq_bins, mix.frames
        )));
    }
    let bins = mix
        .bins
        .iter()
        .zip(&m.bins)
        .map(|(&c, &b)| if b == 1 { c } else { Complex::new(0.0, 0.0) })
        .collect();
    Ok(ComplexSpectrogram {
        bins,
        ..mix.clone()
    })
}

/// Binarize a soft mask at `theta`; a value equal to the threshold passes.
pub fn threshold_mask(
    soft: &[f32],
    freq_bins: usize,
    frames: usize,
    theta: f32,
) -> Result<BinaryMask> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidThreshold(theta as f64));
    }
    if soft.len() != freq_bins * frames {
        return Err(Error::ShapeMismatch(format!(
            "soft mask data {} vs {}×{}",
            soft.len(),
            freq_bins,
            frames
        )));
    }
    Ok(BinaryMask {
        bins: soft.iter().map(|&v| u8::from(v >= theta)).collect(),
        freq_bins,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new(
            (0..len).map(|_| rng.gen_range(-0.8f32..0.8)).collect(),
            DEFAULT_SAMPLE_RATE,
        )
        .unwrap()
    }

    fn snr_db(reference: &[f32], estimate: &[f32]) -> f64 {
        let num: f64 = reference.iter().map(|&v| (v as f64).powi(2)).sum();
        let den: f64 = reference
            .iter()
            .zip(estimate)
            .map(|(&r, &e)| ((r - e) as f64).powi(2))
            .sum();
        10.0 * (num / den.max(1e-300)).log10()
    }

    #[test]
    fn paper_frame_layout() {
        let w = noise(33075, 1);
        let s = stft_default(&w).unwrap();
        assert_eq!(s.freq_bins(), 512);
        assert_eq!(s.frames(), 187);
    }

    #[test]
    fn too_short_input_is_rejected() {
        let w = noise(1000, 2);
        let window = hann_window(DEFAULT_FRAME_SIZE);
        let err = stft(&w, DEFAULT_FRAME_SIZE, DEFAULT_HOP_SIZE, &window).unwrap_err();
        assert!(err.to_string().contains("input too short"));
    }

    #[test]
    fn zero_waveform_gives_zero_spectrogram() {
        let w = Waveform::silence(4000, DEFAULT_SAMPLE_RATE);
        let window = hann_window(256);
        let s = stft(&w, 256, 64, &window).unwrap();
        assert!(s.bins().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn sine_at_bin_center_matches_naive_dft() {
        // Bin 32 of a 256-sample frame at 11025 Hz.
        let frame = 256;
        let bin = 32;
        let freq = bin as f64 * DEFAULT_SAMPLE_RATE as f64 / frame as f64;
        let samples: Vec<f32> = (0..2048)
            .map(|i| {
                (2.0 * std::f64::consts::PI * freq * i as f64 / DEFAULT_SAMPLE_RATE as f64).sin()
                    as f32
            })
            .collect();
        let w = Waveform::new(samples.clone(), DEFAULT_SAMPLE_RATE).unwrap();
        let window = hann_window(frame);
        let s = stft(&w, frame, 64, &window).unwrap();

        // Energy concentration: the target bin dominates each column.
        for t in 0..s.frames() {
            let target = s.bin(bin, t).norm();
            let total: f32 = (0..s.freq_bins()).map(|f| s.bin(f, t).norm()).sum();
            assert!(target > 0.4 * total, "frame {t}: {target} of {total}");
        }

        // Naive per-frame DFT oracle, f64.
        for t in [0, 7, s.frames() - 1] {
            for f in [0, bin - 1, bin, bin + 1, 100] {
                let mut re = 0.0f64;
                let mut im = 0.0f64;
                for n in 0..frame {
                    let v = samples[t * 64 + n] as f64 * window[n] as f64;
                    let ang = -2.0 * std::f64::consts::PI * (f * n) as f64 / frame as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                let got = s.bin(f, t);
                assert!(
                    (got.re as f64 - re).abs() < 1e-3 && (got.im as f64 - im).abs() < 1e-3,
                    "bin ({f},{t}): got {got}, oracle {re}+{im}i"
                );
            }
        }
    }

    #[test]
    fn roundtrip_snr_exceeds_40db_interior() {
        let w = noise(33075, 3);
        let window = hann_window(DEFAULT_FRAME_SIZE);
        let s = stft_default(&w).unwrap();
        let y = istft(&s, &window).unwrap();
        let lo = DEFAULT_FRAME_SIZE;
        let hi = y.len() - DEFAULT_FRAME_SIZE;
        let snr = snr_db(&w.samples()[lo..hi], &y.samples()[lo..hi]);
        assert!(snr > 40.0, "interior SNR {snr} dB");
    }

    #[test]
    fn istft_rejects_hop_beyond_frame() {
        let s = ComplexSpectrogram::new(
            vec![Complex::new(0.0, 0.0); 129 * 3],
            129,
            3,
            256,
            300,
            DEFAULT_SAMPLE_RATE,
        )
        .unwrap();
        let err = istft(&s, &hann_window(256)).unwrap_err();
        assert!(err.to_string().contains("window overlap violated"));
    }

    #[test]
    fn zero_spectrogram_reconstructs_silence() {
        let s = ComplexSpectrogram::new(
            vec![Complex::new(0.0, 0.0); 129 * 5],
            129,
            5,
            256,
            64,
            DEFAULT_SAMPLE_RATE,
        )
        .unwrap();
        let y = istft(&s, &hann_window(256)).unwrap();
        assert!(y.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_frame_reproduces_windowed_content() {
        // One frame exactly: istft(stft(x)) returns x wherever the window
        // carries energy.
        let frame = 256;
        let w = noise(frame, 4);
        let window = hann_window(frame);
        let s = stft(&w, frame, 64, &window).unwrap();
        assert_eq!(s.frames(), 1);
        let y = istft(&s, &window).unwrap();
        for n in 0..frame {
            if window[n] > 1e-3 {
                assert!(
                    (y.samples()[n] - w.samples()[n]).abs() < 1e-4,
                    "sample {n}: {} vs {}",
                    y.samples()[n],
                    w.samples()[n]
                );
            }
        }
    }

    #[test]
    fn magnitude_of_3_4_is_5() {
        let s = ComplexSpectrogram::new(
            vec![Complex::new(3.0, 4.0), Complex::new(0.0, 0.0)],
            1,
            2,
            1,
            1,
            DEFAULT_SAMPLE_RATE,
        );
        // frame_size 1 gives freq_bins 1 via 1/2+1 = 1.
        let s = s.unwrap();
        let m = magnitude(&s);
        assert_eq!(m.bins(), &[5.0, 0.0]);
    }

    fn mag_grid(bins: Vec<f32>, fb: usize, fr: usize) -> MagnitudeSpectrogram {
        MagnitudeSpectrogram {
            bins,
            freq_bins: fb,
            frames: fr,
            frame_size: (fb - 1) * 2,
            hop_size: 1,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }

    #[test]
    fn dominance_and_ties() {
        let s1 = mag_grid(vec![0.7], 1, 1);
        let s2 = mag_grid(vec![0.3], 1, 1);
        let m = ideal_binary_mask(&[s1, s2]).unwrap();
        assert_eq!((m[0].get(0, 0), m[1].get(0, 0)), (1, 0));

        let s1 = mag_grid(vec![0.5], 1, 1);
        let s2 = mag_grid(vec![0.5], 1, 1);
        let m = ideal_binary_mask(&[s1, s2]).unwrap();
        assert_eq!((m[0].get(0, 0), m[1].get(0, 0)), (1, 1));
    }

    #[test]
    fn random_masks_match_per_bin_comparison_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f32> = (0..16).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f32> = (0..16).map(|_| rng.gen_range(0.0..1.0)).collect();
        let masks =
            ideal_binary_mask(&[mag_grid(a.clone(), 4, 4), mag_grid(b.clone(), 4, 4)]).unwrap();
        for i in 0..16 {
            assert_eq!(masks[0].bins()[i], u8::from(a[i] >= b[i]));
            assert_eq!(masks[1].bins()[i], u8::from(b[i] >= a[i]));
        }
    }

    #[test]
    fn mask_shape_mismatch_is_rejected() {
        let s1 = mag_grid(vec![0.0; 4], 2, 2);
        let s2 = mag_grid(vec![0.0; 6], 2, 3);
        assert!(ideal_binary_mask(&[s1, s2]).is_err());
    }

    #[test]
    fn apply_mask_identity_and_silence() {
        let w = noise(2048, 6);
        let window = hann_window(256);
        let s = stft(&w, 256, 64, &window).unwrap();
        let ones = BinaryMask::ones(s.freq_bins(), s.frames());
        assert_eq!(apply_mask(&s, &ones).unwrap(), s);
        let zeros = BinaryMask::new(
            vec![0; s.freq_bins() * s.frames()],
            s.freq_bins(),
            s.frames(),
        )
        .unwrap();
        let silent = apply_mask(&s, &zeros).unwrap();
        assert!(silent.bins().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn checkerboard_mask_matches_elementwise_oracle() {
        let w = noise(2048, 7);
        let window = hann_window(256);
        let s = stft(&w, 256, 64, &window).unwrap();
        let bits: Vec<u8> = (0..s.freq_bins() * s.frames())
            .map(|i| (i % 2) as u8)
            .collect();
        let m = BinaryMask::new(bits.clone(), s.freq_bins(), s.frames()).unwrap();
        let out = apply_mask(&s, &m).unwrap();
        for (i, c) in out.bins().iter().enumerate() {
            let want = if bits[i] == 1 {
                s.bins()[i]
            } else {
                Complex::new(0.0, 0.0)
            };
            assert_eq!(*c, want);
        }
    }

    #[test]
    fn threshold_boundary_convention() {
        let m = threshold_mask(&[0.5, 0.49], 1, 2, 0.5).unwrap();
        assert_eq!(m.bins(), &[1, 0]);
        assert!(threshold_mask(&[0.5], 1, 1, 0.0).is_err());
        assert!(threshold_mask(&[0.5], 1, 1, 1.0).is_err());
    }

    #[test]
    fn threshold_random_grid_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let soft: Vec<f32> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
        let m = threshold_mask(&soft, 8, 8, 0.3).unwrap();
        for (got, &s) in m.bins().iter().zip(&soft) {
            assert_eq!(*got, u8::from(s >= 0.3));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// On strict-inequality bins exactly one mask fires; strictly the
        /// union always covers every bin.
        #[test]
        fn mask_partition_property(values in proptest::collection::vec(0.0f32..1.0, 24)) {
            let a = mag_grid(values[..12].to_vec(), 3, 4);
            let b = mag_grid(values[12..].to_vec(), 3, 4);
            let masks = ideal_binary_mask(&[a.clone(), b.clone()]).unwrap();
            for i in 0..12 {
                let fires = masks[0].bins()[i] + masks[1].bins()[i];
                prop_assert!(fires >= 1);
                if a.bins()[i] != b.bins()[i] {
                    prop_assert_eq!(fires, 1);
                }
            }
        }

        /// STFT is linear within float tolerance.
        #[test]
        fn stft_linearity(seed_a in 0u64..1000, seed_b in 0u64..1000) {
            let a = noise(1024, seed_a);
            let b = noise(1024, seed_b.wrapping_add(7777));
            let sum = Waveform::new(
                a.samples().iter().zip(b.samples()).map(|(&x, &y)| x + y).collect(),
                DEFAULT_SAMPLE_RATE,
            ).unwrap();
            let window = hann_window(256);
            let sa = stft(&a, 256, 64, &window).unwrap();
            let sb = stft(&b, 256, 64, &window).unwrap();
            let ss = stft(&sum, 256, 64, &window).unwrap();
            let direct = sa.add(&sb).unwrap();
            let scale: f32 = ss.bins().iter().map(|c| c.norm()).fold(1.0, f32::max);
            for (x, y) in ss.bins().iter().zip(direct.bins()) {
                prop_assert!((x - y).norm() <= 1e-5 * scale);
            }
        }
    }
}
