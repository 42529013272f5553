//! Flat binary spectrogram container.
//!
//! Layout, little-endian: magic `SPC1`, then F, T, frame, hop, rate as u32,
//! then F·T complex pairs as f32, row-major over F then T.

use super::ComplexSpectrogram;
use crate::{Error, Result};
use rustfft::num_complex::Complex;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"SPC1";

pub fn save_spectrogram(path: &Path, s: &ComplexSpectrogram) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let werr = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(werr)?;
    for v in [
        s.freq_bins() as u32,
        s.frames() as u32,
        s.frame_size() as u32,
        s.hop_size() as u32,
        s.sample_rate(),
    ] {
        w.write_all(&v.to_le_bytes()).map_err(werr)?;
    }
    for c in s.bins() {
        w.write_all(&c.re.to_le_bytes()).map_err(werr)?;
        w.write_all(&c.im.to_le_bytes()).map_err(werr)?;
    }
    w.flush().map_err(werr)
}

pub fn load_spectrogram(path: &Path) -> Result<ComplexSpectrogram> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let fail = |reason: String| Error::Container {
        path: path.to_path_buf(),
        reason,
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| fail("truncated magic".into()))?;
    if &magic != MAGIC {
        return Err(fail("bad magic, expected SPC1".into()));
    }
    let mut u32s = [0u32; 5];
    for v in &mut u32s {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)
            .map_err(|_| fail("truncated header".into()))?;
        *v = u32::from_le_bytes(b);
    }
    let [f, t, frame, hop, rate] = u32s;
    let numel = f as usize * t as usize;
    let mut bins = Vec::with_capacity(numel);
    let mut b = [0u8; 8];
    for _ in 0..numel {
        r.read_exact(&mut b)
            .map_err(|_| fail("truncated payload".into()))?;
        bins.push(Complex::new(
            f32::from_le_bytes(b[0..4].try_into().unwrap()),
            f32::from_le_bytes(b[4..8].try_into().unwrap()),
        ));
    }
    ComplexSpectrogram::new(
        bins,
        f as usize,
        t as usize,
        frame as usize,
        hop as usize,
        rate,
    )
}

#[cfg(test)]
mod tests {
    use super::super::{hann_window, stft, Waveform};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.spc");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = Waveform::new(
            (0..2000).map(|_| rng.gen_range(-0.5f32..0.5)).collect(),
            11025,
        )
        .unwrap();
        let s = stft(&w, 256, 64, &hann_window(256)).unwrap();
        save_spectrogram(&path, &s).unwrap();
        let back = load_spectrogram(&path).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.spc");
        std::fs::write(&path, b"NOPExxxxxxxxxxxxxxxxxxxx").unwrap();
        assert!(load_spectrogram(&path).is_err());
    }
}
