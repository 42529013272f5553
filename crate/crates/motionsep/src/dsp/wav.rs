//! RIFF/WAVE PCM16 mono reader and writer.

use super::Waveform;
use crate::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub fn save_wav(path: &Path, w: &Waveform) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let werr = |e| Error::io(path, e);
    let data_len = (w.len() * 2) as u32;
    out.write_all(b"RIFF").map_err(werr)?;
    out.write_all(&(36 + data_len).to_le_bytes()).map_err(werr)?;
    out.write_all(b"WAVE").map_err(werr)?;
    out.write_all(b"fmt ").map_err(werr)?;
    out.write_all(&16u32.to_le_bytes()).map_err(werr)?;
    out.write_all(&1u16.to_le_bytes()).map_err(werr)?; // PCM
    out.write_all(&1u16.to_le_bytes()).map_err(werr)?; // mono
    out.write_all(&w.sample_rate().to_le_bytes()).map_err(werr)?;
    out.write_all(&(w.sample_rate() * 2).to_le_bytes()).map_err(werr)?;
    out.write_all(&2u16.to_le_bytes()).map_err(werr)?; // block align
    out.write_all(&16u16.to_le_bytes()).map_err(werr)?;
    out.write_all(b"data").map_err(werr)?;
    out.write_all(&data_len.to_le_bytes()).map_err(werr)?;
    for &s in w.samples() {
        // Symmetric 2^15 scaling keeps the round trip within 1/32768.
        let q = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.write_all(&q.to_le_bytes()).map_err(werr)?;
    }
    out.flush().map_err(werr)
}

pub fn load_wav(path: &Path) -> Result<Waveform> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let fail = |reason: &str| Error::Wav {
        path: path.to_path_buf(),
        reason: reason.into(),
    };

    let mut head = [0u8; 12];
    r.read_exact(&mut head)
        .map_err(|_| fail("malformed header: file shorter than RIFF preamble"))?;
    if &head[0..4] != b"RIFF" || &head[8..12] != b"WAVE" {
        return Err(fail("malformed header: not a RIFF/WAVE file"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<Vec<u8>> = None;
    loop {
        let mut chunk_head = [0u8; 8];
        match r.read_exact(&mut chunk_head) {
            Ok(()) => {}
            Err(_) => break,
        }
        let id = [chunk_head[0], chunk_head[1], chunk_head[2], chunk_head[3]];
        let size = u32::from_le_bytes(chunk_head[4..8].try_into().unwrap()) as usize;
        let mut body = vec![0u8; size];
        r.read_exact(&mut body)
            .map_err(|_| fail("malformed header: truncated chunk"))?;
        if size % 2 == 1 {
            let mut pad = [0u8; 1];
            let _ = r.read_exact(&mut pad); // RIFF chunks are word-aligned
        }
        match &id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(fail("malformed header: fmt chunk too small"));
                }
                let format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
    }

    let (format, channels, rate, bits) = fmt.ok_or_else(|| fail("missing fmt chunk"))?;
    if format != 1 {
        return Err(fail(&format!("unsupported format tag {format}, want PCM")));
    }
    if channels != 1 {
        return Err(fail(&format!("non-mono: {channels} channels")));
    }
    if bits != 16 {
        return Err(fail(&format!("unsupported bit depth {bits}, want 16")));
    }
    let data = data.ok_or_else(|| fail("missing data chunk"))?;
    if data.len() % 2 != 0 {
        return Err(fail("data chunk length is odd"));
    }
    let samples = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f32 / 32768.0)
        .collect();
    Waveform::new(samples, rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_within_quantization_bound() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = Waveform::new(
            (0..5000).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
            11025,
        )
        .unwrap();
        save_wav(&path, &w).unwrap();
        let back = load_wav(&path).unwrap();
        assert_eq!(back.sample_rate(), 11025);
        assert_eq!(back.len(), w.len());
        let max_err = w
            .samples()
            .iter()
            .zip(back.samples())
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_err <= 1.0 / 32768.0 + 1e-7, "max err {max_err}");
    }

    #[test]
    fn empty_file_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.wav");
        std::fs::write(&path, b"").unwrap();
        let err = load_wav(&path).unwrap_err();
        assert!(err.to_string().contains("malformed header"));
    }

    #[test]
    fn stereo_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        // Minimal stereo header with no samples.
        let mut bytes = Vec::new();
        bytes.extend(b"RIFF");
        bytes.extend(36u32.to_le_bytes());
        bytes.extend(b"WAVE");
        bytes.extend(b"fmt ");
        bytes.extend(16u32.to_le_bytes());
        bytes.extend(1u16.to_le_bytes());
        bytes.extend(2u16.to_le_bytes()); // stereo
        bytes.extend(11025u32.to_le_bytes());
        bytes.extend(44100u32.to_le_bytes());
        bytes.extend(4u16.to_le_bytes());
        bytes.extend(16u16.to_le_bytes());
        bytes.extend(b"data");
        bytes.extend(0u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        let err = load_wav(&path).unwrap_err();
        assert!(err.to_string().contains("non-mono"));
    }

    #[test]
    fn sample_rate_survives_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rate.wav");
        let w = Waveform::new(vec![0.25; 100], 11025).unwrap();
        save_wav(&path, &w).unwrap();
        assert_eq!(load_wav(&path).unwrap().sample_rate(), 11025);
    }
}
