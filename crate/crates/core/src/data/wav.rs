use std::path::Path;

use crate::dsp::{AudioSignal, SAMPLE_RATE};
use crate::{Error, Result};

const PCM: u16 = 1;

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

/// Decode a RIFF/WAVE byte buffer holding 16-bit PCM mono at 24 kHz.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioSignal> {
    if bytes.len() < 12 || &bytes[..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Wav("not a RIFF/WAVE file".into()));
    }
    let mut fmt = None;
    let mut data = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body.checked_add(len).filter(|&e| e <= bytes.len());
        match id {
            b"fmt " => {
                let end = end.ok_or_else(|| Error::Wav("truncated fmt chunk".into()))?;
                if len < 16 {
                    return Err(Error::Wav("fmt chunk too short".into()));
                }
                fmt = Some(&bytes[body..end]);
            }
            // tolerate a data length field that overshoots the file
            b"data" => data = Some(&bytes[body..end.unwrap_or(bytes.len())]),
            _ => {}
        }
        pos = body.saturating_add(len + (len & 1));
    }
    let fmt = fmt.ok_or_else(|| Error::Wav("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Wav("missing data chunk".into()))?;
    let (format, channels, rate, bits) = (u16_at(fmt, 0), u16_at(fmt, 2), u32_at(fmt, 4), u16_at(fmt, 14));
    if format != PCM {
        return Err(Error::Wav(format!("unsupported format tag {format}, expected PCM")));
    }
    if channels != 1 {
        return Err(Error::Wav(format!("{channels} channels, expected mono")));
    }
    if rate != SAMPLE_RATE {
        return Err(Error::Wav(format!("sample rate {rate} Hz, expected {SAMPLE_RATE} Hz")));
    }
    if bits != 16 {
        return Err(Error::Wav(format!("{bits}-bit samples, expected 16-bit")));
    }
    let samples = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect();
    AudioSignal::new(samples, rate)
}

/// Encode as 16-bit PCM mono, clipping to the representable range.
pub fn encode_wav(signal: &AudioSignal) -> Vec<u8> {
    let n = signal.len();
    let rate = signal.sample_rate();
    let mut out = Vec::with_capacity(44 + 2 * n);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + 2 * n as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(2 * n as u32).to_le_bytes());
    for &v in signal.samples() {
        let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn load_wav(path: &Path) -> Result<AudioSignal> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes).map_err(|e| match e {
        Error::Wav(msg) => Error::Wav(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn save_wav(path: &Path, signal: &AudioSignal) -> Result<()> {
    std::fs::write(path, encode_wav(signal)).map_err(|e| Error::io(path, e))
}
