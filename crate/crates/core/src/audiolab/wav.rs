use std::io::Cursor;
use std::path::Path;

use super::AudioBuffer;
use crate::error::{Error, IoContext, Result};

const PCM16_SCALE: f32 = 32767.0;

fn spec_for(buf: &AudioBuffer) -> hound::WavSpec {
    hound::WavSpec {
        channels: buf.channels(),
        sample_rate: buf.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

fn to_pcm16(s: f32) -> i16 {
    (s * PCM16_SCALE + 0.5).floor().clamp(-32768.0, 32767.0) as i16
}

/// RIFF/PCM16 bytes for `buf`.
pub fn encode_wav(buf: &AudioBuffer) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::with_capacity(44 + buf.samples().len() * 2));
    {
        let mut w = hound::WavWriter::new(&mut out, spec_for(buf))?;
        let mut w16 = w.get_i16_writer(buf.samples().len() as u32);
        for &s in buf.samples() {
            w16.write_sample(to_pcm16(s));
        }
        w16.flush()?;
        w.finalize()?;
    }
    Ok(out.into_inner())
}

pub fn write_wav(buf: &AudioBuffer, path: &Path) -> Result<()> {
    let bytes = encode_wav(buf)?;
    std::fs::write(path, bytes).at(path)
}

/// Decodes integer PCM (8 to 32 bit) or 32-bit float WAV into normalized
/// samples.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    let mut reader = hound::WavReader::new(Cursor::new(bytes))?;
    let spec = reader.spec();
    let samples: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().collect::<Result<_, _>>()?,
        hound::SampleFormat::Int => {
            // Symmetric scale so PCM written by `encode_wav` decodes and
            // re-encodes to the same integers.
            let full_scale = ((1i64 << (spec.bits_per_sample - 1)) - 1) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 / full_scale))
                .collect::<Result<_, _>>()?
        }
    };
    if spec.channels > 2 {
        return Err(Error::invalid(format!(
            "{}-channel audio is not supported",
            spec.channels
        )));
    }
    AudioBuffer::new(spec.sample_rate, spec.channels, samples)
}

pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let bytes = std::fs::read(path).at(path)?;
    decode_wav(&bytes).map_err(|e| match e {
        Error::Wav(w) => Error::invalid(format!("{}: not a readable WAV file ({w})", path.display())),
        other => other,
    })
}
