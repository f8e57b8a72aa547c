//! Mono WAV input and 16-bit PCM output.

use std::io::{Read, Seek, Write};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::stft::AudioBuffer;

fn decode<R: Read>(reader: WavReader<R>) -> Result<AudioBuffer<f64>> {
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat(format!("{} channels, expected mono", spec.channels)));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ 8..=32) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader.into_samples::<i32>().map(|s| s.map(|v| v as f64 * scale)).collect::<std::result::Result<_, _>>()?
        }
        (SampleFormat::Float, 32) => {
            reader.into_samples::<f32>().map(|s| s.map(f64::from)).collect::<std::result::Result<_, _>>()?
        }
        (fmt, bits) => return Err(Error::UnsupportedFormat(format!("{bits}-bit {fmt:?} samples"))),
    };
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Reads a mono WAV (integer PCM of 8 to 32 bits, or 32-bit float) into
/// samples in `[-1, 1)`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer<f64>> {
    decode(WavReader::open(path)?)
}

pub fn read_wav_from<R: Read>(reader: R) -> Result<AudioBuffer<f64>> {
    decode(WavReader::new(reader)?)
}

fn encode<W: Write + Seek>(mut writer: WavWriter<W>, audio: &AudioBuffer<f64>) -> Result<usize> {
    let mut clipped = 0;
    for &x in &audio.samples {
        let v = (x * 32768.0).round();
        if !(-32768.0..=32767.0).contains(&v) {
            clipped += 1;
        }
        writer.write_sample(v.clamp(-32768.0, 32767.0) as i16)?;
    }
    writer.finalize()?;
    Ok(clipped)
}

fn spec(sample_rate: u32) -> WavSpec {
    WavSpec { channels: 1, sample_rate, bits_per_sample: 16, sample_format: SampleFormat::Int }
}

/// Writes 16-bit mono PCM, clipping to full scale. Returns the number of
/// clipped samples.
pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer<f64>) -> Result<usize> {
    encode(WavWriter::create(path, spec(audio.sample_rate))?, audio)
}

pub fn write_wav_to<W: Write + Seek>(writer: W, audio: &AudioBuffer<f64>) -> Result<usize> {
    encode(WavWriter::new(writer, spec(audio.sample_rate))?, audio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn round_trip_quantizes_to_16_bits() {
        let audio = AudioBuffer::new((0..800).map(|i| 0.5 * (i as f64 * 0.01).sin()).collect(), 16_000).unwrap();
        let mut buf = Cursor::new(Vec::new());
        assert_eq!(write_wav_to(&mut buf, &audio).unwrap(), 0);
        let back = read_wav_from(Cursor::new(buf.into_inner())).unwrap();
        assert_eq!(back.sample_rate, 16_000);
        assert_eq!(back.len(), audio.len());
        for (a, b) in audio.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-12);
        }
    }

    #[test]
    fn clipping_is_counted() {
        let audio = AudioBuffer::new(vec![0.0, 1.5, -2.0, 0.999], 16_000).unwrap();
        let mut buf = Cursor::new(Vec::new());
        assert_eq!(write_wav_to(&mut buf, &audio).unwrap(), 2);
        let back = read_wav_from(Cursor::new(buf.into_inner())).unwrap();
        assert_eq!(back.samples[1], 32767.0 / 32768.0);
        assert_eq!(back.samples[2], -1.0);
    }

    #[test]
    fn stereo_is_rejected() {
        let spec = WavSpec { channels: 2, sample_rate: 16_000, bits_per_sample: 16, sample_format: SampleFormat::Int };
        let mut buf = Cursor::new(Vec::new());
        let mut w = WavWriter::new(&mut buf, spec).unwrap();
        for _ in 0..8 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        let err = read_wav_from(Cursor::new(buf.into_inner())).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat(_)));
    }

    #[test]
    fn garbage_is_an_error() {
        assert!(read_wav_from(Cursor::new(b"not a wav file".to_vec())).is_err());
    }
}
