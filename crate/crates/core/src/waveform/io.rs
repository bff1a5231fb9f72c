//! Raw waveform files.
//!
//! ```text
//! UWCRLB-WAVEFORM 1\n
//! {"sample_rate":24000.0,"energy":40.0,"family":"spfsk","num_samples":N}\n
//! N × f64 little-endian
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SampledWaveform;
use crate::error::{Error, Result};

pub const MAGIC: &str = "UWCRLB-WAVEFORM 1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveformHeader {
    pub sample_rate: f64,
    pub energy: f64,
    pub family: String,
    pub num_samples: usize,
}

pub fn write_waveform<W: Write>(mut out: W, wf: &SampledWaveform<f64>) -> Result<()> {
    let header = WaveformHeader {
        sample_rate: wf.sample_rate,
        energy: wf.energy,
        family: wf.family.clone(),
        num_samples: wf.len(),
    };
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for s in &wf.samples {
        out.write_all(&s.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_waveform<R: Read>(input: R) -> Result<SampledWaveform<f64>> {
    let mut reader = BufReader::new(input);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(Error::Format(format!("bad magic line {:?}", line.trim_end())));
    }
    line.clear();
    reader.read_line(&mut line)?;
    let header: WaveformHeader = serde_json::from_str(line.trim_end())
        .map_err(|e| Error::Format(format!("header: {e}")))?;
    if !(header.sample_rate > 0.0) {
        return Err(Error::Format("sample_rate must be > 0".into()));
    }
    let mut bytes = Vec::with_capacity(header.num_samples * 8);
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != header.num_samples * 8 {
        return Err(Error::Format(format!(
            "expected {} samples, found {} bytes",
            header.num_samples,
            bytes.len()
        )));
    }
    let samples: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let wf = SampledWaveform::from_samples(samples, header.sample_rate, header.family);
    if (wf.energy - header.energy).abs() > 1e-9 * header.energy.abs().max(1e-300) {
        return Err(Error::Format(format!(
            "header energy {} disagrees with sample energy {}",
            header.energy, wf.energy
        )));
    }
    Ok(wf)
}

pub fn save(path: impl AsRef<Path>, wf: &SampledWaveform<f64>) -> Result<()> {
    write_waveform(BufWriter::new(File::create(path)?), wf)
}

pub fn load(path: impl AsRef<Path>) -> Result<SampledWaveform<f64>> {
    read_waveform(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(samples in prop::collection::vec(-1e6f64..1e6, 0..64), fs in 1.0f64..1e6) {
            let wf = SampledWaveform::from_samples(samples, fs, "raw");
            let mut buf = Vec::new();
            write_waveform(&mut buf, &wf).unwrap();
            let back = read_waveform(&buf[..]).unwrap();
            prop_assert_eq!(back, wf);
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let wf = SampledWaveform::from_samples(vec![1.0, 2.0, 3.0], 10.0, "raw");
        let mut buf = Vec::new();
        write_waveform(&mut buf, &wf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_waveform(&buf[..]), Err(Error::Format(_))));
        assert!(matches!(read_waveform(&b"nope\n"[..]), Err(Error::Format(_))));
    }
}
