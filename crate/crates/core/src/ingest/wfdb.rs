//! WFDB record reading and writing.
//!
//! Supports the subset needed for the MIT-BIH Arrhythmia Database: a `.hea`
//! text header, signal files in format 212 (two 12-bit samples packed into
//! three bytes) or format 16, and MIT-format `.atr` annotation files.

use std::fs;
use std::path::{Path, PathBuf};

use super::record::EcgRecord;
use crate::error::{Error, Result};

const DEFAULT_GAIN: f64 = 200.0;
const DEFAULT_FREQUENCY: f64 = 250.0;

/// Annotation codes that mark a QRS complex. Everything else (rhythm
/// changes, noise, comments, waveform boundaries) is dropped on read.
const QRS_CODES: [u8; 19] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 25, 30, 34, 35, 38, 41];

// MIT annotation pseudo-codes.
const SKIP: u16 = 59;
const NUM: u16 = 60;
const SUB: u16 = 61;
const CHN: u16 = 62;
const AUX: u16 = 63;

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub file_name: String,
    pub format: u16,
    pub gain: f64,
    pub baseline: i32,
    pub adc_zero: i32,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub record_name: String,
    pub sampling_rate: f64,
    /// Samples per signal; 0 when the header leaves it unspecified.
    pub num_samples: usize,
    pub signals: Vec<SignalSpec>,
}

/// Mnemonic for an MIT annotation code.
pub fn code_to_symbol(code: u8) -> Option<&'static str> {
    Some(match code {
        1 => "N",
        2 => "L",
        3 => "R",
        4 => "a",
        5 => "V",
        6 => "F",
        7 => "J",
        8 => "A",
        9 => "S",
        10 => "E",
        11 => "j",
        12 => "/",
        13 => "Q",
        14 => "~",
        16 => "|",
        18 => "s",
        19 => "T",
        20 => "*",
        21 => "D",
        22 => "\"",
        23 => "=",
        24 => "p",
        25 => "B",
        26 => "^",
        27 => "t",
        28 => "+",
        29 => "u",
        30 => "?",
        31 => "!",
        32 => "[",
        33 => "]",
        34 => "e",
        35 => "n",
        36 => "@",
        37 => "x",
        38 => "f",
        39 => "(",
        40 => ")",
        41 => "r",
        _ => return None,
    })
}

pub fn symbol_to_code(symbol: &str) -> Option<u8> {
    (1..=49u8).find(|&c| code_to_symbol(c) == Some(symbol))
}

fn leading_number(field: &str) -> &str {
    let end = field
        .char_indices()
        .find(|(i, c)| !(c.is_ascii_digit() || *c == '.' || (*i == 0 && (*c == '-' || *c == '+'))))
        .map(|(i, _)| i)
        .unwrap_or(field.len());
    &field[..end]
}

pub fn parse_header(path: &Path) -> Result<Header> {
    let text = fs::read_to_string(path)?;
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));

    let record_line = lines.next().ok_or_else(|| Error::parse(path, "empty header"))?;
    let fields: Vec<&str> = record_line.split_whitespace().collect();
    if fields.len() < 2 {
        return Err(Error::parse(path, "record line needs a name and a signal count"));
    }
    let record_name = fields[0].split('/').next().unwrap_or_default().to_string();
    let nsig: usize = fields[1]
        .parse()
        .map_err(|_| Error::parse(path, format!("bad signal count {:?}", fields[1])))?;
    let sampling_rate = match fields.get(2) {
        Some(f) => leading_number(f)
            .parse::<f64>()
            .map_err(|_| Error::parse(path, format!("bad sampling frequency {f:?}")))?,
        None => DEFAULT_FREQUENCY,
    };
    let num_samples = match fields.get(3) {
        Some(f) => f
            .parse::<usize>()
            .map_err(|_| Error::parse(path, format!("bad sample count {f:?}")))?,
        None => 0,
    };

    let mut signals = Vec::with_capacity(nsig);
    for _ in 0..nsig {
        let line = lines
            .next()
            .ok_or_else(|| Error::parse(path, format!("expected {nsig} signal lines")))?;
        signals.push(parse_signal_line(path, line)?);
    }

    Ok(Header {
        record_name,
        sampling_rate,
        num_samples,
        signals,
    })
}

fn parse_signal_line(path: &Path, line: &str) -> Result<SignalSpec> {
    let mut fields = line.split_whitespace();
    let file_name = fields
        .next()
        .ok_or_else(|| Error::parse(path, "empty signal line"))?
        .to_string();
    let fmt_field = fields
        .next()
        .ok_or_else(|| Error::parse(path, "signal line lacks a format"))?;
    let format: u16 = leading_number(fmt_field)
        .parse()
        .map_err(|_| Error::parse(path, format!("bad format field {fmt_field:?}")))?;

    let gain_field = fields.next();
    let adc_zero_field = {
        let _adc_res = fields.next();
        fields.next()
    };
    let adc_zero: i32 = match adc_zero_field {
        Some(f) => f
            .parse()
            .map_err(|_| Error::parse(path, format!("bad adc zero {f:?}")))?,
        None => 0,
    };

    let (mut gain, mut baseline) = (DEFAULT_GAIN, adc_zero);
    if let Some(g) = gain_field {
        let g_num = leading_number(g);
        let parsed: f64 = g_num
            .parse()
            .map_err(|_| Error::parse(path, format!("bad gain {g:?}")))?;
        if parsed != 0.0 {
            gain = parsed;
        }
        if let Some(open) = g.find('(') {
            let close = g[open..]
                .find(')')
                .ok_or_else(|| Error::parse(path, format!("unterminated baseline in {g:?}")))?;
            baseline = g[open + 1..open + close]
                .parse()
                .map_err(|_| Error::parse(path, format!("bad baseline in {g:?}")))?;
        }
    }

    // initial value, checksum, block size, then free-text description
    let rest: Vec<&str> = fields.collect();
    let description = if rest.len() > 3 { rest[3..].join(" ") } else { String::new() };

    Ok(SignalSpec {
        file_name,
        format,
        gain,
        baseline,
        adc_zero,
        description,
    })
}

fn sign_extend_12(v: u16) -> i32 {
    let v = (v & 0x0fff) as i32;
    if v & 0x800 != 0 {
        v - 0x1000
    } else {
        v
    }
}

/// Decode a format-212 byte stream into interleaved ADC values.
pub fn decode_212(bytes: &[u8]) -> Vec<i32> {
    let mut out = Vec::with_capacity(bytes.len() * 2 / 3 + 1);
    let mut chunks = bytes.chunks_exact(3);
    for c in &mut chunks {
        let a = (c[0] as u16) | (((c[1] & 0x0f) as u16) << 8);
        let b = (c[2] as u16) | (((c[1] & 0xf0) as u16) << 4);
        out.push(sign_extend_12(a));
        out.push(sign_extend_12(b));
    }
    // A trailing pair of bytes holds one final sample.
    let rem = chunks.remainder();
    if rem.len() == 2 {
        let a = (rem[0] as u16) | (((rem[1] & 0x0f) as u16) << 8);
        out.push(sign_extend_12(a));
    }
    out
}

/// Pack interleaved ADC values into format 212. Values are clamped to 12 bits.
pub fn encode_212(values: &[i32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 3 / 2 + 2);
    for pair in values.chunks(2) {
        let a = (pair[0].clamp(-2048, 2047) & 0x0fff) as u16;
        let b = pair.get(1).map(|&v| (v.clamp(-2048, 2047) & 0x0fff) as u16);
        out.push((a & 0xff) as u8);
        match b {
            Some(b) => {
                out.push((((a >> 8) & 0x0f) | (((b >> 8) & 0x0f) << 4)) as u8);
                out.push((b & 0xff) as u8);
            }
            None => out.push(((a >> 8) & 0x0f) as u8),
        }
    }
    out
}

fn decode_16(bytes: &[u8]) -> Vec<i32> {
    bytes
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as i32)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub sample: usize,
    pub code: u8,
}

/// Decode an MIT-format annotation file. All annotations are returned,
/// including non-beat ones.
pub fn decode_annotations(path: &Path, bytes: &[u8]) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    let mut time: i64 = 0;
    let mut pos = 0usize;
    let word_at = |p: usize| -> Option<u16> { bytes.get(p..p + 2).map(|b| u16::from_le_bytes([b[0], b[1]])) };

    while let Some(word) = word_at(pos) {
        pos += 2;
        let code = word >> 10;
        let interval = (word & 0x03ff) as usize;
        match code {
            0 if interval == 0 => break,
            SKIP => {
                let hi = word_at(pos).ok_or_else(|| Error::parse(path, "truncated SKIP"))?;
                let lo = word_at(pos + 2).ok_or_else(|| Error::parse(path, "truncated SKIP"))?;
                pos += 4;
                time += (((hi as u32) << 16) | lo as u32) as i32 as i64;
            }
            NUM | SUB | CHN => {}
            AUX => pos += interval + (interval & 1),
            _ => {
                time += interval as i64;
                if time < 0 {
                    return Err(Error::parse(path, "annotation time went negative"));
                }
                out.push(Annotation {
                    sample: time as usize,
                    code: code as u8,
                });
            }
        }
    }
    Ok(out)
}

/// Encode annotations in MIT format, inserting SKIP words for long gaps.
pub fn encode_annotations(annotations: &[Annotation]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut last = 0usize;
    for a in annotations {
        let delta = a.sample - last;
        if delta > 0x03ff {
            out.extend_from_slice(&(SKIP << 10).to_le_bytes());
            let d = delta as u32;
            out.extend_from_slice(&((d >> 16) as u16).to_le_bytes());
            out.extend_from_slice(&((d & 0xffff) as u16).to_le_bytes());
            out.extend_from_slice(&((a.code as u16) << 10).to_le_bytes());
        } else {
            out.extend_from_slice(&(((a.code as u16) << 10) | delta as u16).to_le_bytes());
        }
        last = a.sample;
    }
    out.extend_from_slice(&[0, 0]);
    out
}

/// Read one channel of a WFDB record plus its `.atr` annotations.
///
/// `header_path` points at the `.hea` file; the signal file is resolved
/// relative to it and the annotation file is `<record>.atr` beside it.
pub fn parse_wfdb(header_path: &Path, channel: usize) -> Result<EcgRecord> {
    let header = parse_header(header_path)?;
    let dir = header_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let spec = header.signals.get(channel).ok_or_else(|| {
        Error::parse(
            header_path,
            format!("channel {channel} requested but record has {} signals", header.signals.len()),
        )
    })?;

    // Signals stored in the same file are interleaved frame by frame.
    let group: Vec<usize> = header
        .signals
        .iter()
        .enumerate()
        .filter(|(_, s)| s.file_name == spec.file_name)
        .map(|(i, _)| i)
        .collect();
    if group.iter().any(|&i| header.signals[i].format != spec.format) {
        return Err(Error::parse(header_path, "mixed formats within one signal file"));
    }
    let stride = group.len();
    let offset = group.iter().position(|&i| i == channel).unwrap_or(0);

    let dat_path: PathBuf = dir.join(&spec.file_name);
    let bytes = fs::read(&dat_path)?;
    let raw = match spec.format {
        212 => decode_212(&bytes),
        16 => decode_16(&bytes),
        other => return Err(Error::UnsupportedFormat(other.to_string())),
    };
    let frames = raw.len() / stride;
    let n = if header.num_samples > 0 {
        if frames < header.num_samples {
            return Err(Error::parse(
                &dat_path,
                format!("header declares {} samples but file holds {frames}", header.num_samples),
            ));
        }
        header.num_samples
    } else {
        frames
    };
    let samples: Vec<f64> = (0..n)
        .map(|f| (raw[f * stride + offset] - spec.baseline) as f64 / spec.gain)
        .collect();

    let atr_path = dir.join(format!("{}.atr", header.record_name));
    let atr = fs::read(&atr_path)?;
    let (mut r_peaks, mut symbols) = (Vec::new(), Vec::new());
    for a in decode_annotations(&atr_path, &atr)? {
        if !QRS_CODES.contains(&a.code) {
            continue;
        }
        if a.sample >= n {
            return Err(Error::parse(&atr_path, format!("annotation at {} beyond signal end", a.sample)));
        }
        // Duplicate times occasionally occur; keep the first.
        if r_peaks.last().is_some_and(|&p| p >= a.sample) {
            continue;
        }
        r_peaks.push(a.sample);
        symbols.push(code_to_symbol(a.code).unwrap_or("Q").to_string());
    }

    EcgRecord::new(header.record_name, samples, header.sampling_rate, r_peaks, symbols)
}

/// Write a single-channel record as `<id>.hea`, `<id>.dat` (format 212,
/// baseline 0) and `<id>.atr`. Returns the header path.
pub fn write_wfdb(record: &EcgRecord, dir: &Path, gain: f64) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let id = &record.patient_id;
    let adc: Vec<i32> = record.samples.iter().map(|x| (x * gain).round() as i32).collect();
    fs::write(dir.join(format!("{id}.dat")), encode_212(&adc))?;

    let header = format!(
        "{id} 1 {} {}\n{id}.dat 212 {gain}(0)/mV 11 0 {} 0 0 ECG\n",
        record.sampling_rate,
        record.samples.len(),
        adc.first().copied().unwrap_or(0),
    );
    let hea = dir.join(format!("{id}.hea"));
    fs::write(&hea, header)?;

    let anns = record
        .r_peaks
        .iter()
        .zip(&record.symbols)
        .map(|(&sample, sym)| {
            let code = symbol_to_code(sym)
                .ok_or_else(|| Error::InvalidArgument(format!("no annotation code for {sym:?}")))?;
            Ok(Annotation { sample, code })
        })
        .collect::<Result<Vec<_>>>()?;
    fs::write(dir.join(format!("{id}.atr")), encode_annotations(&anns))?;
    Ok(hea)
}
