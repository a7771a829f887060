//! Plain-text file formats.
//!
//! * `.grid`: header `n n`, then `n` lines of `n` space-separated values.
//! * `.pat`: header `n L`, then `L` lines `k l`.
//! * `.meas`: header `n L`, then `L` lines `k l re im`, in pattern order.
//! * manifests and reports: `key=value` lines.
//!
//! Values are written with 17 significant digits so they parse back exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operators::{Image, Measurement, SamplingPattern};

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct Lines<'a> {
    path: &'a Path,
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        Self {
            path,
            iter: text.lines().enumerate(),
        }
    }

    /// Next non-empty line split into fields.
    fn fields(&mut self, expected: usize) -> Result<(usize, Vec<&'a str>)> {
        loop {
            let (no, line) = self
                .iter
                .next()
                .ok_or_else(|| parse_err(self.path, "unexpected end of file"))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.is_empty() {
                continue;
            }
            if f.len() != expected {
                return Err(parse_err(
                    self.path,
                    format!(
                        "line {}: expected {expected} fields, found {}",
                        no + 1,
                        f.len()
                    ),
                ));
            }
            return Ok((no + 1, f));
        }
    }

    fn finish(mut self) -> Result<()> {
        match self.iter.find(|(_, l)| !l.trim().is_empty()) {
            Some((no, _)) => Err(parse_err(
                self.path,
                format!("line {}: trailing data", no + 1),
            )),
            None => Ok(()),
        }
    }
}

fn num<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| parse_err(path, format!("line {line}: cannot parse '{s}'")))
}

pub fn format_grid(img: &Image) -> String {
    let n = img.n();
    let mut s = format!("{n} {n}\n");
    for r in 0..n {
        let row: Vec<String> = (0..n).map(|c| fmt_f64(img.get(r, c))).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_grid(path: &Path, text: &str) -> Result<Image> {
    let mut lines = Lines::new(path, text);
    let (no, h) = lines.fields(2)?;
    let n: usize = num(path, no, h[0])?;
    let m: usize = num(path, no, h[1])?;
    if n != m {
        return Err(parse_err(
            path,
            format!("grid must be square, header says {n} x {m}"),
        ));
    }
    let mut data = Vec::with_capacity(n * n);
    for _ in 0..n {
        let (no, f) = lines.fields(n)?;
        for v in f {
            data.push(num(path, no, v)?);
        }
    }
    lines.finish()?;
    Image::new(n, data).map_err(|e| parse_err(path, e.to_string()))
}

pub fn format_pattern(p: &SamplingPattern) -> String {
    let mut s = format!("{} {}\n", p.n(), p.len());
    for &(k, l) in p.indices() {
        let _ = writeln!(s, "{k} {l}");
    }
    s
}

fn parse_header(path: &Path, lines: &mut Lines<'_>) -> Result<(usize, usize)> {
    let (no, h) = lines.fields(2)?;
    Ok((num(path, no, h[0])?, num(path, no, h[1])?))
}

pub fn parse_pattern(path: &Path, text: &str) -> Result<SamplingPattern> {
    let mut lines = Lines::new(path, text);
    let (n, l) = parse_header(path, &mut lines)?;
    let mut idx = Vec::with_capacity(l);
    for _ in 0..l {
        let (no, f) = lines.fields(2)?;
        idx.push((num(path, no, f[0])?, num(path, no, f[1])?));
    }
    lines.finish()?;
    SamplingPattern::new(n, idx).map_err(|e| parse_err(path, e.to_string()))
}

pub fn format_meas(p: &SamplingPattern, y: &Measurement) -> Result<String> {
    if p.len() != y.len() {
        return Err(Error::dim("measurement not aligned with pattern"));
    }
    let mut s = format!("{} {}\n", p.n(), p.len());
    for (&(k, l), v) in p.indices().iter().zip(y.values()) {
        let _ = writeln!(s, "{k} {l} {} {}", fmt_f64(v.re), fmt_f64(v.im));
    }
    Ok(s)
}

/// Parses a measurement file and checks it lists the pattern's frequencies in order.
pub fn parse_meas(path: &Path, text: &str, p: &SamplingPattern) -> Result<Measurement> {
    let mut lines = Lines::new(path, text);
    let (n, l) = parse_header(path, &mut lines)?;
    if n != p.n() || l != p.len() {
        return Err(parse_err(
            path,
            format!(
                "header {n} {l} does not match pattern {} {}",
                p.n(),
                p.len()
            ),
        ));
    }
    let mut vals = Vec::with_capacity(l);
    for &(pk, pl) in p.indices() {
        let (no, f) = lines.fields(4)?;
        let k: usize = num(path, no, f[0])?;
        let ll: usize = num(path, no, f[1])?;
        if (k, ll) != (pk, pl) {
            return Err(parse_err(
                path,
                format!("line {no}: frequency ({k},{ll}) where pattern has ({pk},{pl})"),
            ));
        }
        vals.push(Complex64::new(num(path, no, f[2])?, num(path, no, f[3])?));
    }
    lines.finish()?;
    Ok(Measurement::new(vals))
}

pub fn write_grid(path: &Path, img: &Image) -> Result<()> {
    write_text(path, &format_grid(img))
}

pub fn read_grid(path: &Path) -> Result<Image> {
    parse_grid(path, &read_text(path)?)
}

pub fn write_pattern(path: &Path, p: &SamplingPattern) -> Result<()> {
    write_text(path, &format_pattern(p))
}

pub fn read_pattern(path: &Path) -> Result<SamplingPattern> {
    parse_pattern(path, &read_text(path)?)
}

pub fn write_meas(path: &Path, p: &SamplingPattern, y: &Measurement) -> Result<()> {
    write_text(path, &format_meas(p, y)?)
}

pub fn read_meas(path: &Path, p: &SamplingPattern) -> Result<Measurement> {
    parse_meas(path, &read_text(path)?, p)
}

/// Ordered `key=value` record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `key`, replacing an earlier value in place.
    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Option<T> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn extend_from(&mut self, other: &KeyValues) -> &mut Self {
        for (k, v) in &other.entries {
            self.set(k, v);
        }
        self
    }

    pub fn format(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut kv = Self::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(path, format!("line {}: expected key=value", no + 1)))?;
            kv.set(k.trim(), v.trim());
        }
        Ok(kv)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(path, &read_text(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.format())
    }
}

/// Grayscale PNG of an image with a linear map from `[min, max]` to `[0, 255]`
/// (a constant image renders black).
pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    let (lo, hi) = img
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    let pixels: Vec<u8> = img
        .as_slice()
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect();
    let n = img.n() as u32;
    let buf = image::GrayImage::from_raw(n, n, pixels).expect("buffer matches image size");
    buf.save(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })
}

pub fn ensure_dir(path: &Path) -> Result<PathBuf> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(path.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("test")
    }

    #[test]
    fn grid_text_layout() {
        let img = Image::new(2, vec![1.0, -0.5, 0.1, 3e-300]).unwrap();
        let s = format_grid(&img);
        assert!(s.starts_with("2 2\n"));
        assert_eq!(s.lines().count(), 3);
        assert_eq!(parse_grid(p(), &s).unwrap(), img);
    }

    #[test]
    fn grid_errors() {
        assert!(parse_grid(p(), "2 3\n1 2\n3 4\n").is_err());
        assert!(parse_grid(p(), "2 2\n1 2\n3\n").is_err());
        assert!(parse_grid(p(), "2 2\n1 2\n3 x\n").is_err());
        assert!(parse_grid(p(), "2 2\n1 2\n3 4\n5 6\n").is_err());
    }

    #[test]
    fn meas_must_follow_pattern_order() {
        let pat = SamplingPattern::new(4, vec![(0, 0), (1, 0), (3, 0)]).unwrap();
        let y = Measurement::new(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.5, 0.25),
            Complex64::new(0.5, -0.25),
        ]);
        let s = format_meas(&pat, &y).unwrap();
        assert_eq!(parse_meas(p(), &s, &pat).unwrap(), y);
        let swapped = SamplingPattern::new(4, vec![(0, 0), (3, 0), (1, 0)]).unwrap();
        assert!(parse_meas(p(), &s, &swapped).is_err());
    }

    #[test]
    fn pattern_text() {
        let pat = SamplingPattern::new(4, vec![(0, 0), (1, 0), (3, 0)]).unwrap();
        let s = format_pattern(&pat);
        assert_eq!(s, "4 3\n0 0\n1 0\n3 0\n");
        assert_eq!(parse_pattern(p(), &s).unwrap(), pat);
        assert!(parse_pattern(p(), "4 2\n0 0\n1 0\n").is_err());
    }

    #[test]
    fn key_values() {
        let mut kv = KeyValues::new();
        kv.set("n", 8).set("method", "coupled").set("n", 16);
        assert_eq!(kv.format(), "n=16\nmethod=coupled\n");
        let back = KeyValues::parse(p(), &kv.format()).unwrap();
        assert_eq!(back, kv);
        assert_eq!(back.get_parsed::<usize>("n"), Some(16));
        assert!(KeyValues::parse(p(), "novalue\n").is_err());
    }
}
