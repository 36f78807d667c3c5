//! On-disk formats: binary state dumps, probe series, step reports, and
//! gauge diagnostics. Every writer goes through a same-directory temp file
//! and a rename, so readers never observe a partial file.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gauge::{plaquette_flux, GaugeField};
use crate::grid::Grid2D;
use crate::observables::{StepReport, TimeSeries};
use crate::wavefunction::WaveFunction;

const MAGIC: &[u8; 8] = b"ABFLUX01";
const HEADER_LEN: usize = 32;

/// Write `bytes` to `path` atomically (temp file + rename).
pub fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::BadDump(format!("not a file path: {}", path.display())))?;
    let mut tmp = path.to_path_buf();
    tmp.set_file_name(format!(".{}.tmp.{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_text_atomic(path: &Path, text: &str) -> Result<()> {
    write_bytes_atomic(path, text.as_bytes())
}

/// State dump: 32-byte header (magic "ABFLUX01", nx u32, ny u32, dx f64,
/// all little-endian, zero padded), then row-major (i fastest) amplitudes
/// as (re, im) f64 pairs.
pub fn write_state_dump(path: &Path, psi: &WaveFunction) -> Result<()> {
    let g = psi.grid();
    let mut buf = Vec::with_capacity(HEADER_LEN + g.n_sites() * 16);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(g.nx() as u32).to_le_bytes());
    buf.extend_from_slice(&(g.ny() as u32).to_le_bytes());
    buf.extend_from_slice(&g.dx().to_le_bytes());
    buf.extend_from_slice(&[0u8; 8]);
    debug_assert_eq!(buf.len(), HEADER_LEN);
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let a = psi.amp(i, j);
            buf.extend_from_slice(&a.re.to_le_bytes());
            buf.extend_from_slice(&a.im.to_le_bytes());
        }
    }
    write_bytes_atomic(path, &buf)
}

pub fn read_state_dump(path: &Path) -> Result<WaveFunction> {
    let bytes = fs::read(path)?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::BadDump(format!("{} bytes, shorter than the header", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::BadDump("bad magic".into()));
    }
    let nx = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let ny = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let dx = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if bytes[24..32].iter().any(|&b| b != 0) {
        return Err(Error::BadDump("nonzero reserved header bytes".into()));
    }
    let grid = Grid2D::new(nx, ny, dx)?;
    let expect = HEADER_LEN + nx * ny * 16;
    if bytes.len() != expect {
        return Err(Error::BadDump(format!(
            "{} bytes for a {}x{} grid, expected {}",
            bytes.len(),
            nx,
            ny,
            expect
        )));
    }
    let mut amps = ndarray::Array2::default((ny, nx));
    let mut off = HEADER_LEN;
    for j in 0..ny {
        for i in 0..nx {
            let re = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            let im = f64::from_le_bytes(bytes[off + 8..off + 16].try_into().unwrap());
            if !re.is_finite() || !im.is_finite() {
                return Err(Error::BadDump(format!("non-finite amplitude at site ({}, {})", i, j)));
            }
            amps[[j, i]] = Complex64::new(re, im);
            off += 16;
        }
    }
    WaveFunction::from_amps(grid, amps)
}

/// Series file: "# <meta>" header line, then "t re im" rows in full
/// precision.
pub fn write_time_series(path: &Path, series: &TimeSeries) -> Result<()> {
    let mut text = String::with_capacity(64 + series.len() * 80);
    text.push_str("# ");
    text.push_str(series.meta());
    text.push('\n');
    for (&t, v) in series.times().iter().zip(series.values()) {
        text.push_str(&format!("{:.17e} {:.17e} {:.17e}\n", t, v.re, v.im));
    }
    write_text_atomic(path, &text)
}

pub fn read_time_series(path: &Path) -> Result<TimeSeries> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let meta = match lines.next() {
        Some(l) if l.starts_with("# ") => l[2..].to_string(),
        _ => return Err(Error::BadDump("series file missing meta header".into())),
    };
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split_whitespace();
        let parse = |s: Option<&str>| -> Result<f64> {
            s.and_then(|x| x.parse().ok())
                .ok_or_else(|| Error::BadDump(format!("bad series row {}", k + 2)))
        };
        let t = parse(cols.next())?;
        let re = parse(cols.next())?;
        let im = parse(cols.next())?;
        times.push(t);
        values.push(Complex64::new(re, im));
    }
    TimeSeries::from_parts(times, values, meta)
}

pub fn write_step_report(path: &Path, report: &StepReport) -> Result<()> {
    let text = format!(
        "t_cross = {:.17e}\nbefore = {:.17e} {:.17e}\nafter = {:.17e} {:.17e}\nwidth = {:.17e}\ndrifting = {}\n",
        report.t_cross,
        report.before.re,
        report.before.im,
        report.after.re,
        report.after.im,
        report.width,
        report.drifting
    );
    write_text_atomic(path, &text)
}

/// Link-by-link text dump with a closing plaquette audit line: the flux
/// plaquette's circulation and the largest circulation anywhere else.
pub fn write_gauge_dump(path: &Path, field: &GaugeField) -> Result<()> {
    let g = field.grid();
    let mut text = String::new();
    for j in 0..g.ny() {
        for i in 0..g.nx() - 1 {
            text.push_str(&format!("{} {} x {:.17e}\n", i, j, field.thx()[[j, i]]));
        }
    }
    for j in 0..g.ny() - 1 {
        for i in 0..g.nx() {
            text.push_str(&format!("{} {} y {:.17e}\n", i, j, field.thy()[[j, i]]));
        }
    }
    let (fi, fj) = field.flux_plaquette()?;
    let mut max_other = 0.0f64;
    for j in 0..g.ny() - 1 {
        for i in 0..g.nx() - 1 {
            let c = plaquette_flux(field, i, j)?;
            if (i, j) != (fi, fj) {
                max_other = max_other.max(c.abs());
            }
        }
    }
    let circ = plaquette_flux(field, fi, fj)?;
    text.push_str(&format!(
        "# plaquette-audit flux_plaquette=({},{}) circulation={:.17e} max_abs_elsewhere={:.17e}\n",
        fi, fj, circ, max_other
    ));
    write_text_atomic(path, &text)
}
