//! File formats and synthetic scene generation.
//!
//! Cubes travel either as a small binary format (magic `HSI1`, little-endian
//! header and payload) or as CSV with a `L,T,a,b` header line. Factor
//! matrices are plain CSV. Abundance maps are additionally exported as 8-bit
//! PGM images, and each run produces a JSON-style report whose bytes are a
//! pure function of the configuration and data.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::factorization::{
    Abundances, Endmembers, HyperCube, InitScheme, RunResult, UpdateScheme,
};
use crate::kernels::KernelSpec;
use crate::matrix::Mat;
use crate::metrics::EvalReport;
use crate::regularizers::fold_row;
use crate::rng::Rng;

const MAGIC: &[u8; 4] = b"HSI1";
const HEADER_LEN: usize = 20;

// ---------------------------------------------------------------------------
// Cube files
// ---------------------------------------------------------------------------

/// Writes a cube in the binary format: magic `HSI1`; `L, T, a, b` as
/// unsigned 32-bit little-endian; then `L * T` doubles, band-major.
pub fn write_cube(path: impl AsRef<Path>, cube: &HyperCube) -> Result<()> {
    let path = path.as_ref();
    let (l, t) = (cube.bands(), cube.pixels());
    let mut bytes = Vec::with_capacity(HEADER_LEN + 8 * l * t);
    bytes.extend_from_slice(MAGIC);
    for dim in [l, t, cube.height(), cube.width()] {
        let v = u32::try_from(dim).map_err(|_| {
            Error::InvalidParameter(format!("dimension {dim} exceeds the 32-bit header field"))
        })?;
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for band in 0..l {
        for t_idx in 0..t {
            bytes.extend_from_slice(&cube.matrix().get(band, t_idx).to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Writes a cube as CSV: first line `L,T,a,b`, then one line per band with
/// `T` comma-separated values printed with 17 significant digits.
pub fn write_cube_csv(path: impl AsRef<Path>, cube: &HyperCube) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&format!(
        "{},{},{},{}\n",
        cube.bands(),
        cube.pixels(),
        cube.height(),
        cube.width()
    ));
    for band in 0..cube.bands() {
        let row: Vec<String> = (0..cube.pixels())
            .map(|t| format!("{:.16e}", cube.matrix().get(band, t)))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a cube, accepting the binary format (recognized by its magic) with
/// a CSV fallback.
pub fn read_cube(path: impl AsRef<Path>) -> Result<HyperCube> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    if bytes.len() >= 4 && &bytes[..4] == MAGIC {
        return parse_cube_binary(path, &bytes);
    }
    let text = String::from_utf8(bytes).map_err(|_| {
        Error::format(
            path.display().to_string(),
            "bad magic at byte offset 0 (expected HSI1) and not valid CSV text",
        )
    })?;
    parse_cube_csv(path, &text)
}

fn parse_cube_binary(path: &Path, bytes: &[u8]) -> Result<HyperCube> {
    let p = path.display().to_string();
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(
            &p,
            format!(
                "truncated header: need {HEADER_LEN} bytes, file has {} (byte offset 4)",
                bytes.len()
            ),
        ));
    }
    let field = |i: usize| -> usize {
        u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize
    };
    let (l, t, a, b) = (field(0), field(1), field(2), field(3));
    if t != a * b {
        return Err(Error::format(
            &p,
            format!("header at byte offset 8: T = {t} does not equal a*b = {a}*{b}"),
        ));
    }
    if l == 0 || t == 0 {
        return Err(Error::format(
            &p,
            "header declares an empty cube (byte offset 4)",
        ));
    }
    let expected = 8usize
        .checked_mul(l)
        .and_then(|v| v.checked_mul(t))
        .ok_or_else(|| Error::format(&p, "header dimensions overflow (byte offset 4)"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::format(
            &p,
            format!(
                "truncated payload at byte offset {HEADER_LEN}: expected {expected} bytes, got {}",
                payload.len()
            ),
        ));
    }
    let mut data = Mat::zeros(l, t);
    for band in 0..l {
        for t_idx in 0..t {
            let idx = 8 * (band * t + t_idx);
            let v = f64::from_le_bytes(payload[idx..idx + 8].try_into().unwrap());
            if !v.is_finite() || v < 0.0 {
                return Err(Error::format(
                    &p,
                    format!(
                        "invalid value {v} at band {band}, pixel {t_idx} (byte offset {})",
                        HEADER_LEN + idx
                    ),
                ));
            }
            data.set(band, t_idx, v);
        }
    }
    HyperCube::new(data, a, b)
}

fn parse_cube_csv(path: &Path, text: &str) -> Result<HyperCube> {
    let p = path.display().to_string();
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(&p, "empty file"))?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::format(&p, format!("header line must be L,T,a,b, got {header:?}")))?;
    if dims.len() != 4 {
        return Err(Error::format(
            &p,
            format!("header line must have 4 fields, got {}", dims.len()),
        ));
    }
    let (l, t, a, b) = (dims[0], dims[1], dims[2], dims[3]);
    if t != a * b {
        return Err(Error::format(
            &p,
            format!("header: T = {t} does not equal a*b = {a}*{b}"),
        ));
    }
    let mut data = Mat::zeros(l, t);
    for band in 0..l {
        let line = lines
            .next()
            .ok_or_else(|| Error::format(&p, format!("missing band row {} of {l}", band + 1)))?;
        let mut count = 0;
        for (col, cell) in line.split(',').enumerate() {
            if col >= t {
                return Err(Error::format(
                    &p,
                    format!("row {}: expected {t} values, found more", band + 2),
                ));
            }
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::format(
                    &p,
                    format!(
                        "row {}, column {}: cannot parse {cell:?}",
                        band + 2,
                        col + 1
                    ),
                )
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::format(
                    &p,
                    format!("row {}, column {}: invalid value {v}", band + 2, col + 1),
                ));
            }
            data.set(band, col, v);
            count += 1;
        }
        if count != t {
            return Err(Error::format(
                &p,
                format!("row {}: expected {t} values, got {count}", band + 2),
            ));
        }
    }
    HyperCube::new(data, a, b)
}

// ---------------------------------------------------------------------------
// Matrix CSV
// ---------------------------------------------------------------------------

/// Writes a plain numeric CSV, one line per matrix row, 17 significant
/// digits per value.
pub fn write_matrix_csv(path: impl AsRef<Path>, m: &Mat) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in 0..m.rows() {
        let row: Vec<String> = (0..m.cols())
            .map(|c| format!("{:.16e}", m.get(r, c)))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a plain numeric CSV into a matrix.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Mat> {
    let path = path.as_ref();
    let p = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::io(&p, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .enumerate()
            .map(|(j, cell)| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::format(
                        &p,
                        format!("row {}, column {}: cannot parse {cell:?}", i + 1, j + 1),
                    )
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::format(
                    &p,
                    format!(
                        "row {} has {} values, expected {}",
                        i + 1,
                        row.len(),
                        first.len()
                    ),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::format(&p, "no data rows"));
    }
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    Ok(Mat::from_rows(&refs))
}

// ---------------------------------------------------------------------------
// PGM maps
// ---------------------------------------------------------------------------

/// Writes a matrix as an 8-bit binary PGM, scaling min..max linearly to
/// 0..255 (a constant map comes out all zeros).
pub fn write_pgm(path: impl AsRef<Path>, map: &Mat) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = (map.rows(), map.cols());
    let lo = map.min();
    let hi = map.max();
    let span = hi - lo;
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    for i in 0..h {
        for j in 0..w {
            let v = if span > 0.0 {
                ((map.get(i, j) - lo) / span * 255.0).round() as u8
            } else {
                0
            };
            bytes.push(v);
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

// ---------------------------------------------------------------------------
// Synthetic scenes
// ---------------------------------------------------------------------------

/// Endmember generation for synthetic scenes.
#[derive(Debug, Clone)]
pub enum EndmemberModel {
    /// Each spectrum is a sum of 2 to 4 positive Gaussian-shaped peaks over
    /// the band axis, scaled into `[0, 1]`.
    GaussianBumps,
    /// User-provided spectra (bands x rank, nonnegative).
    UserMatrix(Mat),
}

/// Per-pixel mixing model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mixing {
    Linear,
    /// Adds `strength * sum_{n<m} a_n a_m (e_n . e_m)` per pixel, where `.`
    /// is the element-wise product of the spectra.
    Bilinear {
        strength: f64,
    },
}

/// Recipe for a synthetic scene with ground truth.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub bands: usize,
    pub height: usize,
    pub width: usize,
    pub rank: usize,
    pub endmembers: EndmemberModel,
    /// Symmetric Dirichlet concentration of the per-pixel abundances; values
    /// below 1 push pixels toward the simplex corners.
    pub concentration: f64,
    /// Neighborhood-averaging passes applied to each abundance map.
    pub blur_passes: usize,
    pub mixing: Mixing,
    /// Additive white Gaussian noise at this SNR (dB), clamped at zero.
    pub noise_snr_db: Option<f64>,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bands == 0 || self.height == 0 || self.width == 0 || self.rank == 0 {
            return Err(Error::InvalidParameter(
                "scene dimensions and rank must be positive".into(),
            ));
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "concentration must be positive, got {}",
                self.concentration
            )));
        }
        if let Mixing::Bilinear { strength } = self.mixing {
            if !(strength >= 0.0 && strength.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "bilinear strength must be nonnegative, got {strength}"
                )));
            }
        }
        if let EndmemberModel::UserMatrix(m) = &self.endmembers {
            if m.rows() != self.bands || m.cols() != self.rank {
                return Err(Error::DimensionMismatch(format!(
                    "user endmembers are {}x{}, scene wants {}x{}",
                    m.rows(),
                    m.cols(),
                    self.bands,
                    self.rank
                )));
            }
            if m.min() < 0.0 || !m.is_finite() {
                return Err(Error::InvalidParameter(
                    "user endmembers must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Generates a scene with its ground-truth factors, deterministically from
/// the seed.
pub fn synth_scene(spec: &SceneSpec) -> Result<(HyperCube, Endmembers, Abundances)> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let (l, n) = (spec.bands, spec.rank);
    let t = spec.height * spec.width;

    let e = match &spec.endmembers {
        EndmemberModel::UserMatrix(m) => m.clone(),
        EndmemberModel::GaussianBumps => {
            let mut e = Mat::zeros(l, n);
            for col in 0..n {
                let bumps = 2 + rng.index(3);
                let mut spectrum = vec![0.0; l];
                for _ in 0..bumps {
                    let center = rng.uniform() * (l.max(2) - 1) as f64;
                    let width = (0.03 + 0.12 * rng.uniform()) * l as f64;
                    let amplitude = 0.3 + 0.7 * rng.uniform();
                    for (band, v) in spectrum.iter_mut().enumerate() {
                        let d = (band as f64 - center) / width;
                        *v += amplitude * (-0.5 * d * d).exp();
                    }
                }
                let peak = spectrum.iter().cloned().fold(f64::MIN, f64::max);
                let target = 0.4 + 0.6 * rng.uniform();
                for (band, v) in spectrum.iter().enumerate() {
                    e.set(band, col, v / peak * target);
                }
            }
            e
        }
    };

    let mut a = Mat::zeros(n, t);
    for pixel in 0..t {
        let col = rng.dirichlet(spec.concentration, n);
        a.col_mut(pixel).copy_from_slice(&col);
    }
    for _ in 0..spec.blur_passes {
        blur_maps(&mut a, spec.height, spec.width)?;
    }

    let mut x = e.matmul(&a);
    if let Mixing::Bilinear { strength } = spec.mixing {
        if strength > 0.0 {
            for pixel in 0..t {
                for p in 0..n {
                    for q in p + 1..n {
                        let w = strength * a.get(p, pixel) * a.get(q, pixel);
                        if w == 0.0 {
                            continue;
                        }
                        for band in 0..l {
                            let v = x.get(band, pixel) + w * e.get(band, p) * e.get(band, q);
                            x.set(band, pixel, v);
                        }
                    }
                }
            }
        }
    }

    if let Some(snr_db) = spec.noise_snr_db {
        let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / (l * t) as f64;
        let sigma = (mean_sq / 10f64.powf(snr_db / 10.0)).sqrt();
        for pixel in 0..t {
            for band in 0..l {
                let v = (x.get(band, pixel) + sigma * rng.normal()).max(0.0);
                x.set(band, pixel, v);
            }
        }
    }

    Ok((
        HyperCube::new(x, spec.height, spec.width)?,
        Endmembers::new(e)?,
        Abundances::new(a)?,
    ))
}

/// One 4-neighbor averaging pass over every abundance map, followed by
/// column re-normalization.
fn blur_maps(a: &mut Mat, height: usize, width: usize) -> Result<()> {
    let n = a.rows();
    for row in 0..n {
        let map = fold_row(&a.row(row), height, width)?;
        for i in 0..height {
            for j in 0..width {
                let mut sum = map.get(i, j);
                let mut count = 1.0;
                if i > 0 {
                    sum += map.get(i - 1, j);
                    count += 1.0;
                }
                if i + 1 < height {
                    sum += map.get(i + 1, j);
                    count += 1.0;
                }
                if j > 0 {
                    sum += map.get(i, j - 1);
                    count += 1.0;
                }
                if j + 1 < width {
                    sum += map.get(i, j + 1);
                    count += 1.0;
                }
                a.set(row, i * width + j, sum / count);
            }
        }
    }
    for t in 0..a.cols() {
        let sum: f64 = a.col(t).iter().sum();
        if sum > 0.0 {
            for v in a.col_mut(t).iter_mut() {
                *v /= sum;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Writes the run report and its companion files into `dir`:
/// `report.json` (config echo, cost trace, metrics), `endmembers.csv`,
/// `abundances.csv`, and per endmember one map CSV and one PGM image.
///
/// The report bytes depend only on the configuration and the data, so two
/// identical sequential runs produce identical files.
pub fn write_report(
    dir: impl AsRef<Path>,
    cube: &HyperCube,
    result: &RunResult,
    eval: &EvalReport,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

    write_matrix_csv(dir.join("endmembers.csv"), &result.endmembers.matrix)?;
    write_matrix_csv(dir.join("abundances.csv"), &result.abundances.matrix)?;
    for n in 0..result.endmembers.count() {
        let map = fold_row(
            &result.abundances.matrix.row(n),
            cube.height(),
            cube.width(),
        )?;
        write_matrix_csv(dir.join(format!("abundance_map_{}.csv", n + 1)), &map)?;
        write_pgm(dir.join(format!("abundance_map_{}.pgm", n + 1)), &map)?;
    }

    let path = dir.join("report.json");
    let mut out = Vec::new();
    render_report(&mut out, cube, result, eval)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    fs::write(&path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

fn render_report(
    w: &mut impl std::io::Write,
    cube: &HyperCube,
    result: &RunResult,
    eval: &EvalReport,
) -> std::io::Result<()> {
    let c = &result.config;
    writeln!(w, "{{")?;
    writeln!(w, "  \"config\": {{")?;
    writeln!(w, "    \"rank\": {},", c.rank)?;
    writeln!(w, "    \"kernel\": \"{}\",", c.kernel.name())?;
    match c.kernel {
        KernelSpec::Polynomial { degree, offset } => {
            writeln!(w, "    \"degree\": {degree},")?;
            writeln!(w, "    \"offset\": {offset},")?;
        }
        KernelSpec::Gaussian { bandwidth } => {
            writeln!(w, "    \"bandwidth\": {bandwidth},")?;
        }
        KernelSpec::Linear => {}
    }
    let scheme = match c.scheme {
        UpdateScheme::Additive => "additive",
        UpdateScheme::Multiplicative => "multiplicative",
    };
    writeln!(w, "    \"scheme\": \"{scheme}\",")?;
    writeln!(w, "    \"iterations\": {},", c.iterations)?;
    writeln!(w, "    \"step_abundance\": {},", c.step_sizes.abundance)?;
    writeln!(w, "    \"step_endmember\": {},", c.step_sizes.endmember)?;
    writeln!(w, "    \"backtracking\": {},", c.step_sizes.backtracking)?;
    writeln!(w, "    \"sum_to_one\": {},", c.sum_to_one)?;
    writeln!(
        w,
        "    \"normalize_every_iteration\": {},",
        c.normalize_every_iteration
    )?;
    writeln!(w, "    \"semi_relaxed\": {},", c.semi_relaxed)?;
    match c.init {
        InitScheme::RandomUniform => writeln!(w, "    \"init\": \"random\",")?,
        InitScheme::DataColumns { jitter } => {
            writeln!(w, "    \"init\": \"datacols\",")?;
            writeln!(w, "    \"init_jitter\": {jitter},")?;
        }
    }
    writeln!(w, "    \"seed\": {},", c.seed)?;
    writeln!(w, "    \"epsilon_guard\": {},", c.epsilon_guard)?;
    writeln!(w, "    \"threads\": {},", c.threads)?;
    let r = &c.regularizers;
    writeln!(w, "    \"regularizers\": {{")?;
    writeln!(w, "      \"lambda\": {},", r.lambda)?;
    writeln!(w, "      \"lambda_feature\": {},", r.lambda_feature)?;
    writeln!(w, "      \"gamma\": {},", r.gamma)?;
    writeln!(w, "      \"rho\": {},", r.rho)?;
    writeln!(w, "      \"alpha\": {},", r.alpha)?;
    writeln!(w, "      \"mu\": {},", r.mu)?;
    writeln!(w, "      \"omega_left\": {},", r.omega_left)?;
    writeln!(w, "      \"omega_right\": {},", r.omega_right)?;
    writeln!(w, "      \"omega_up\": {},", r.omega_up)?;
    writeln!(w, "      \"omega_down\": {},", r.omega_down)?;
    writeln!(w, "      \"alpha_spatial\": {}", r.alpha_spatial)?;
    writeln!(w, "    }}")?;
    writeln!(w, "  }},")?;
    writeln!(w, "  \"bands\": {},", cube.bands())?;
    writeln!(w, "  \"pixels\": {},", cube.pixels())?;
    writeln!(w, "  \"height\": {},", cube.height())?;
    writeln!(w, "  \"width\": {},", cube.width())?;
    writeln!(w, "  \"re\": {},", result.re)?;
    writeln!(w, "  \"re_phi\": {},", result.re_phi)?;
    writeln!(
        w,
        "  \"zero_columns\": {},",
        render_usize_list(&result.zero_columns)
    )?;
    if let Some(sam) = &eval.sam_per_endmember {
        writeln!(w, "  \"sam_degrees\": {},", render_f64_list(sam))?;
    }
    if let Some(matching) = &eval.matching {
        writeln!(w, "  \"matching\": {},", render_usize_list(matching))?;
    }
    writeln!(
        w,
        "  \"cost_trace\": {}",
        render_f64_list(&result.cost_trace)
    )?;
    writeln!(w, "}}")
}

fn render_f64_list(vs: &[f64]) -> String {
    let items: Vec<String> = vs.iter().map(|v| format!("{v}")).collect();
    format!("[{}]", items.join(", "))
}

fn render_usize_list(vs: &[usize]) -> String {
    let items: Vec<String> = vs.iter().map(|v| format!("{v}")).collect();
    format!("[{}]", items.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn random_cube(seed: u64, l: usize, h: usize, w: usize) -> HyperCube {
        let mut rng = Rng::new(seed);
        HyperCube::new(Mat::from_fn(l, h * w, |_, _| rng.uniform()), h, w).unwrap()
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cube.hsi");
        let cube = random_cube(1, 5, 2, 3);
        write_cube(&path, &cube).unwrap();
        let back = read_cube(&path).unwrap();
        assert_eq!(back.matrix(), cube.matrix());
        assert_eq!(back.height(), 2);
        assert_eq!(back.width(), 3);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cube.csv");
        let cube = random_cube(2, 4, 2, 2);
        write_cube_csv(&path, &cube).unwrap();
        let back = read_cube(&path).unwrap();
        // 17 significant digits round-trip doubles exactly.
        assert_eq!(back.matrix(), cube.matrix());
    }

    #[test]
    fn truncated_payload_is_reported_with_offset() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cube.hsi");
        let cube = random_cube(3, 2, 2, 3);
        write_cube(&path, &cube).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, bytes).unwrap();
        let err = read_cube(&path).unwrap_err().to_string();
        assert!(err.contains("byte offset 20"), "{err}");
        assert!(err.contains("96"), "{err}");
        assert!(err.contains("95"), "{err}");
    }

    #[test]
    fn header_mismatch_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cube.hsi");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"HSI1");
        for v in [2u32, 6, 2, 2] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&[0u8; 96]);
        fs::write(&path, &bytes).unwrap();
        let err = read_cube(&path).unwrap_err().to_string();
        assert!(err.contains("does not equal"), "{err}");
    }

    #[test]
    fn negative_binary_value_is_located() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cube.hsi");
        let cube = random_cube(4, 2, 1, 3);
        write_cube(&path, &cube).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        // overwrite value (band 1, pixel 2) = payload index 5
        let offset = 20 + 8 * 5;
        bytes[offset..offset + 8].copy_from_slice(&(-1.0f64).to_le_bytes());
        fs::write(&path, bytes).unwrap();
        let err = read_cube(&path).unwrap_err().to_string();
        assert!(err.contains("band 1, pixel 2"), "{err}");
        assert!(err.contains(&format!("byte offset {offset}")), "{err}");
    }

    #[test]
    fn negative_csv_value_is_located() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cube.csv");
        fs::write(&path, "2,2,1,2\n0.5,0.25\n0.125,-0.5\n").unwrap();
        let err = read_cube(&path).unwrap_err().to_string();
        assert!(err.contains("row 3, column 2"), "{err}");
    }

    #[test]
    fn garbage_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cube.hsi");
        // Not the cube magic and not parseable text either.
        fs::write(&path, [0x58, 0x59, 0x5a, 0x00, 0xff, 0xfe, 0x01]).unwrap();
        let err = read_cube(&path).unwrap_err().to_string();
        assert!(err.contains("bad magic"), "{err}");

        // Valid text but a broken header line.
        fs::write(&path, "hello,world\n").unwrap();
        let err = read_cube(&path).unwrap_err().to_string();
        assert!(err.contains("header"), "{err}");
    }

    #[test]
    fn matrix_csv_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut rng = Rng::new(6);
        let m = Mat::from_fn(4, 3, |_, _| rng.uniform() * 1e-3);
        write_matrix_csv(&path, &m).unwrap();
        let back = read_matrix_csv(&path).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn pgm_scales_per_map() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("map.pgm");
        let m = Mat::from_rows(&[&[0.0, 0.5], &[1.0, 0.25]]);
        write_pgm(&path, &m).unwrap();
        let bytes = fs::read(&path).unwrap();
        let header_end = bytes.len() - 4;
        assert_eq!(&bytes[..header_end], b"P5\n2 2\n255\n");
        assert_eq!(&bytes[header_end..], &[0, 128, 255, 64]);
    }

    #[test]
    fn pgm_constant_map_is_flat() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("flat.pgm");
        let m = Mat::from_fn(3, 3, |_, _| 0.5);
        write_pgm(&path, &m).unwrap();
        let bytes = fs::read(&path).unwrap();
        let pixels = &bytes[bytes.len() - 9..];
        assert!(pixels.iter().all(|&b| b == pixels[0]));
    }

    fn scene_spec(seed: u64) -> SceneSpec {
        SceneSpec {
            bands: 20,
            height: 6,
            width: 5,
            rank: 3,
            endmembers: EndmemberModel::GaussianBumps,
            concentration: 0.5,
            blur_passes: 0,
            mixing: Mixing::Linear,
            noise_snr_db: None,
            seed,
        }
    }

    #[test]
    fn linear_noiseless_scene_is_exact() {
        let (cube, e, a) = synth_scene(&scene_spec(7)).unwrap();
        let re = crate::metrics::reconstruction_error(cube.matrix(), &e.matrix, &a.matrix).unwrap();
        assert_eq!(re, 0.0);
        assert!(e.matrix.min() >= 0.0 && e.matrix.max() <= 1.0);
        for t in 0..cube.pixels() {
            let s: f64 = a.matrix.col(t).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bilinear_zero_strength_equals_linear() {
        let mut spec = scene_spec(8);
        spec.mixing = Mixing::Bilinear { strength: 0.0 };
        let (c1, _, _) = synth_scene(&spec).unwrap();
        spec.mixing = Mixing::Linear;
        let (c2, _, _) = synth_scene(&spec).unwrap();
        assert_eq!(c1.matrix(), c2.matrix());
    }

    #[test]
    fn scenes_are_deterministic() {
        let mut spec = scene_spec(9);
        spec.noise_snr_db = Some(30.0);
        spec.blur_passes = 2;
        let (c1, e1, a1) = synth_scene(&spec).unwrap();
        let (c2, e2, a2) = synth_scene(&spec).unwrap();
        assert_eq!(c1.matrix(), c2.matrix());
        assert_eq!(e1.matrix, e2.matrix);
        assert_eq!(a1.matrix, a2.matrix);
    }

    #[test]
    fn noise_hits_requested_snr() {
        let mut spec = scene_spec(10);
        spec.height = 20;
        spec.width = 20;
        spec.noise_snr_db = Some(20.0);
        let (noisy, e, a) = synth_scene(&spec).unwrap();
        let clean = e.matrix.matmul(&a.matrix);
        let signal = clean.iter().map(|v| v * v).sum::<f64>();
        let noise: f64 = noisy
            .matrix()
            .iter()
            .zip(clean.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let snr_db = 10.0 * (signal / noise).log10();
        // Clamping at zero discards a little noise, so allow a band.
        assert!((snr_db - 20.0).abs() < 1.5, "snr {snr_db}");
    }

    #[test]
    fn report_files_and_trace_length() {
        let dir = tempdir().unwrap();
        let spec = scene_spec(11);
        let (cube, e_true, _) = synth_scene(&spec).unwrap();
        let mut config = crate::factorization::SolverConfig::new(3, KernelSpec::Linear);
        config.iterations = 5;
        let result = crate::factorization::run(&config, &cube).unwrap();
        let eval = crate::metrics::evaluate(
            cube.matrix(),
            &result.endmembers.matrix,
            &result.abundances.matrix,
            &config.kernel,
            Some(&e_true.matrix),
        )
        .unwrap();
        write_report(dir.path(), &cube, &result, &eval).unwrap();

        let report = fs::read_to_string(dir.path().join("report.json")).unwrap();
        assert!(report.contains("\"cost_trace\""));
        let trace_line = report.lines().find(|l| l.contains("cost_trace")).unwrap();
        assert_eq!(trace_line.matches(',').count() + 1, 6, "{trace_line}");
        assert!(report.contains(&format!("\"re\": {}", result.re)));
        for n in 1..=3 {
            assert!(dir.path().join(format!("abundance_map_{n}.csv")).exists());
            assert!(dir.path().join(format!("abundance_map_{n}.pgm")).exists());
        }
        assert!(dir.path().join("endmembers.csv").exists());
        assert!(dir.path().join("abundances.csv").exists());

        // identical run, identical bytes
        let dir2 = tempdir().unwrap();
        let result2 = crate::factorization::run(&config, &cube).unwrap();
        let eval2 = crate::metrics::evaluate(
            cube.matrix(),
            &result2.endmembers.matrix,
            &result2.abundances.matrix,
            &config.kernel,
            Some(&e_true.matrix),
        )
        .unwrap();
        write_report(dir2.path(), &cube, &result2, &eval2).unwrap();
        let a = fs::read(dir.path().join("report.json")).unwrap();
        let b = fs::read(dir2.path().join("report.json")).unwrap();
        assert_eq!(a, b);
    }
}
