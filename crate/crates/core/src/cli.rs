//! The `cgp` command line: `mode`, `sample` and `verify`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{DomainTransform, RunConfig};
use crate::emulator::Emulator;
use crate::error::{CgpError, Result};
use crate::model::ConstraintKind;
use crate::posterior::{paths_with, quantile_envelope};
use crate::tmvn::{SamplerMethod, RNG_NAME};

/// Exit code of `verify` when a check fails.
pub const EXIT_VERIFY_FAILED: i32 = 1;

/// Absolute tolerance of `verify`, multiplied by `max(1, max |y|)`.
pub const VERIFY_TOL: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "cgp", version, about = "Constrained Gaussian-process emulators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the inequality mode and the kriging mean on the grid.
    Mode(CommonArgs),
    /// Sample constrained paths and write paths, summary and metadata.
    Sample(CommonArgs),
    /// Re-check interpolation and constraints of files in the output directory.
    Verify(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `sampler.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Mode(a) => cmd_mode(&a).map(|_| 0),
        Command::Sample(a) => cmd_sample(&a).map(|_| 0),
        Command::Verify(a) => cmd_verify(&a).map(|report| {
            print!("{}", report.render());
            if report.passed() {
                0
            } else {
                EXIT_VERIFY_FAILED
            }
        }),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| CgpError::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = RunConfig::from_json(&text)?;
    if let Some(s) = seed {
        cfg.sampler.seed = s;
    }
    Ok(cfg)
}

/// Headered CSV: input columns, then one output column.
pub fn load_data(path: &Path) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CgpError::Config(format!("{}: {e}", path.display())))?;
    let width = reader.headers().map_err(|e| CgpError::Config(e.to_string()))?.len();
    if width < 2 {
        return Err(CgpError::Config(format!(
            "{}: need at least one input column and one output column",
            path.display()
        )));
    }
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CgpError::Config(e.to_string()))?;
        let vals = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| CgpError::Config(format!("{}: row {}: '{f}' is not a number", path.display(), line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        outputs.push(vals[width - 1]);
        inputs.push(vals[..width - 1].to_vec());
    }
    Ok((inputs, outputs))
}

fn fit(args: &CommonArgs) -> Result<Emulator> {
    let cfg = load_config(&args.config, args.seed)?;
    let (x, y) = load_data(&args.data)?;
    if !x.is_empty() && x[0].len() != cfg.dim() {
        return Err(CgpError::Config(format!(
            "data has {} input columns but the kernel has {} length-scales",
            x[0].len(),
            cfg.dim()
        )));
    }
    Emulator::fit(cfg, x, y)
}

fn x_header(d: usize) -> String {
    (1..=d).map(|k| format!("x{k}")).collect::<Vec<_>>().join(",")
}

fn x_fields(x: &[f64]) -> String {
    x.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(contents.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn curve_csv(points: &[Vec<f64>], name: &str, values: &[f64]) -> String {
    let mut s = format!("{},{name}\n", x_header(points[0].len()));
    for (x, v) in points.iter().zip(values) {
        let _ = writeln!(s, "{},{v}", x_fields(x));
    }
    s
}

pub fn cmd_mode(args: &CommonArgs) -> Result<()> {
    let emu = fit(args)?;
    let grid = emu.default_grid()?;
    let op = emu.operator(&grid)?;
    let mode = op.apply(emu.mode().minimizer.as_slice())?;
    let kriging = op.apply(emu.kriging_coefficients().as_slice())?;
    let points = emu.grid_points(&grid);
    fs::create_dir_all(&args.out)?;
    write_file(&args.out.join("mode.csv"), &curve_csv(&points, "mode", &mode))?;
    write_file(&args.out.join("kriging_mean.csv"), &curve_csv(&points, "kriging_mean", &kriging))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Meta<'a> {
    command: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    seed: u64,
    domain: &'a DomainTransform,
    rng: &'static str,
    sampler_method: Option<SamplerMethod>,
    n_samples: usize,
    proposals: usize,
    acceptance_rate: Option<f64>,
    min_effective_sample_size: Option<f64>,
    n_observations: usize,
    n_coefficients: usize,
    n_inequalities: usize,
    mode_active_constraints: usize,
    qp_iterations: usize,
    grid_points: usize,
    files: Vec<&'static str>,
}

pub fn cmd_sample(args: &CommonArgs) -> Result<()> {
    let emu = fit(args)?;
    let cfg = emu.config();
    let seed = cfg.sampler.seed;
    let n = cfg.sampler.n_samples;
    let grid = emu.default_grid()?;
    let op = emu.operator(&grid)?;
    let points = emu.grid_points(&grid);
    let d = cfg.dim();
    let batch = if n == 0 { None } else { Some(emu.sample(seed, n)?) };
    let paths = match &batch {
        Some(b) => Some(paths_with(&op, b)?),
        None => None,
    };
    let mode = op.apply(emu.mode().minimizer.as_slice())?;
    let kriging = op.apply(emu.kriging_coefficients().as_slice())?;
    let mean = match batch.as_ref().and_then(|b| b.mean()) {
        Some(c) => Some(op.apply(c.as_slice())?),
        None => None,
    };
    let envelope = match &paths {
        Some(p) => quantile_envelope(p, cfg.alpha)?,
        None => None,
    };

    let mut paths_csv = String::new();
    if d == 1 {
        paths_csv.push_str("x1");
        for k in 0..n {
            let _ = write!(paths_csv, ",draw_{k}");
        }
        paths_csv.push('\n');
        if let Some(p) = &paths {
            for (j, x) in points.iter().enumerate() {
                paths_csv.push_str(&x_fields(x));
                for i in 0..p.nrows() {
                    let _ = write!(paths_csv, ",{}", p[(i, j)]);
                }
                paths_csv.push('\n');
            }
        }
    } else {
        let _ = writeln!(paths_csv, "{},value,draw_id", x_header(d));
        if let Some(p) = &paths {
            for i in 0..p.nrows() {
                for (j, x) in points.iter().enumerate() {
                    let _ = writeln!(paths_csv, "{},{},{i}", x_fields(x), p[(i, j)]);
                }
            }
        }
    }

    let mut summary = format!("{},kriging_mean,inequality_mean,mode,lower,upper\n", x_header(d));
    let opt = |v: Option<&Vec<f64>>, j: usize| v.map(|c| c[j].to_string()).unwrap_or_default();
    for (j, x) in points.iter().enumerate() {
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{}",
            x_fields(x),
            kriging[j],
            opt(mean.as_ref(), j),
            mode[j],
            opt(envelope.as_ref().map(|e| &e.0), j),
            opt(envelope.as_ref().map(|e| &e.1), j),
        );
    }

    let meta = Meta {
        command: "sample",
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        seed,
        domain: emu.transform(),
        rng: RNG_NAME,
        sampler_method: batch.as_ref().map(|b| b.method),
        n_samples: n,
        proposals: batch.as_ref().map_or(0, |b| b.proposals),
        acceptance_rate: batch.as_ref().and_then(|b| b.acceptance_rate),
        min_effective_sample_size: batch
            .as_ref()
            .and_then(|b| b.effective_sample_size.as_ref())
            .and_then(|e| e.iter().copied().reduce(f64::min)),
        n_observations: emu.inputs().len(),
        n_coefficients: emu.model().n_coefficients(),
        n_inequalities: emu.model().inequality().count(),
        mode_active_constraints: emu.mode().active_set.len(),
        qp_iterations: emu.mode().iterations,
        grid_points: points.len(),
        files: vec!["paths.csv", "summary.csv", "meta.json"],
    };
    let mut meta_json = serde_json::to_string_pretty(&meta).map_err(|e| CgpError::Io(e.to_string()))?;
    meta_json.push('\n');

    fs::create_dir_all(&args.out)?;
    write_file(&args.out.join("paths.csv"), &paths_csv)?;
    write_file(&args.out.join("summary.csv"), &summary)?;
    write_file(&args.out.join("meta.json"), &meta_json)?;
    Ok(())
}

/// One curve read back from an output file.
#[derive(Debug, Clone)]
pub struct Curve {
    pub name: String,
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub constrained: bool,
}

#[derive(Debug, Clone)]
pub struct CheckLine {
    pub curve: String,
    pub check: &'static str,
    pub max_violation: f64,
    pub location: Option<(usize, Vec<f64>)>,
    pub passed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub lines: Vec<CheckLine>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for l in &self.lines {
            let at = match &l.location {
                Some((i, x)) if !l.passed => format!(" at row {i} (x = {})", x_fields(x)),
                _ => String::new(),
            };
            let _ = writeln!(
                s,
                "{} {}: {} max violation {:.3e}{at}",
                if l.passed { "ok  " } else { "FAIL" },
                l.curve,
                l.check,
                l.max_violation
            );
        }
        let _ = writeln!(s, "{}", if self.passed() { "verify: PASS" } else { "verify: FAIL" });
        s
    }
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CgpError::Config(format!("{}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| CgpError::Config(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = reader
        .records()
        .map(|r| {
            r.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| CgpError::Config(e.to_string()))
        })
        .collect::<Result<Vec<Vec<String>>>>()?;
    Ok((header, rows))
}

fn num(s: &str, path: &Path) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| CgpError::Config(format!("{}: '{s}' is not a number", path.display())))
}

/// Reads the curves of every known output file present in `dir`.
pub fn read_curves(dir: &Path, d: usize) -> Result<Vec<Curve>> {
    let mut curves = Vec::new();
    for (file, column, constrained) in [("mode.csv", "mode", true), ("kriging_mean.csv", "kriging_mean", false)] {
        let path = dir.join(file);
        if path.exists() {
            curves.extend(read_wide(&path, d, &[(column, constrained)], file)?);
        }
    }
    let path = dir.join("summary.csv");
    if path.exists() {
        curves.extend(read_wide(
            &path,
            d,
            &[("kriging_mean", false), ("inequality_mean", true), ("mode", true)],
            "summary.csv",
        )?);
    }
    let path = dir.join("paths.csv");
    if path.exists() {
        let (header, rows) = read_table(&path)?;
        if header.len() >= d + 2 && header[d] == "value" {
            let mut by_draw: BTreeMap<usize, Curve> = BTreeMap::new();
            for row in &rows {
                let id: usize = row[d + 1]
                    .parse()
                    .map_err(|_| CgpError::Config(format!("paths.csv: bad draw id '{}'", row[d + 1])))?;
                let c = by_draw.entry(id).or_insert_with(|| Curve {
                    name: format!("paths.csv draw {id}"),
                    points: Vec::new(),
                    values: Vec::new(),
                    constrained: true,
                });
                c.points.push(row[..d].iter().map(|s| num(s, &path)).collect::<Result<_>>()?);
                c.values.push(num(&row[d], &path)?);
            }
            curves.extend(by_draw.into_values());
        } else {
            let cols: Vec<(String, bool)> = header[d..].iter().map(|h| (h.clone(), true)).collect();
            let refs: Vec<(&str, bool)> = cols.iter().map(|(h, c)| (h.as_str(), *c)).collect();
            curves.extend(read_wide(&path, d, &refs, "paths.csv")?);
        }
    }
    Ok(curves)
}

fn read_wide(path: &Path, d: usize, columns: &[(&str, bool)], label: &str) -> Result<Vec<Curve>> {
    let (header, rows) = read_table(path)?;
    if header.len() < d || header[..d].iter().enumerate().any(|(k, h)| *h != format!("x{}", k + 1)) {
        return Err(CgpError::Config(format!("{}: expected columns x1..x{d} first", path.display())));
    }
    let points = rows
        .iter()
        .map(|r| r[..d].iter().map(|s| num(s, path)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for &(col, constrained) in columns {
        let Some(idx) = header.iter().position(|h| h == col) else {
            continue;
        };
        if rows.iter().all(|r| r[idx].is_empty()) {
            continue;
        }
        let values = rows.iter().map(|r| num(&r[idx], path)).collect::<Result<Vec<_>>>()?;
        out.push(Curve {
            name: format!("{label} {col}"),
            points: points.clone(),
            values,
            constrained,
        });
    }
    Ok(out)
}

pub fn cmd_verify(args: &CommonArgs) -> Result<VerifyReport> {
    let cfg = load_config(&args.config, args.seed)?;
    let (x, y) = load_data(&args.data)?;
    let curves = read_curves(&args.out, cfg.dim())?;
    if curves.is_empty() {
        return Err(CgpError::Config(format!("no output files found in {}", args.out.display())));
    }
    let kind = cfg.constraint.to_kind()?;
    Ok(verify_curves(&curves, &kind, &x, &y))
}

/// Interpolation of `(x, y)` and the functional constraint on every curve.
pub fn verify_curves(curves: &[Curve], kind: &ConstraintKind, x: &[Vec<f64>], y: &[f64]) -> VerifyReport {
    let scale = y.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let tol = VERIFY_TOL * scale;
    let mut report = VerifyReport::default();
    for c in curves {
        let (worst, loc) = interpolation_error(c, x, y);
        report.lines.push(CheckLine {
            curve: c.name.clone(),
            check: "interpolation",
            max_violation: worst,
            location: loc,
            passed: worst <= tol,
        });
        if c.constrained {
            let (worst, loc) = constraint_violation(c, kind);
            report.lines.push(CheckLine {
                curve: c.name.clone(),
                check: kind.name(),
                max_violation: worst,
                location: loc,
                passed: worst <= tol,
            });
        }
    }
    report
}

fn same_point(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(u, v)| (u - v).abs() <= 1e-9 * v.abs().max(1.0))
}

fn interpolation_error(c: &Curve, x: &[Vec<f64>], y: &[f64]) -> (f64, Option<(usize, Vec<f64>)>) {
    let mut worst = 0.0;
    let mut loc = None;
    for (xi, &yi) in x.iter().zip(y) {
        let rows: Vec<usize> = (0..c.points.len()).filter(|&r| same_point(&c.points[r], xi)).collect();
        if rows.is_empty() {
            return (f64::INFINITY, Some((0, xi.clone())));
        }
        for r in rows {
            let e = (c.values[r] - yi).abs();
            if e > worst || loc.is_none() {
                worst = f64::max(worst, e);
                loc = Some((r + 1, c.points[r].clone()));
            }
        }
    }
    (worst, loc)
}

/// Largest violation (positive means violated) and its 1-based row.
fn constraint_violation(c: &Curve, kind: &ConstraintKind) -> (f64, Option<(usize, Vec<f64>)>) {
    let mut worst = f64::NEG_INFINITY;
    let mut loc = None;
    let mut note = |v: f64, r: usize| {
        if v > worst {
            worst = v;
            loc = Some((r + 1, c.points[r].clone()));
        }
    };
    match kind {
        ConstraintKind::Bounds { lower, upper } => {
            for (r, &v) in c.values.iter().enumerate() {
                note((lower - v).max(v - upper), r);
            }
        }
        ConstraintKind::MonotoneC0(dir) | ConstraintKind::MonotoneC1(dir) => {
            for line in lines_along(c, 0) {
                for w in line.windows(2) {
                    note(-dir.sign() * (c.values[w[1]] - c.values[w[0]]), w[1]);
                }
            }
        }
        ConstraintKind::Convex(curv) => {
            for line in lines_along(c, 0) {
                for w in line.windows(3) {
                    let (x0, x1, x2) = (c.points[w[0]][0], c.points[w[1]][0], c.points[w[2]][0]);
                    let chord = ((x2 - x1) * c.values[w[0]] + (x1 - x0) * c.values[w[2]]) / (x2 - x0);
                    note(curv.sign() * (c.values[w[1]] - chord), w[1]);
                }
            }
        }
        ConstraintKind::Isotonic { dims, directions } => {
            for (&k, dir) in dims.iter().zip(directions) {
                for line in lines_along(c, k) {
                    for w in line.windows(2) {
                        note(-dir.sign() * (c.values[w[1]] - c.values[w[0]]), w[1]);
                    }
                }
            }
        }
    }
    if worst == f64::NEG_INFINITY {
        (0.0, None)
    } else {
        (worst.max(0.0), loc)
    }
}

/// Row indices grouped by all coordinates except `k`, each group sorted by
/// coordinate `k`.
fn lines_along(c: &Curve, k: usize) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
    for (r, p) in c.points.iter().enumerate() {
        let key = p
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, v)| v.to_bits())
            .collect();
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_values()
        .map(|mut rows| {
            rows.sort_by(|&a, &b| c.points[a][k].total_cmp(&c.points[b][k]));
            rows
        })
        .collect()
}

/// Applies `CGP_THREADS` to the global thread pool.
pub fn configure_threads() {
    if let Ok(v) = std::env::var("CGP_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("CGP_THREADS ignored: {e}");
                }
            }
            _ => log::warn!("CGP_THREADS = '{v}' is not a positive integer; ignored"),
        }
    }
}
