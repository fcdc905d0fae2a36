//! The `run`, `compare` and `plotdata` subcommands.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use mrenkf::experiment::{
    chi_square_uniformity, run_twin_experiment, time_averaged_l2, L2Point, LevelSnr, MetricsBundle,
    TwinExperimentConfig, TwinRun,
};
use mrenkf::io;
use mrenkf::wavelet::wavedec;
use mrenkf::KsState;

use crate::config::{self, Assignment};
use crate::error::{CliError, CliResult};
use crate::manifest::{Manifest, OutputFile, MANIFEST_FILE};
use crate::plot::{self, Mark, Series};

/// Environment variable naming the root directory for default run
/// directories.
pub const OUT_ENV: &str = "MRENKF_OUT";
pub const DEFAULT_OUT_ROOT: &str = "runs";
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub filter: Option<String>,
    /// `KEY=VALUE` overrides, applied last.
    pub overrides: Vec<String>,
    pub out: Option<PathBuf>,
    /// Root for the default output directory, usually from [`OUT_ENV`].
    pub out_root: Option<PathBuf>,
    pub verbose: bool,
    /// Rerun the configuration recorded in this manifest and check that the
    /// outputs hash identically.
    pub replay: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub config: TwinExperimentConfig,
    pub metrics: MetricsBundle,
    pub manifest: Manifest,
    /// Number of outputs checked against the replayed manifest.
    pub replay_verified: Option<usize>,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "run directory      {}", self.dir.display())?;
        writeln!(f, "filter             {}", self.config.filter)?;
        writeln!(f, "seed               {}", self.config.seed)?;
        writeln!(f, "cycles             {}", self.metrics.cycles.len())?;
        writeln!(
            f,
            "time-averaged L2   {:.6}",
            self.metrics.time_averaged_l2()
        )?;
        writeln!(
            f,
            "rank chi-square    {:.3}",
            self.metrics.rank_chi_square()
        )?;
        writeln!(f, "obs noise std      {:.6}", self.metrics.obs_noise_std)?;
        if let Some(n) = self.replay_verified {
            writeln!(f, "replay             {n} outputs match the manifest")?;
        }
        Ok(())
    }
}

/// Layers defaults, the config file and the command-line flags.
pub fn assemble_assignments(opts: &RunOptions) -> CliResult<Vec<Assignment>> {
    let mut out = match &opts.config {
        Some(path) => config::read_file(path)?,
        None => Vec::new(),
    };
    if let Some(seed) = opts.seed {
        out.push(Assignment::new(
            "experiment.seed",
            seed.to_string(),
            "--seed",
        ));
    }
    if let Some(filter) = &opts.filter {
        out.push(Assignment::new(
            "experiment.filter",
            filter.as_str(),
            "--filter",
        ));
    }
    for text in &opts.overrides {
        out.push(Assignment::from_override(text)?);
    }
    Ok(out)
}

fn default_dir(opts: &RunOptions, cfg: &TwinExperimentConfig) -> PathBuf {
    let root = opts
        .out_root
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT));
    root.join(format!("{}-seed{}", cfg.filter, cfg.seed))
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> mrenkf::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

/// Every output file of a run, in manifest order.
pub fn render_outputs(run: &TwinRun, verbose: bool) -> CliResult<Vec<(String, Vec<u8>)>> {
    let m = &run.metrics;
    let observations: Vec<KsState> = run
        .observations
        .iter()
        .map(|o| KsState {
            u: o.noisy.clone(),
            t: o.t,
        })
        .collect();
    let mut files = vec![
        (
            CONFIG_FILE.to_string(),
            config::render(&run.config).into_bytes(),
        ),
        (
            "metrics.csv".to_string(),
            csv_bytes(|w| io::write_metrics_csv(w, &m.cycles))?,
        ),
        (
            "l2_series.csv".to_string(),
            csv_bytes(|w| io::write_l2_series_csv(w, &m.l2_series))?,
        ),
        (
            "rank_histogram.csv".to_string(),
            csv_bytes(|w| io::write_rank_histogram_csv(w, &m.rank_histogram))?,
        ),
        (
            "snr.csv".to_string(),
            csv_bytes(|w| io::write_snr_csv(w, &m.snr))?,
        ),
        (
            "reference.csv".to_string(),
            csv_bytes(|w| io::write_trajectory_csv(w, &run.reference.trajectory))?,
        ),
        (
            "observations.csv".to_string(),
            csv_bytes(|w| io::write_trajectory_csv(w, &observations))?,
        ),
        (
            "markers.csv".to_string(),
            csv_bytes(|w| io::write_markers_csv(w, &run.markers))?,
        ),
        (
            "final_ensemble.csv".to_string(),
            csv_bytes(|w| io::write_ensemble_csv(w, &run.final_ensemble))?,
        ),
    ];
    if verbose {
        files.push((
            "scale_diagnostics.csv".to_string(),
            csv_bytes(|w| io::write_scale_diagnostics_csv(w, &run.scale_diagnostics))?,
        ));
        if let Some(first) = run.observations.first() {
            let coeffs = wavedec(
                &first.noisy,
                &run.config.noise.filter(),
                run.config.noise.levels,
            )?;
            files.push((
                "observation_coeffs_cycle1.csv".to_string(),
                csv_bytes(|w| io::write_coefficients_csv(w, &coeffs))?,
            ));
        }
    }
    Ok(files)
}

/// Writes the files into a staging directory inside `dir` and moves them
/// into place only once all of them were written; the staging directory is
/// removed on every path.
fn publish(dir: &Path, files: &[(String, Vec<u8>)]) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let staging = dir.join(".staging");
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| CliError::io(&staging, e))?;
    }
    fs::create_dir(&staging).map_err(|e| CliError::io(&staging, e))?;
    let result = (|| {
        for (name, bytes) in files {
            let path = staging.join(name);
            let mut f = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
            f.write_all(bytes).map_err(|e| CliError::io(&path, e))?;
            f.sync_all().map_err(|e| CliError::io(&path, e))?;
        }
        for (name, _) in files {
            let target = dir.join(name);
            fs::rename(staging.join(name), &target).map_err(|e| CliError::io(&target, e))?;
        }
        Ok(())
    })();
    let _ = fs::remove_dir_all(&staging);
    result
}

pub fn run(opts: &RunOptions) -> CliResult<RunSummary> {
    let started = chrono::Utc::now();
    let (cfg, replayed) = match &opts.replay {
        Some(path) => {
            if opts.config.is_some()
                || opts.seed.is_some()
                || opts.filter.is_some()
                || !opts.overrides.is_empty()
            {
                return Err(CliError::ConfigGeneral(
                    "--replay takes its configuration from the manifest; drop --config, --seed, --filter and --set"
                        .into(),
                ));
            }
            let manifest = Manifest::read(path)?;
            let cfg = config::resolve(&manifest.assignments(&path.display().to_string()))?;
            (cfg, Some((path.clone(), manifest)))
        }
        None => (config::resolve(&assemble_assignments(opts)?)?, None),
    };
    let dir = match (&opts.out, &replayed) {
        (Some(dir), _) => dir.clone(),
        (None, Some((path, _))) => path.parent().unwrap_or(Path::new(".")).join("replay"),
        (None, None) => default_dir(opts, &cfg),
    };

    let run = run_twin_experiment(&cfg)?;
    let files = render_outputs(&run, opts.verbose)?;
    let outputs: Vec<OutputFile> = files
        .iter()
        .map(|(name, bytes)| OutputFile::describe(name, bytes))
        .collect();

    let replay_verified = match &replayed {
        Some((path, old)) => Some(verify_replay(path, old, &outputs)?),
        None => None,
    };

    let manifest = Manifest {
        tool: "mrenkf".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        filter: cfg.filter.to_string(),
        config: config::to_pairs(&cfg).into_iter().collect(),
        started: started.to_rfc3339(),
        finished: chrono::Utc::now().to_rfc3339(),
        outputs,
        cycle_seconds: run.metrics.cycle_seconds.clone(),
    };
    let mut all = files;
    all.push((MANIFEST_FILE.to_string(), manifest.to_json()?.into_bytes()));
    publish(&dir, &all)?;

    Ok(RunSummary {
        dir,
        config: cfg,
        metrics: run.metrics,
        manifest,
        replay_verified,
    })
}

/// Every output recorded in `old` must be reproduced byte for byte.
fn verify_replay(path: &Path, old: &Manifest, new: &[OutputFile]) -> CliResult<usize> {
    let mut problems = Vec::new();
    for o in &old.outputs {
        match new.iter().find(|n| n.file == o.file) {
            Some(n) if n == o => {}
            Some(n) => problems.push(format!("{} (sha256 {} → {})", o.file, o.sha256, n.sha256)),
            None => problems.push(format!(
                "{} (not produced; rerun with the same flags)",
                o.file
            )),
        }
    }
    if problems.is_empty() {
        Ok(old.outputs.len())
    } else {
        Err(CliError::Runtime(format!(
            "replay of {} does not reproduce: {}",
            path.display(),
            problems.join(", ")
        )))
    }
}

fn open(dir: &Path, name: &str) -> CliResult<fs::File> {
    let path = dir.join(name);
    fs::File::open(&path).map_err(|e| CliError::io(&path, e))
}

fn read_with<T>(
    dir: &Path,
    name: &str,
    read: impl FnOnce(fs::File) -> mrenkf::Result<T>,
) -> CliResult<T> {
    read(open(dir, name)?)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.join(name).display())))
}

/// The resolved configuration stored with a run.
pub fn load_run_config(dir: &Path) -> CliResult<TwinExperimentConfig> {
    config::resolve(&config::read_file(&dir.join(CONFIG_FILE))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Winner {
    A,
    B,
    Tie,
}

impl fmt::Display for Winner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Winner::A => "A",
            Winner::B => "B",
            Winner::Tie => "=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub metric: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// Decided for lower-is-better metrics only.
    pub winner: Option<Winner>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub label_a: String,
    pub label_b: String,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn row(&self, metric: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "A = {}", self.label_a)?;
        writeln!(f, "B = {}", self.label_b)?;
        writeln!(
            f,
            "{:<22} {:>14} {:>14} {:>14}  better",
            "metric", "A", "B", "B - A"
        )?;
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        for r in &self.rows {
            let delta = match (r.a, r.b) {
                (Some(a), Some(b)) => format!("{:.6}", b - a),
                _ => "-".to_string(),
            };
            writeln!(
                f,
                "{:<22} {:>14} {:>14} {:>14}  {}",
                r.metric,
                cell(r.a),
                cell(r.b),
                delta,
                r.winner.map_or_else(String::new, |w| w.to_string())
            )?;
        }
        Ok(())
    }
}

fn lower_wins(a: f64, b: f64) -> Winner {
    if a < b {
        Winner::A
    } else if b < a {
        Winner::B
    } else {
        Winner::Tie
    }
}

struct RunData {
    label: String,
    l2: Vec<L2Point>,
    ranks: Vec<u64>,
    snr: Vec<LevelSnr>,
}

fn load_run(dir: &Path) -> CliResult<(Manifest, RunData)> {
    let manifest = Manifest::read_dir(dir)?;
    let data = RunData {
        label: format!(
            "{} ({} seed {})",
            dir.display(),
            manifest.filter,
            manifest.seed
        ),
        l2: read_with(dir, "l2_series.csv", io::read_l2_series_csv)?,
        ranks: read_with(dir, "rank_histogram.csv", io::read_rank_histogram_csv)?,
        snr: read_with(dir, "snr.csv", io::read_snr_csv)?,
    };
    Ok((manifest, data))
}

/// Compares two runs that share a reference trajectory and observations.
pub fn compare(dir_a: &Path, dir_b: &Path) -> CliResult<Comparison> {
    let (ma, a) = load_run(dir_a)?;
    let (mb, b) = load_run(dir_b)?;
    for file in ["reference.csv", "observations.csv"] {
        let (ha, hb) = (ma.output(file), mb.output(file));
        if ha.is_none() || ha.map(|o| &o.sha256) != hb.map(|o| &o.sha256) {
            return Err(CliError::Runtime(format!(
                "refusing to compare: {file} differs between the runs (seed {} vs {}); \
                 only runs sharing the truth and observations are comparable",
                ma.seed, mb.seed
            )));
        }
    }
    let (la, lb) = (time_averaged_l2(&a.l2), time_averaged_l2(&b.l2));
    let (ca, cb) = (
        chi_square_uniformity(&a.ranks),
        chi_square_uniformity(&b.ranks),
    );
    let mut rows = vec![
        ComparisonRow {
            metric: "time-averaged L2".into(),
            a: Some(la),
            b: Some(lb),
            winner: Some(lower_wins(la, lb)),
        },
        ComparisonRow {
            metric: "rank chi-square".into(),
            a: Some(ca),
            b: Some(cb),
            winner: Some(lower_wins(ca, cb)),
        },
    ];
    for sa in &a.snr {
        let sb = b.snr.iter().find(|s| s.level == sa.level);
        rows.push(ComparisonRow {
            metric: format!("SNR level {}", sa.level),
            a: sa.avg_snr,
            b: sb.and_then(|s| s.avg_snr),
            winner: None,
        });
    }
    Ok(Comparison {
        label_a: a.label,
        label_b: b.label,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Trajectory,
    Pointwise,
    RankHist,
    L2,
}

fn write_file(path: &Path, contents: &str) -> CliResult<PathBuf> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

/// Writes gnuplot-ready whitespace-delimited data (and optionally an SVG)
/// for one or, for `l2`, two runs. Returns the written paths.
pub fn plotdata(
    dirs: &[PathBuf],
    kind: PlotKind,
    out: Option<&Path>,
    svg: bool,
) -> CliResult<Vec<PathBuf>> {
    let first = dirs
        .first()
        .ok_or_else(|| CliError::ConfigGeneral("plotdata needs a run directory".into()))?;
    if dirs.len() > 2 || (dirs.len() == 2 && kind != PlotKind::L2) {
        return Err(CliError::ConfigGeneral(
            "only the l2 plot overlays two run directories".into(),
        ));
    }
    let out = out.map_or_else(|| first.join("plots"), Path::to_path_buf);
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    match kind {
        PlotKind::Trajectory => plot_trajectory(first, &out, svg),
        PlotKind::Pointwise => plot_pointwise(first, &out, svg),
        PlotKind::RankHist => plot_rank_histogram(first, &out, svg),
        PlotKind::L2 => plot_l2(dirs, &out, svg),
    }
}

fn plot_trajectory(dir: &Path, out: &Path, svg: bool) -> CliResult<Vec<PathBuf>> {
    let cfg = load_run_config(dir)?;
    let states = read_with(dir, "reference.csv", io::read_trajectory_csv)?;
    let grid = cfg.ks.grid();
    let mut text = String::from("# t x u  (one block per time)\n");
    for s in &states {
        for (x, u) in grid.iter().zip(&s.u) {
            text.push_str(&format!("{} {} {}\n", s.t, x, u));
        }
        text.push('\n');
    }
    let mut written = vec![write_file(&out.join("trajectory.dat"), &text)?];
    if svg {
        let rows: Vec<Vec<f64>> = states.iter().map(|s| s.u.clone()).collect();
        let t1 = states.last().map_or(1.0, |s| s.t);
        let half = std::f64::consts::PI * cfg.ks.l;
        let picture = plot::heatmap(
            "reference solution",
            "x",
            "t",
            [-half, half, 0.0, t1],
            &rows,
            300,
            256,
        );
        written.push(write_file(&out.join("trajectory.svg"), &picture)?);
    }
    Ok(written)
}

fn plot_pointwise(dir: &Path, out: &Path, svg: bool) -> CliResult<Vec<PathBuf>> {
    let cfg = load_run_config(dir)?;
    let track = read_with(dir, "markers.csv", io::read_markers_csv)?;
    let observations = read_with(dir, "observations.csv", io::read_trajectory_csv)?;
    let half_step = cfg.ks.dt / 2.0;
    let obs_at = |t: f64| observations.iter().find(|o| (o.t - t).abs() < half_step);
    let m = track
        .members
        .first()
        .and_then(|s| s.first())
        .map_or(0, Vec::len);
    let mut written = Vec::new();
    for (k, (&x, &index)) in track.x.iter().zip(&track.indices).enumerate() {
        let mut text = format!("# marker {k} at x = {x} (grid index {index})\n# t truth obs");
        for a in 1..=m {
            text.push_str(&format!(" member_{a}"));
        }
        text.push('\n');
        let mut truth = Vec::new();
        let mut obs = Vec::new();
        let mut members: Vec<Vec<(f64, f64)>> = vec![Vec::new(); m];
        for (step, &t) in track.t.iter().enumerate() {
            let y = obs_at(t).map_or(f64::NAN, |o| o.u[index]);
            text.push_str(&format!("{t} {} {y}", track.truth[step][k]));
            for (a, v) in track.members[step][k].iter().enumerate() {
                text.push_str(&format!(" {v}"));
                members[a].push((t, *v));
            }
            text.push('\n');
            truth.push((t, track.truth[step][k]));
            obs.push((t, y));
        }
        written.push(write_file(
            &out.join(format!("pointwise_marker_{k}.dat")),
            &text,
        )?);
        if svg {
            let mut series: Vec<Series> = members
                .into_iter()
                .map(|points| Series {
                    label: String::new(),
                    points,
                    color: "#bbbbbb",
                    mark: Mark::Line(0.6),
                })
                .collect();
            series.push(Series {
                label: "truth".into(),
                points: truth,
                color: "black",
                mark: Mark::Line(1.6),
            });
            series.push(Series {
                label: "observation".into(),
                points: obs,
                color: "#d62728",
                mark: Mark::Dots(2.5),
            });
            let picture = plot::line_chart(&format!("u(t) at x = {x:.3}"), "t", "u", &series);
            written.push(write_file(
                &out.join(format!("pointwise_marker_{k}.svg")),
                &picture,
            )?);
        }
    }
    Ok(written)
}

fn plot_rank_histogram(dir: &Path, out: &Path, svg: bool) -> CliResult<Vec<PathBuf>> {
    let counts = read_with(dir, "rank_histogram.csv", io::read_rank_histogram_csv)?;
    let mut text = String::from("# rank count\n");
    for (i, c) in counts.iter().enumerate() {
        text.push_str(&format!("{i} {c}\n"));
    }
    let mut written = vec![write_file(&out.join("rank_histogram.dat"), &text)?];
    if svg {
        let title = format!(
            "rank histogram (chi-square {:.1})",
            chi_square_uniformity(&counts)
        );
        written.push(write_file(
            &out.join("rank_histogram.svg"),
            &plot::bar_chart(&title, &counts),
        )?);
    }
    Ok(written)
}

fn plot_l2(dirs: &[PathBuf], out: &Path, svg: bool) -> CliResult<Vec<PathBuf>> {
    let mut runs = Vec::new();
    for dir in dirs {
        let (manifest, data) = load_run(dir)?;
        runs.push((
            format!("{} seed {}", manifest.filter, manifest.seed),
            data.l2,
        ));
    }
    let steps: Vec<usize> = runs[0].1.iter().map(|p| p.step).collect();
    if runs
        .iter()
        .any(|(_, l2)| l2.iter().map(|p| p.step).ne(steps.iter().copied()))
    {
        return Err(CliError::Runtime(
            "the runs have different time grids".into(),
        ));
    }
    let mut text = String::from("# step t");
    for (label, _) in &runs {
        text.push_str(&format!(" l2[{}]", label.replace(' ', "_")));
    }
    text.push('\n');
    for (i, p) in runs[0].1.iter().enumerate() {
        text.push_str(&format!("{} {}", p.step, p.t));
        for (_, l2) in &runs {
            text.push_str(&format!(" {}", l2[i].l2));
        }
        text.push('\n');
    }
    let mut written = vec![write_file(&out.join("l2.dat"), &text)?];
    if svg {
        let colors = ["#1f77b4", "#d62728"];
        let series: Vec<Series> = runs
            .iter()
            .zip(colors)
            .map(|((label, l2), color)| Series {
                label: label.clone(),
                points: l2.iter().map(|p| (p.t, p.l2)).collect(),
                color,
                mark: Mark::Line(1.4),
            })
            .collect();
        let picture = plot::line_chart("L2 discrepancy of the ensemble mean", "t", "L2", &series);
        written.push(write_file(&out.join("l2.svg"), &picture)?);
    }
    Ok(written)
}
