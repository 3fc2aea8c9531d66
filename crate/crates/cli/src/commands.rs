use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use diffgan_core::analytic::{
    jsd_diffused, jsd_original, optimal_discriminator, theta_grid, wasserstein_reference, JsdMethod,
};
use diffgan_core::data::{self, fmt_real, DEFAULT_COMP_STD, DEFAULT_K_SIGMA};
use diffgan_core::experiment::{eval_seed, grid_dataset, DEFAULT_DATA_SIZE, DEFAULT_EVAL_SAMPLES};
use diffgan_core::gradcheck::run_suite;
use diffgan_core::trainer::{sample_generator, TrainState};
use diffgan_core::{coverage, DiffusionSchedule, Error, GanConfig, GaussGrid, Result};
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::config::{self, CommonArgs, PolicyArgs, ScheduleArgs, TrainArgs};
use crate::svg::{Chart, Mark, Series};

pub const METADATA_FILE: &str = "metadata.json";

#[derive(Serialize)]
struct Metadata<'a, O: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    argv: Vec<String>,
    config: &'a GanConfig,
    options: &'a O,
}

fn prepare(common: &CommonArgs) -> Result<()> {
    fs::create_dir_all(&common.out)?;
    Ok(())
}

fn write_metadata<O: Serialize>(out: &Path, command: &str, config: &GanConfig, options: &O) -> Result<()> {
    let meta = Metadata {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        argv: std::env::args().skip(1).collect(),
        config,
        options,
    };
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    fs::write(out.join(METADATA_FILE), text)?;
    Ok(())
}

fn write_json<T: Serialize>(path: PathBuf, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn r(x: f64) -> String {
    fmt_real(x)
}

fn scatter_points(points: ArrayView2<f64>) -> Vec<(f64, f64)> {
    points.rows().into_iter().map(|r| (r[0], r[1])).collect()
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainCmd {
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub train: TrainArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub schedule: ScheduleArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub policy: PolicyArgs,
    /// Headerless two-column CSV to train on instead of the 25-Gaussians.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Number of 25-Gaussians training points.
    #[arg(long, default_value_t = DEFAULT_DATA_SIZE)]
    pub data_size: usize,
    #[arg(long, default_value_t = DEFAULT_COMP_STD)]
    pub comp_std: f64,
    /// Generated points written and scored after training.
    #[arg(long, default_value_t = DEFAULT_EVAL_SAMPLES)]
    pub samples: usize,
    /// High-quality radius in units of the component std.
    #[arg(long, default_value_t = DEFAULT_K_SIGMA)]
    pub k_sigma: f64,
    /// Also write scatter.svg.
    #[arg(long)]
    pub svg: bool,
}

pub fn train(cmd: &TrainCmd) -> Result<()> {
    let mut config = config::load(&cmd.common)?;
    cmd.train.apply(&mut config);
    cmd.schedule.apply(&mut config);
    cmd.policy.apply(&mut config);
    config.validate()?;
    let grid = GaussGrid::grid25(cmd.comp_std)?;
    let dataset = match &cmd.data {
        Some(path) => data::load_csv(path)?,
        None => grid_dataset(&grid, cmd.data_size, config.seed),
    };
    if dataset.nrows() == 0 {
        return Err(Error::Data("training set is empty".into()));
    }
    let out = &cmd.common.out;
    prepare(&cmd.common)?;
    write_metadata(out, "train", &config, cmd)?;

    // Same draw order as `trainer::train`, kept local so the trace survives a failure.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = TrainState::new(config.clone(), dataset.ncols(), &mut rng)?;
    let mut failure = None;
    for _ in 0..config.total_steps {
        if let Err(e) = state.train_step(dataset.view(), &mut rng) {
            failure = Some(e);
            break;
        }
    }
    fs::write(out.join("trace.csv"), state.trace.to_csv())?;
    fs::write(out.join("t_schedule.csv"), state.trace.schedule_csv())?;
    if let Some(e) = failure {
        return Err(e);
    }
    state.generator.save_json(out.join("generator.json"))?;
    state.discriminator.save_json(out.join("discriminator.json"))?;

    let samples =
        sample_generator(&state.generator, cmd.samples, &mut ChaCha8Rng::seed_from_u64(eval_seed(config.seed)))?;
    data::save_csv(samples.view(), out.join("samples.csv"))?;
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("generator produced non-finite samples".into()));
    }
    if samples.ncols() == 2 {
        let report = coverage(samples.view(), &grid, cmd.k_sigma)?;
        write_json(out.join("coverage.json"), &report)?;
        println!(
            "modes {}/{} high-quality {:.4} final T {}",
            report.modes_covered,
            report.num_modes,
            report.high_quality_fraction,
            state.policy.t_current()
        );
    } else {
        println!("final T {}", state.policy.t_current());
    }
    if cmd.svg && samples.ncols() == 2 {
        let shown = dataset.nrows().min(samples.nrows().max(1));
        let mut chart = Chart::new("real vs generated", "x", "y");
        chart
            .push(Series::new("real", scatter_points(dataset.slice(ndarray::s![..shown, ..])), Mark::Dots))
            .push(Series::new("generated", scatter_points(samples.view()), Mark::Dots));
        fs::write(out.join("scatter.svg"), chart.render())?;
    }
    Ok(())
}

// ---------------------------------------------------------------- toy-jsd

#[derive(Debug, Clone, Args, Serialize)]
pub struct ToyJsdCmd {
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value_t = 401)]
    pub theta_points: usize,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub theta_min: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub theta_max: f64,
    /// Timesteps, comma separated. `0` means no diffusion.
    #[arg(long = "t", default_value = "0,1,50,200,800", value_delimiter = ',')]
    pub timesteps: Vec<usize>,
    /// Gauss–Legendre nodes per panel.
    #[arg(long, default_value_t = 32)]
    pub nodes: usize,
    /// When positive, add Monte Carlo rows with this many draws per component.
    #[arg(long, default_value_t = 0)]
    pub mc_samples: usize,
    #[arg(long)]
    pub svg: bool,
}

pub fn toy_jsd(cmd: &ToyJsdCmd) -> Result<()> {
    let mut config = config::load(&cmd.common)?;
    cmd.schedule.apply(&mut config);
    let schedule = config.schedule.build()?;
    let thetas = theta_grid(cmd.theta_points, cmd.theta_min, cmd.theta_max);
    if thetas.iter().any(|t| !t.is_finite()) {
        return Err(Error::Param("theta range must be finite".into()));
    }

    let mut csv = String::from("theta,t,jsd,method,std_err\n");
    let mut chart = Chart::new("JS divergence of the diffused toy", "theta", "nats");
    let mut row = 0u64;
    for &t in &cmd.timesteps {
        let mut line = Vec::with_capacity(thetas.len());
        for &theta in &thetas {
            let (value, method, std_err) = if t == 0 {
                (jsd_original(theta), "closed_form", 0.0)
            } else {
                let e = jsd_diffused(theta, t, &schedule, JsdMethod::Quadrature { nodes: cmd.nodes })?;
                (e.value, e.method.as_str(), e.std_err)
            };
            csv.push_str(&format!("{},{t},{},{method},{}\n", r(theta), r(value), r(std_err)));
            line.push((theta, value));
        }
        if cmd.mc_samples > 0 && t > 0 {
            for &theta in &thetas {
                let seed = config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(row);
                row += 1;
                let e = jsd_diffused(theta, t, &schedule, JsdMethod::MonteCarlo { samples: cmd.mc_samples, seed })?;
                csv.push_str(&format!("{},{t},{},{},{}\n", r(theta), r(e.value), e.method.as_str(), r(e.std_err)));
            }
        }
        chart.push(Series::new(format!("t = {t}"), line, Mark::Line));
    }

    let mut reference = String::from("theta,jsd_original,wasserstein\n");
    for &theta in &thetas {
        reference.push_str(&format!("{},{},{}\n", r(theta), r(jsd_original(theta)), r(wasserstein_reference(theta))));
    }

    let out = &cmd.common.out;
    prepare(&cmd.common)?;
    write_metadata(out, "toy-jsd", &config, cmd)?;
    fs::write(out.join("jsd.csv"), csv)?;
    fs::write(out.join("reference.csv"), reference)?;
    if cmd.svg {
        chart.push(Series::new("JSD original", thetas.iter().map(|&x| (x, jsd_original(x))).collect(), Mark::Dashed));
        fs::write(out.join("jsd.svg"), chart.render())?;
        let mut w = Chart::new("Wasserstein reference", "theta", "W1");
        w.push(Series::new(
            "W1 = |theta|",
            thetas.iter().map(|&x| (x, wasserstein_reference(x))).collect(),
            Mark::Dashed,
        ));
        fs::write(out.join("wasserstein.svg"), w.render())?;
    }
    Ok(())
}

// ---------------------------------------------------------------- toy-disc

#[derive(Debug, Clone, Args, Serialize)]
pub struct ToyDiscCmd {
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub schedule: ScheduleArgs,
    /// Offset of the fake distribution.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub theta: f64,
    #[arg(long, default_value_t = 401)]
    pub y_points: usize,
    #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
    pub y_min: f64,
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    pub y_max: f64,
    /// Timesteps (at least 1), comma separated.
    #[arg(long = "t", default_value = "1,50,200,800", value_delimiter = ',')]
    pub timesteps: Vec<usize>,
    #[arg(long)]
    pub svg: bool,
}

pub fn toy_disc(cmd: &ToyDiscCmd) -> Result<()> {
    let mut config = config::load(&cmd.common)?;
    cmd.schedule.apply(&mut config);
    let schedule = config.schedule.build()?;
    let ys = theta_grid(cmd.y_points, cmd.y_min, cmd.y_max);
    let mut csv = String::from("y,t,theta,d_star\n");
    let mut chart = Chart::new(format!("optimal discriminator, theta = {}", cmd.theta), "y", "D*");
    for &t in &cmd.timesteps {
        let mut line = Vec::with_capacity(ys.len());
        for &y in &ys {
            let d = optimal_discriminator(y, cmd.theta, t, &schedule)?;
            csv.push_str(&format!("{},{t},{},{}\n", r(y), r(cmd.theta), r(d)));
            line.push((y, d));
        }
        chart.push(Series::new(format!("t = {t}"), line, Mark::Line));
    }
    let out = &cmd.common.out;
    prepare(&cmd.common)?;
    write_metadata(out, "toy-disc", &config, cmd)?;
    fs::write(out.join("d_star.csv"), csv)?;
    if cmd.svg {
        fs::write(out.join("d_star.svg"), chart.render())?;
    }
    Ok(())
}

// ---------------------------------------------------------------- schedule-dump

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScheduleDumpCmd {
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub schedule: ScheduleArgs,
}

pub fn schedule_dump(cmd: &ScheduleDumpCmd) -> Result<()> {
    let mut config = config::load(&cmd.common)?;
    cmd.schedule.apply(&mut config);
    let schedule = config.schedule.build()?;
    let mut csv = String::from("t,beta,alpha_bar\n");
    for t in 1..=schedule.t_max_cap() {
        csv.push_str(&format!("{t},{},{}\n", r(schedule.beta(t)?), r(schedule.alpha_bar(t)?)));
    }
    let out = &cmd.common.out;
    prepare(&cmd.common)?;
    write_metadata(out, "schedule-dump", &config, cmd)?;
    fs::write(out.join("schedule.csv"), csv)?;
    Ok(())
}

// ---------------------------------------------------------------- gradcheck

#[derive(Debug, Clone, Args, Serialize)]
pub struct GradcheckCmd {
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub schedule: ScheduleArgs,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    /// Timesteps for the end-to-end check, comma separated.
    #[arg(long = "t", default_value = "0,5,100", value_delimiter = ',')]
    pub timesteps: Vec<usize>,
    /// Largest relative error accepted.
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
}

pub fn gradcheck(cmd: &GradcheckCmd) -> Result<()> {
    let mut config = config::load(&cmd.common)?;
    cmd.schedule.apply(&mut config);
    let schedule = config.schedule.build()?;
    let t_max = config.policy.t_max.min(schedule.t_max_cap());
    let mut csv = String::from("seed,isolated_max_rel_err,end_to_end_max_rel_err,checked\n");
    let mut worst = 0.0f64;
    for k in 0..cmd.seeds {
        let seed = config.seed.wrapping_add(k);
        let res = run_suite(seed, &schedule, t_max, &cmd.timesteps)?;
        csv.push_str(&format!(
            "{seed},{},{},{}\n",
            fmt_real(res.isolated.max_rel_err),
            fmt_real(res.end_to_end.max_rel_err),
            res.isolated.checked + res.end_to_end.checked
        ));
        worst = worst.max(res.isolated.max_rel_err).max(res.end_to_end.max_rel_err);
    }
    let out = &cmd.common.out;
    prepare(&cmd.common)?;
    write_metadata(out, "gradcheck", &config, cmd)?;
    fs::write(out.join("gradcheck.csv"), csv)?;
    println!("max relative error {worst:e}");
    if worst.is_nan() || worst > cmd.tolerance {
        return Err(Error::Numeric(format!("max relative error {worst:e} exceeds {:e}", cmd.tolerance)));
    }
    Ok(())
}

// ---------------------------------------------------------------- diffuse-demo

#[derive(Debug, Clone, Args, Serialize)]
pub struct DiffuseDemoCmd {
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub schedule: ScheduleArgs,
    /// Points to diffuse. Defaults to a fresh 25-Gaussians sample.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = DEFAULT_COMP_STD)]
    pub comp_std: f64,
    /// Timesteps, comma separated.
    #[arg(long = "t", default_value = "0,10,50,200,800", value_delimiter = ',')]
    pub timesteps: Vec<usize>,
    #[arg(long)]
    pub svg: bool,
}

pub fn diffuse_demo(cmd: &DiffuseDemoCmd) -> Result<()> {
    let mut config = config::load(&cmd.common)?;
    cmd.schedule.apply(&mut config);
    let schedule = config.schedule.build()?;
    for &t in &cmd.timesteps {
        if t > schedule.t_max_cap() {
            return Err(Error::Param(format!("t = {t} exceeds the schedule length {}", schedule.t_max_cap())));
        }
    }
    let points = match &cmd.data {
        Some(path) => data::load_csv(path)?,
        None => grid_dataset(&GaussGrid::grid25(cmd.comp_std)?, cmd.n, config.seed),
    };
    let out = &cmd.common.out;
    prepare(&cmd.common)?;
    write_metadata(out, "diffuse-demo", &config, cmd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for &t in &cmd.timesteps {
        let diffused = diffuse_all(&schedule, points.view(), t, &mut rng)?;
        data::save_csv(diffused.view(), out.join(format!("diffused_t{t}.csv")))?;
        if cmd.svg && diffused.ncols() == 2 {
            let mut chart = Chart::new(format!("diffused samples, t = {t}"), "x", "y");
            chart.push(Series::new("y_t", scatter_points(diffused.view()), Mark::Dots));
            fs::write(out.join(format!("diffused_t{t}.svg")), chart.render())?;
        }
    }
    Ok(())
}

fn diffuse_all<R: Rng + ?Sized>(
    schedule: &DiffusionSchedule,
    x: ArrayView2<f64>,
    t: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let mut out = x.to_owned();
    if t == 0 {
        return Ok(out);
    }
    let mut eps = vec![0.0; x.ncols()];
    for mut row in out.rows_mut() {
        eps.iter_mut().for_each(|e| *e = rng.sample(StandardNormal));
        let slice = row.as_slice_mut().expect("rows of an owned array are contiguous");
        schedule.diffuse_in_place(slice, t, &eps)?;
    }
    Ok(out)
}
