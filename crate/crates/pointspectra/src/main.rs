//! Thin command-line wrapper over the library: simulate ground-truth
//! patterns, estimate spectra from pattern files, export analytic theory
//! curves, and run Monte Carlo studies.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use pointspectra::bandwidth::{optimal_bandwidth, select_bandwidth_cv, CvConfig};
use pointspectra::bench::{radial_average, run_study, StudyConfig};
use pointspectra::geometry::{make_frequency_grid, Window};
use pointspectra::intensity::{fit_intensity, BasisFn, IntensityFamily, IntensityModel};
use pointspectra::io::{
    field_to_json, read_pattern_csv, read_window_meta, spectrum_to_json, write_json_pretty,
    write_pattern_csv, write_radial_csv, write_spectrum_json, write_study_csv, write_window_meta,
    SpectrumJson, WindowMeta,
};
use pointspectra::sim::{
    reweighted_covariance, sample_cox_pattern, CoxModelParams, CoxPreset, SimulationConfig,
};
use pointspectra::spectral::{
    feasible_periodogram, kernel_smooth, KernelSpec, Provenance, SpectrumEstimate,
};
use pointspectra::taper::Taper;
use pointspectra::theory::{
    local_spectrum, reweighted_spectrum_and_coherence, AnalyticPseudoSpectrum,
};

#[derive(Parser)]
#[command(
    name = "pointspectra",
    about = "Frequency-domain analysis of multivariate inhomogeneous spatial point patterns",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate replicates of the product-shot-noise Cox models M1-M3.
    Simulate {
        /// Model preset: M1, M2, or M3.
        #[arg(long)]
        model: String,
        /// Side length A of the square window [-A/2, A/2]^2.
        #[arg(long)]
        side: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of replicates to write.
        #[arg(long, default_value_t = 1)]
        reps: usize,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Intensity-field cell side for the sampler.
        #[arg(long, default_value_t = 0.05)]
        cell_size: f64,
    },
    /// Estimate the pseudo-spectrum of a point pattern file.
    Estimate {
        /// Pattern CSV with header x,y[,z,w],type.
        #[arg(long)]
        input: PathBuf,
        /// JSON sidecar with {"side_lengths": [...], "m": ...}.
        #[arg(long)]
        window: PathBuf,
        /// Taper edge fraction; 0 selects the unit taper.
        #[arg(long, default_value_t = 0.025)]
        taper_a: f64,
        /// Bandwidth: a positive number, `cv`, `opt`, or `raw`.
        #[arg(long, default_value = "cv")]
        bandwidth: String,
        /// Frequency grid vector scale: Ω = scale · A.
        #[arg(long, default_value_t = 4.0 / 3.0)]
        grid_scale: f64,
        /// Grid extent: keep nodes with ‖ω‖∞ at most this value.
        #[arg(long, default_value_t = 1.5 * PI)]
        max_norm: f64,
        /// Intensity model for demeaning: constant, zero, or loglinear.
        #[arg(long, default_value = "constant")]
        intensity: String,
        /// Covariate list for --intensity loglinear, e.g. const,x1sq,x2sq.
        #[arg(long)]
        basis: Option<String>,
        /// Dummy-point resolution of the intensity fit.
        #[arg(long, default_value_t = 64)]
        fit_resolution: usize,
        /// Output spectrum JSON.
        #[arg(long)]
        out: PathBuf,
        /// Where to write the CV scan curve (bandwidth cv only).
        #[arg(long)]
        bandwidth_report: Option<PathBuf>,
    },
    /// Export analytic pseudo-spectrum, local spectra, and coherence.
    Theory {
        #[arg(long)]
        model: String,
        #[arg(long)]
        side: f64,
        #[arg(long, default_value_t = 0.025)]
        taper_a: f64,
        #[arg(long, default_value_t = 4.0 / 3.0)]
        grid_scale: f64,
        #[arg(long, default_value_t = 1.5 * PI)]
        max_norm: f64,
        /// Also export theoretical coherence / partial coherence.
        #[arg(long)]
        coherence: bool,
        /// Localization points u (repeatable), e.g. --local-u 0.25,0.25.
        #[arg(long)]
        local_u: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Monte Carlo study from a JSON configuration.
    Bench {
        /// Study configuration JSON (see --default-config).
        #[arg(long, required_unless_present = "default_config")]
        config: Option<PathBuf>,
        /// Write the default configuration to this path and exit.
        #[arg(long)]
        default_config: Option<PathBuf>,
        #[arg(long, required_unless_present = "default_config")]
        out: Option<PathBuf>,
        /// Optional per-cell CSV in the simulation-table layout.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Optional directory for radial profiles of the analytic truth.
        #[arg(long)]
        radial: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Simulate {
            model,
            side,
            seed,
            reps,
            out,
            cell_size,
        } => simulate(&model, side, seed, reps, &out, cell_size),
        Command::Estimate {
            input,
            window,
            taper_a,
            bandwidth,
            grid_scale,
            max_norm,
            intensity,
            basis,
            fit_resolution,
            out,
            bandwidth_report,
        } => estimate(
            &input,
            &window,
            taper_a,
            &bandwidth,
            grid_scale,
            max_norm,
            &intensity,
            basis.as_deref(),
            fit_resolution,
            &out,
            bandwidth_report.as_deref(),
        ),
        Command::Theory {
            model,
            side,
            taper_a,
            grid_scale,
            max_norm,
            coherence,
            local_u,
            out,
        } => theory(
            &model, side, taper_a, grid_scale, max_norm, coherence, &local_u, &out,
        ),
        Command::Bench {
            config,
            default_config,
            out,
            csv,
            radial,
        } => bench(
            config.as_deref(),
            default_config.as_deref(),
            out.as_deref(),
            csv.as_deref(),
            radial.as_deref(),
        ),
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn simulate(
    model: &str,
    side: f64,
    seed: u64,
    reps: usize,
    out: &Path,
    cell_size: f64,
) -> Result<(), String> {
    let preset = CoxPreset::parse(model).map_err(err)?;
    let params = CoxModelParams::preset(preset);
    let window = Window::square(side, 2).map_err(err)?;
    let config = SimulationConfig {
        cell_size,
        ..Default::default()
    };
    std::fs::create_dir_all(out).map_err(err)?;
    write_window_meta(
        &out.join("window.json"),
        &WindowMeta {
            side_lengths: window.side_lengths().to_vec(),
            m: 2,
        },
    )
    .map_err(err)?;
    #[derive(Serialize)]
    struct SimMeta<'a> {
        model: &'a str,
        side: f64,
        seed: u64,
        reps: usize,
        config: &'a SimulationConfig,
        params: &'a CoxModelParams,
    }
    write_json_pretty(
        &out.join("simulation.json"),
        &SimMeta {
            model,
            side,
            seed,
            reps,
            config: &config,
            params: &params,
        },
    )
    .map_err(err)?;
    #[derive(Serialize)]
    struct RepMeta<'a> {
        model: &'a str,
        side: f64,
        seed: u64,
        replicate: usize,
        counts: Vec<usize>,
    }
    for rep in 0..reps {
        let rep_seed = seed.wrapping_add(rep as u64);
        let sim = sample_cox_pattern(&params, &window, &config, rep_seed).map_err(err)?;
        let path = out.join(format!("pattern_r{rep:03}.csv"));
        write_pattern_csv(&path, &sim.pattern).map_err(err)?;
        let counts = sim.pattern.counts_by_type();
        write_json_pretty(
            &out.join(format!("pattern_r{rep:03}.json")),
            &RepMeta {
                model,
                side,
                seed: rep_seed,
                replicate: rep,
                counts: counts.clone(),
            },
        )
        .map_err(err)?;
        println!(
            "wrote {} ({} + {} points, seed {rep_seed})",
            path.display(),
            counts[0],
            counts[1]
        );
    }
    Ok(())
}

fn parse_family(intensity: &str, basis: Option<&str>) -> Result<Option<IntensityFamily>, String> {
    match intensity {
        "zero" => Ok(None),
        "constant" => Ok(Some(IntensityFamily::Constant)),
        "loglinear" => {
            let spec = basis.ok_or("--intensity loglinear needs --basis")?;
            let basis: Result<Vec<BasisFn>, _> =
                spec.split(',').map(|s| BasisFn::parse(s.trim())).collect();
            Ok(Some(IntensityFamily::LogLinear {
                basis: basis.map_err(err)?,
            }))
        }
        other => Err(format!(
            "unknown intensity model `{other}`; choose constant, zero, or loglinear"
        )),
    }
}

#[allow(clippy::too_many_arguments)]
fn estimate(
    input: &Path,
    window_path: &Path,
    taper_a: f64,
    bandwidth: &str,
    grid_scale: f64,
    max_norm: f64,
    intensity: &str,
    basis: Option<&str>,
    fit_resolution: usize,
    out: &Path,
    bandwidth_report: Option<&Path>,
) -> Result<(), String> {
    let meta = read_window_meta(window_path).map_err(err)?;
    let pattern = read_pattern_csv(input, &meta).map_err(err)?;
    let window = pattern.window().clone();
    let d = window.dim();
    let taper = Taper::from_parameter(taper_a, d).map_err(err)?;
    let grid = make_frequency_grid(&window, grid_scale, max_norm).map_err(err)?;

    let model = match parse_family(intensity, basis)? {
        Some(family) => {
            let fit = fit_intensity(&pattern, &family, fit_resolution).map_err(err)?;
            println!(
                "fitted intensity ({:?}): beta = {:?}",
                fit.convergence,
                fit.model.beta()
            );
            fit.model
        }
        None => IntensityModel::zero(pattern.num_types()),
    };
    let periodogram = feasible_periodogram(&pattern, &taper, &model, &grid).map_err(err)?;

    let estimate: SpectrumEstimate = match bandwidth {
        "raw" => SpectrumEstimate::from_periodogram(periodogram),
        "opt" => {
            let b = optimal_bandwidth(&window).map_err(err)?;
            println!("optimal-rate bandwidth: {b:.4}");
            let spec = KernelSpec::triangular_scalar(b, d).map_err(err)?;
            kernel_smooth(&periodogram, &spec).map_err(err)?
        }
        "cv" => {
            let config = CvConfig::for_grid(&grid);
            let sel = select_bandwidth_cv(&periodogram, &config).map_err(err)?;
            println!("cross-validated bandwidth: {:.4}", sel.b_cv);
            let report_path = bandwidth_report
                .map(Path::to_path_buf)
                .unwrap_or_else(|| out.with_file_name("bandwidth_report.json"));
            write_json_pretty(&report_path, &sel).map_err(err)?;
            let spec = KernelSpec::triangular_scalar(sel.b_cv, d).map_err(err)?;
            kernel_smooth(&periodogram, &spec).map_err(err)?
        }
        value => {
            let b: f64 = value.parse().map_err(|_| {
                format!("bandwidth must be a number, `cv`, `opt`, or `raw`, got `{value}`")
            })?;
            let spec = KernelSpec::triangular_scalar(b, d).map_err(err)?;
            kernel_smooth(&periodogram, &spec).map_err(err)?
        }
    };
    let mut json = spectrum_to_json(&estimate);
    json.fitted_intensity = Some(model);
    write_spectrum_json(out, &json).map_err(err)?;
    println!("wrote {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct CoherenceNodeJson {
    k: Vec<i64>,
    omega: Vec<f64>,
    r: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct LocalSpectrumJson {
    u: Vec<f64>,
    field: SpectrumJson,
}

#[derive(Serialize)]
struct TheoryJson {
    pseudo_spectrum: SpectrumJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    coherence: Option<Vec<CoherenceNodeJson>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    local_spectra: Vec<LocalSpectrumJson>,
}

#[allow(clippy::too_many_arguments)]
fn theory(
    model: &str,
    side: f64,
    taper_a: f64,
    grid_scale: f64,
    max_norm: f64,
    coherence: bool,
    local_u: &[String],
    out: &Path,
) -> Result<(), String> {
    let preset = CoxPreset::parse(model).map_err(err)?;
    let params = CoxModelParams::preset(preset);
    let window = Window::square(side, 2).map_err(err)?;
    let grid = make_frequency_grid(&window, grid_scale, max_norm).map_err(err)?;
    let taper = Taper::from_parameter(taper_a, 2).map_err(err)?;
    let l2 = reweighted_covariance(&params).map_err(err)?;
    let ps = AnalyticPseudoSpectrum::new(taper, params.lambda.clone(), l2.clone()).map_err(err)?;
    let field = ps.eval_grid(&grid).map_err(err)?;
    let pseudo_spectrum = field_to_json(
        &field,
        Provenance::Analytic {
            description: format!("pseudo-spectrum of {model} on A = {side}"),
        },
    );

    let coherence_nodes = if coherence {
        let mut nodes = Vec::new();
        for idx in 0..grid.len() {
            let k = grid.multi_index(idx);
            let omega = grid.node(&k);
            let (_, r, dm) = reweighted_spectrum_and_coherence(&l2, &omega).map_err(err)?;
            nodes.push(CoherenceNodeJson {
                k,
                omega,
                r: rows(&r),
                d: rows(&dm),
            });
        }
        Some(nodes)
    } else {
        None
    };

    let mut local_spectra = Vec::new();
    for spec in local_u {
        let u: Result<Vec<f64>, _> = spec.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let u = u.map_err(|e| format!("bad --local-u `{spec}`: {e}"))?;
        let values: Result<Vec<_>, _> = (0..grid.len())
            .map(|idx| {
                let omega = grid.node(&grid.multi_index(idx));
                local_spectrum(&params.lambda, &l2, &u, &omega)
            })
            .collect();
        let values = values.map_err(err)?;
        let local_field =
            pointspectra::geometry::HermitianField::new(grid.clone(), 2, values).map_err(err)?;
        local_spectra.push(LocalSpectrumJson {
            u: u.clone(),
            field: field_to_json(
                &local_field,
                Provenance::Analytic {
                    description: format!("local spectrum at u = {u:?}"),
                },
            ),
        });
    }

    write_json_pretty(
        out,
        &TheoryJson {
            pseudo_spectrum,
            coherence: coherence_nodes,
            local_spectra,
        },
    )
    .map_err(err)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn bench(
    config_path: Option<&Path>,
    default_config: Option<&Path>,
    out: Option<&Path>,
    csv: Option<&Path>,
    radial: Option<&Path>,
) -> Result<(), String> {
    if let Some(path) = default_config {
        write_json_pretty(path, &StudyConfig::default()).map_err(err)?;
        println!("wrote default study configuration to {}", path.display());
        return Ok(());
    }
    let config_path = config_path.expect("clap enforces --config");
    let out = out.expect("clap enforces --out");
    let config: StudyConfig =
        serde_json::from_slice(&std::fs::read(config_path).map_err(err)?).map_err(err)?;
    let report = run_study(&config).map_err(err)?;
    write_json_pretty(out, &report).map_err(err)?;
    println!(
        "study finished in {:.1}s with {} failed replicates; wrote {}",
        report.runtime_seconds,
        report.failures.len(),
        out.display()
    );
    if let Some(path) = csv {
        write_study_csv(path, &report).map_err(err)?;
        println!("wrote {}", path.display());
    }
    if let Some(dir) = radial {
        std::fs::create_dir_all(dir).map_err(err)?;
        let params = CoxModelParams::preset(config.model);
        let taper = Taper::from_parameter(config.taper_a, 2).map_err(err)?;
        let l2 = reweighted_covariance(&params).map_err(err)?;
        for &side in &config.sides {
            let window = Window::square(side, 2).map_err(err)?;
            let grid =
                make_frequency_grid(&window, config.grid_scale, config.max_norm).map_err(err)?;
            let ps = AnalyticPseudoSpectrum::new(taper.clone(), params.lambda.clone(), l2.clone())
                .map_err(err)?;
            let field = ps.eval_grid(&grid).map_err(err)?;
            for (i, j) in [(0, 0), (1, 1), (0, 1)] {
                let rings =
                    radial_average(&field, (i, j), 2.5 * grid.max_spacing()).map_err(err)?;
                let path = dir.join(format!("truth_A{side}_f{}{}.csv", i + 1, j + 1));
                write_radial_csv(&path, &rings, "pseudo_spectrum").map_err(err)?;
            }
        }
        println!("wrote radial truth profiles to {}", dir.display());
    }
    Ok(())
}
