//! `raycanopy` command-line driver.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use raycanopy::config::PanelMode;
use raycanopy::ground::{extract_ground, subtract_ground};
use raycanopy::parallel::{threads_from_env, with_threads};
use raycanopy::pipeline::{
    local_band, row_density, row_grid, rows_stage, run_pipeline, run_simulation, RunOptions, SimulationOptions,
};
use raycanopy::raycloud::{
    classify_nonreturns, load_measurements_csv, load_raycloud, save_measurements_csv, save_raycloud,
};
use raycanopy::report::{
    along_row_series, end_on_profile, integrate_axis, pair_by_id, panel_aggregate_from, read_panels_csv,
    render_colormap, rrmse, trend_line, write_comparisons_csv, write_panels_csv, Axis,
};
use raycanopy::synth::{generate_vineyard, VineyardConfig};
use raycanopy::voxelgrid::accumulate_sums;
use raycanopy::{DensityField, Error, PipelineConfig};

#[derive(Parser)]
#[command(
    name = "raycanopy",
    version,
    about = "Canopy density estimation from lidar ray clouds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert raw measurements (CSV) into a ray cloud.
    Ingest {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Range assigned to upward non-returns, m.
        #[arg(long, default_value_t = 15.0)]
        max_range: f64,
    },
    /// Extract the ground mesh and shift the cloud onto it.
    Ground {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Where to write the mesh as OBJ.
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long, default_value_t = raycanopy::ground::DEFAULT_CURVATURE)]
        curvature: f64,
    },
    /// Split a (ground-shifted) cloud into rows, written in row coordinates.
    Rows {
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = raycanopy::rowseg::DEFAULT_BIN_WIDTH)]
        bin_width: f64,
        /// Row direction `dx,dy`; detected from the trajectory when absent.
        #[arg(long, allow_hyphen_values = true)]
        direction: Option<String>,
    },
    /// Dump per-voxel ray statistics of one row cloud as CSV.
    Voxelize {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = raycanopy::voxelgrid::DEFAULT_VOXEL_WIDTH)]
        voxel_width: f64,
        /// Lateral band `lo,hi` of the row's own endpoints (see `rows`).
        #[arg(long, allow_hyphen_values = true)]
        band: Option<String>,
        #[arg(long, default_value_t = 0)]
        row: usize,
    },
    /// Estimate the density field of one row cloud.
    Density {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write the field as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        band: Option<String>,
        #[arg(long, default_value_t = 0)]
        row: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Reduce a density field to images, an along-row series and panels.
    Integrate {
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Row-frame `y` of a panel boundary, m.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        panel_anchor: f64,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run every stage from a ray cloud to panel summaries.
    Pipeline {
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Directory for cached ground and row stages.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run a Monte Carlo validation experiment.
    Simulate {
        /// One of: turbid-bias, triangle-bias, error-surface, trawl-vs-spin.
        experiment: String,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overrides the experiment's trial count.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Compare two panels CSVs: RRMSE and trend line over shared panels.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Write the paired values as CSV.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic vineyard survey with known leaf area.
    Synth {
        #[arg(short, long)]
        output: PathBuf,
        /// Also write the raw measurements as CSV.
        #[arg(long)]
        measurements: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Vehicle speed, m/s.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
    },
}

/// Pipeline parameters: defaults, then `--config`, then individual flags.
#[derive(Args, Default)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    voxel_width: Option<f64>,
    #[arg(long)]
    n_min: Option<u32>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    curvature: Option<f64>,
    #[arg(long)]
    bin_width: Option<f64>,
    #[arg(long)]
    panel_length: Option<f64>,
    /// World along-row coordinate of a panel boundary, m.
    #[arg(long, allow_hyphen_values = true)]
    panel_origin: Option<f64>,
    #[arg(long)]
    row_spacing: Option<f64>,
    #[arg(long)]
    max_density: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// `mean` or `mode`.
    #[arg(long)]
    estimator: Option<String>,
    /// Row direction `dx,dy`.
    #[arg(long, allow_hyphen_values = true)]
    direction: Option<String>,
    /// Report panel totals instead of means.
    #[arg(long)]
    sum: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?,
            None => PipelineConfig::default(),
        };
        let numbers = [
            ("voxel_width", self.voxel_width),
            ("g", self.g),
            ("curvature", self.curvature),
            ("bin_width", self.bin_width),
            ("panel_length", self.panel_length),
            ("panel_origin", self.panel_origin),
            ("row_spacing", self.row_spacing),
            ("max_density", self.max_density),
        ];
        for (key, value) in numbers {
            if let Some(v) = value {
                c.set(key, &format!("{v:?}"))?;
            }
        }
        if let Some(n) = self.n_min {
            c.n_min = n;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(e) = &self.estimator {
            c.set("estimator", e)?;
        }
        if let Some(d) = &self.direction {
            c.set("direction", d)?;
        }
        if self.sum {
            c.panel_mode = PanelMode::Sum;
        }
        c.validate()?;
        Ok(c)
    }
}

fn parse_pair(text: &str, what: &str) -> Result<[f64; 2]> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if let [a, b] = parts[..] {
        if let (Ok(a), Ok(b)) = (a.parse(), b.parse()) {
            return Ok([a, b]);
        }
    }
    bail!("{what}: expected two comma-separated numbers, got {text:?}")
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "cloud".into(), |s| s.to_string_lossy().into_owned())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest {
            input,
            output,
            max_range,
        } => {
            let measurements = load_measurements_csv(&input)?;
            let cloud = classify_nonreturns(&measurements, max_range)?;
            save_raycloud(&cloud, &output)?;
            println!(
                "{} measurements -> {} rays in {}",
                measurements.len(),
                cloud.len(),
                output.display()
            );
        }
        Command::Ground {
            input,
            output,
            mesh,
            curvature,
        } => {
            let cloud = load_raycloud(&input)?;
            let ground = extract_ground(&cloud, curvature)?;
            let shifted = subtract_ground(&cloud, &ground);
            save_raycloud(&shifted.cloud, &output)?;
            if let Some(path) = mesh {
                ground.write_obj(&path)?;
            }
            println!(
                "ground mesh: {} vertices, {} triangles; {} rays kept, {} dropped",
                ground.vertices().len(),
                ground.triangles().len(),
                shifted.cloud.len(),
                shifted.dropped
            );
        }
        Command::Rows {
            input,
            out_dir,
            bin_width,
            direction,
        } => {
            let cloud = load_raycloud(&input)?;
            let mut config = PipelineConfig {
                bin_width,
                ..Default::default()
            };
            if let Some(d) = direction {
                config.set("direction", &d)?;
            }
            config.validate()?;
            let (dir, split) = rows_stage(&cloud, &cloud, &config)?;
            create_dir(&out_dir)?;
            let stem = stem(&input);
            let mut table =
                String::from("row,file,rays,direction_x,direction_y,lateral_centre,along_offset,band_lo,band_hi\n");
            for row in &split.rows {
                let file = format!("{stem}_row{}.ply", row.index);
                save_raycloud(&row.to_row_coordinates(), &out_dir.join(&file))?;
                let f = row.frame();
                let band = local_band(row);
                table.push_str(&format!(
                    "{},{file},{},{:?},{:?},{:?},{:?},{:?},{:?}\n",
                    row.index,
                    row.cloud.len(),
                    f.direction.x,
                    f.direction.y,
                    f.lateral_centre,
                    f.along_offset,
                    band[0],
                    band[1]
                ));
            }
            let table_path = out_dir.join(format!("{stem}_rows.csv"));
            std::fs::write(&table_path, table).with_context(|| format!("writing {}", table_path.display()))?;
            if split.single_row_fallback {
                log::warn!("fewer than two drive lines found; the cloud was kept as one row");
            }
            println!(
                "direction ({:.6}, {:.6}); {} row(s) written to {}",
                dir.x,
                dir.y,
                split.rows.len(),
                out_dir.display()
            );
        }
        Command::Voxelize {
            input,
            output,
            voxel_width,
            band,
            row,
        } => {
            let cloud = load_raycloud(&input)?;
            let band = band.map(|b| parse_pair(&b, "band")).transpose()?;
            let grid = row_grid(&cloud, band, voxel_width, row)?;
            let stats = accumulate_sums(&cloud, &grid);
            stats.write_csv(&output)?;
            let d = grid.dims;
            println!("{}x{}x{} voxels written to {}", d[0], d[1], d[2], output.display());
        }
        Command::Density {
            input,
            output,
            csv,
            band,
            row,
            config,
        } => {
            let config = config.resolve()?;
            let cloud = load_raycloud(&input)?;
            let band = band.map(|b| parse_pair(&b, "band")).transpose()?;
            let field = row_density(&cloud, band, row, &config)?;
            field.save(&output)?;
            if let Some(path) = csv {
                field.write_csv(&path)?;
            }
            println!(
                "leaf area {:.4} m² written to {}",
                field.total_leaf_area(),
                output.display()
            );
        }
        Command::Integrate {
            input,
            out_dir,
            panel_anchor,
            config,
        } => {
            let config = config.resolve()?;
            let field = DensityField::load(&input)?;
            create_dir(&out_dir)?;
            let stem = stem(&input);
            for (name, axis) in [("side", Axis::X), ("top", Axis::Z)] {
                let raster = render_colormap(&integrate_axis(&field, axis), config.max_density)?;
                raster.write_ppm(&out_dir.join(format!("{stem}_{name}.ppm")))?;
                raster.write_png(&out_dir.join(format!("{stem}_{name}.png")))?;
            }
            let end_on = end_on_profile(&field);
            let peak = end_on.values.iter().copied().fold(0.0, f64::max);
            let raster = render_colormap(&end_on, if peak > 0.0 { peak } else { 1.0 })?;
            raster.write_ppm(&out_dir.join(format!("{stem}_endon.ppm")))?;
            raster.write_png(&out_dir.join(format!("{stem}_endon.png")))?;
            let series = along_row_series(&field);
            series.write_csv(&out_dir.join(format!("{stem}_series.csv")))?;
            let panels = panel_aggregate_from(
                &series,
                panel_anchor,
                config.panel_length,
                config.panel_mode,
                config.row_spacing,
            )?;
            write_panels_csv(
                &out_dir.join(format!("{stem}_panels.csv")),
                &[(field.grid.row_index, panels.clone())],
            )?;
            println!(
                "leaf area {:.4} m² over {} panel(s); outputs in {}",
                field.total_leaf_area(),
                panels.len(),
                out_dir.display()
            );
        }
        Command::Pipeline {
            input,
            out_dir,
            cache_dir,
            config,
        } => {
            let config = config.resolve()?;
            let result = run_pipeline(&input, &out_dir, &config, &RunOptions { cache_dir })?;
            for row in &result.rows {
                println!(
                    "row {}: {} rays, leaf area {:.4} m², {} panel(s)",
                    row.index,
                    row.rays,
                    row.leaf_area,
                    row.panels.len()
                );
            }
            println!(
                "total leaf area {:.4} m²; outputs in {}",
                result.total_leaf_area(),
                result.out_dir.display()
            );
        }
        Command::Simulate {
            experiment,
            out_dir,
            seed,
            trials,
        } => {
            let csv = run_simulation(&experiment, &out_dir, &SimulationOptions { seed, trials })?;
            print!("{csv}");
        }
        Command::Compare { a, b, output } => {
            let (ids, x, y) = pair_by_id(&read_panels_csv(&a)?, &read_panels_csv(&b)?);
            if ids.is_empty() {
                bail!("{} and {} share no panels", a.display(), b.display());
            }
            let r = rrmse(&x, &y)?;
            println!("paired panels: {}", ids.len());
            println!("rrmse: {:.4}", r);
            match trend_line(&x, &y) {
                Ok(t) => println!("trend: b = {:.4} a + {:.4}", t.slope, t.intercept),
                Err(e) => log::warn!("no trend line: {e}"),
            }
            if let Some(path) = output {
                write_comparisons_csv(&path, &ids, &x, &y)?;
            }
        }
        Command::Synth {
            output,
            measurements,
            seed,
            speed,
        } => {
            let config = VineyardConfig {
                seed,
                speed,
                ..Default::default()
            };
            let v = generate_vineyard(&config)?;
            save_raycloud(&v.cloud, &output)?;
            if let Some(path) = measurements {
                save_measurements_csv(&v.measurements, &path)?;
            }
            println!(
                "{} rays written to {}; true leaf area {:.4} m²",
                v.cloud.len(),
                output.display(),
                v.true_leaf_area
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match with_threads(threads_from_env(), || run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            // Unknown experiment names are usage errors, like clap's own.
            if matches!(e.downcast_ref::<Error>(), Some(Error::UnknownExperiment { .. })) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
