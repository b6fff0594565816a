use clap::{Args, Parser, Subcommand};
use dogfit_core::io::{
    joints_csv, load_assets, load_sequence, load_solution, read_json, save_assets, save_sequence, save_solution,
    stage_logs_csv, write_json, write_mesh_sequence,
};
use dogfit_core::metrics::{evaluate, EvalConfig, MetricsReport};
use dogfit_core::model::BodyModel;
use dogfit_core::objectives::Setting;
use dogfit_core::pipeline::{fit_sequence, FitSettings};
use dogfit_core::synth::{generate, SynthSpec};
use dogfit_core::{Error, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dogfit", version, about = "Recover quadruped shape and motion from RGB(-D) captures")]
struct Cli {
    /// Worker threads for per-frame evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit the body model to a sequence directory.
    Fit(FitArgs),
    /// Score a solution against a sequence directory.
    Eval(EvalArgs),
    /// Render a synthetic sequence directory with ground truth.
    Synth(SynthArgs),
    /// Write meshes and joint tracks of a solution.
    Export(ExportArgs),
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    seq: PathBuf,
    /// Template assets; defaults to `<seq>/assets.json`.
    #[arg(long)]
    assets: Option<PathBuf>,
    #[arg(long)]
    setting: Setting,
    /// JSON fit settings; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write one OBJ mesh per frame.
    #[arg(long)]
    export_mesh: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    seq: PathBuf,
    #[arg(long)]
    solution: PathBuf,
    /// Template assets; defaults to `<seq>/assets.json`.
    #[arg(long)]
    assets: Option<PathBuf>,
    /// JSON evaluation settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// JSON synthesis spec; missing fields take their defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    solution: PathBuf,
    #[arg(long)]
    assets: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Skip the OBJ sequence.
    #[arg(long)]
    no_mesh: bool,
    /// Skip the joint CSV.
    #[arg(long)]
    no_joints: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DOGFIT_LOG", "info")).init();
    let cli = Cli::parse();
    let threads = cli.threads.max(1);
    let run = match cli.cmd {
        Cmd::Fit(a) => fit(a, threads),
        Cmd::Eval(a) => eval(a),
        Cmd::Synth(a) => synth(a),
        Cmd::Export(a) => export(a),
    };
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn model_for(assets: Option<&Path>, seq: &Path) -> Result<BodyModel> {
    let path = assets.map_or_else(|| seq.join("assets.json"), Path::to_path_buf);
    BodyModel::new(load_assets(&path)?)
}

fn fit(a: FitArgs, threads: usize) -> Result<()> {
    let model = model_for(a.assets.as_deref(), &a.seq)?;
    let (seq, _) = load_sequence(&a.seq)?;
    let mut settings: FitSettings = match &a.config {
        Some(p) => read_json(p)?,
        None => FitSettings::default(),
    };
    settings.setting = a.setting;
    settings.threads = threads;
    if let Some(s) = a.seed {
        settings.seed = s;
    }
    if !a.setting.uses_depth() && seq.has_depth() {
        log::info!("setting {} ignores the depth streams of this sequence", a.setting);
    }
    if !a.setting.multi_view() && seq.rig.cameras.len() > 1 {
        let id = seq.rig.cameras.get(settings.view).map_or("?", |c| c.id.as_str());
        log::info!("setting {} uses view `{id}` only", a.setting);
    }
    write_json(&a.out.join("fit_settings.json"), &settings)?;
    let solution = match fit_sequence(&model, &seq, &settings) {
        Ok(s) => s,
        Err(Error::Diverged {
            stage,
            step,
            checkpoint,
        }) => {
            let path = a.out.join("checkpoint.json");
            save_solution(&path, &checkpoint)?;
            log::error!("last finite state written to {}", path.display());
            return Err(Error::Diverged { stage, step, checkpoint });
        }
        Err(e) => return Err(e),
    };
    save_solution(&a.out.join("solution.json"), &solution)?;
    write_text(&a.out.join("stage_logs.csv"), &stage_logs_csv(&solution.logs))?;
    if a.export_mesh {
        write_mesh_sequence(&a.out.join("meshes"), &model, &solution)?;
    }
    log::info!("wrote {}", a.out.join("solution.json").display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let model = model_for(a.assets.as_deref(), &a.seq)?;
    let (seq, _) = load_sequence(&a.seq)?;
    let solution = load_solution(&a.solution)?;
    solution.validate(&model)?;
    for (cam, obs) in seq.rig.cameras.iter().zip(&seq.views) {
        if obs.len() != solution.len() {
            return Err(Error::Dimension(format!(
                "view `{}` has {} frames but the solution has {}",
                cam.id,
                obs.len(),
                solution.len()
            )));
        }
    }
    let cfg: EvalConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => EvalConfig::default(),
    };
    let report = evaluate(&model, &solution.state(), &seq, &cfg)?;
    write_json(&a.out.join("metrics.json"), &report)?;
    print!("{}", table(&report));
    Ok(())
}

/// Metrics in the column order of the published comparison.
fn table(r: &MetricsReport) -> String {
    let f = r.fscore.map_or_else(|| "n/a".to_string(), |f| format!("{f:.4}"));
    format!(
        "{:>8} {:>8} {:>8} {:>8} {:>9} {:>9}\n{:>8.4} {:>8.4} {:>8} {:>8.3} {:>9.5} {:>9.5}\n",
        "IoU", "IoU_w5", "F-score", "Pene%", "Jitter", "FS", r.iou, r.iou_w5, f, r.pene_pct, r.jitter, r.foot_skating
    )
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut spec: SynthSpec = match &a.spec {
        Some(p) => read_json(p)?,
        None => SynthSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let cap = generate(&spec)?;
    save_sequence(&a.out, &cap.sequence, Some(Setting::MvRgbd))?;
    save_assets(&a.out.join("assets.json"), &cap.model.assets)?;
    write_json(&a.out.join("ground_truth.json"), &cap.truth)?;
    log::info!(
        "wrote {} frames from {} views to {}",
        cap.sequence.frames(),
        cap.sequence.rig.cameras.len(),
        a.out.display()
    );
    Ok(())
}

fn export(a: ExportArgs) -> Result<()> {
    let model = BodyModel::new(load_assets(&a.assets)?)?;
    let solution = load_solution(&a.solution)?;
    solution.validate(&model)?;
    if !a.no_mesh {
        let files = write_mesh_sequence(&a.out, &model, &solution)?;
        log::info!("wrote {} meshes", files.len());
    }
    if !a.no_joints {
        write_text(&a.out.join("joints.csv"), &joints_csv(&model, &solution))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}
