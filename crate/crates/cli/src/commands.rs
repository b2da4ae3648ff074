use std::path::{Path, PathBuf};

use simcon::data::{dataset_windows, synthetic, write_csv, PreparedDataset, RawDataset, WindowSample};
use simcon::eval::{evaluate, ratio_report, BaselineTable, Cell, EvalResult, OutputFormat, Table, TEST_BATCH};
use simcon::model::{Checkpoint, ModelConfig, Variation};
use simcon::pipeline::{
    finetune, gradient_suites, prepare_pretrain, pretrain, pretrain_width_search, similarity_report, suites_table,
    sweep, GradcheckConfig, RunRecord, SweepAxis, TrainRun,
};

use crate::config::{ExperimentConfig, LoadedConfig, PretrainEntry, SplitName};
use crate::error::CliError;
use crate::{Axis, CliResult, Command, GlobalArgs, Stage};

struct Ctx {
    format: OutputFormat,
    seed_override: Option<u64>,
}

impl Ctx {
    fn print(&self, tables: &[Table]) {
        let rendered: Vec<String> = tables.iter().map(|t| t.render(self.format)).collect();
        let sep = if self.format == OutputFormat::Json { "\n" } else { "\n\n" };
        println!("{}", rendered.iter().map(|s| s.trim_end()).collect::<Vec<_>>().join(sep));
    }

    fn load(&self, path: Option<&Path>) -> CliResult<LoadedConfig> {
        let mut loaded = LoadedConfig::load(path)?;
        if let Some(seed) = self.seed_override {
            loaded.config.seed = seed;
        }
        Ok(loaded)
    }
}

pub fn run(global: &GlobalArgs, command: Command) -> CliResult {
    let ctx = Ctx {
        format: global.format.into(),
        seed_override: global.seed,
    };
    let config = global.config.as_deref();
    match command {
        Command::BuildCollection { horizon } => build_collection(&ctx, &ctx.load(config)?, horizon),
        Command::Pretrain { horizons } => pretrain_cmd(&ctx, &ctx.load(config)?, horizons),
        Command::Finetune { target, horizons, checkpoint } => {
            finetune_cmd(&ctx, &ctx.load(config)?, &target, horizons, checkpoint)
        }
        Command::Similarity { horizon, checkpoint, split } => {
            similarity_cmd(&ctx, &ctx.load(config)?, horizon, checkpoint, split)
        }
        Command::Evaluate { horizons, stage, ratios } => evaluate_cmd(&ctx, &ctx.load(config)?, horizons, stage, ratios),
        Command::Sweep { axis, grid, horizons } => sweep_cmd(&ctx, &ctx.load(config)?, axis, grid, horizons),
        Command::Gradcheck { batches } => gradcheck_cmd(&ctx, batches),
        Command::GenSynthetic { out, mixture, with_config } => gen_synthetic(&ctx, &out, mixture, with_config),
    }
}

fn horizons_or_default(loaded: &LoadedConfig, horizons: Option<Vec<usize>>) -> CliResult<Vec<usize>> {
    let horizons = horizons.unwrap_or_else(|| loaded.config.eval.horizons.clone());
    if horizons.is_empty() {
        return Err(CliError::Config("--horizons must not be empty".into()));
    }
    for &h in &horizons {
        model_config(loaded, h)?;
    }
    Ok(horizons)
}

fn model_config(loaded: &LoadedConfig, horizon: usize) -> CliResult<ModelConfig> {
    loaded
        .config
        .model
        .spec()
        .for_horizon(horizon)
        .map_err(|e| CliError::Config(format!("model at horizon {horizon}: {e}")))
}

fn pretrain_path(loaded: &LoadedConfig, horizon: usize) -> PathBuf {
    loaded.output_dir().join(format!("pretrain-O{horizon}.json"))
}

fn finetune_path(loaded: &LoadedConfig, target: &str, horizon: usize) -> PathBuf {
    loaded.output_dir().join(format!("finetune-{target}-O{horizon}.json"))
}

fn create_output_dir(loaded: &LoadedConfig) -> CliResult<PathBuf> {
    let dir = loaded.output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

/// Saves the checkpoint and its run record (`.jsonl` beside it).
fn persist(run: &mut TrainRun, path: &Path) -> CliResult {
    run.checkpoint.save(path)?;
    run.record.checkpoint = Some(path.to_path_buf());
    let record_path = path.with_extension("jsonl");
    std::fs::write(&record_path, run.record.to_json_lines()).map_err(|e| CliError::io(&record_path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn load_checkpoint(path: &Path, hint: &str) -> CliResult<Checkpoint> {
    if !path.exists() {
        return Err(CliError::Core(simcon::Error::Checkpoint(format!(
            "{} not found; run `{hint}` first",
            path.display()
        ))));
    }
    Ok(Checkpoint::load(path)?)
}

fn epoch_table(title: &str, runs: &[(usize, &RunRecord)]) -> Table {
    let mut t = Table::new(
        title,
        ["horizon", "epoch", "loss", "mse", "contrastive", "val_mse", "val_mae", "kept"]
            .map(String::from)
            .to_vec(),
    );
    t.precision = 4;
    for (horizon, record) in runs {
        for e in &record.epochs {
            t.push(vec![
                Cell::Text(horizon.to_string()),
                Cell::Text(e.epoch.to_string()),
                e.loss.into(),
                e.mse.into(),
                e.contrastive.into(),
                e.val_mse.into(),
                e.val_mae.into(),
                Cell::Text(if record.chosen_epoch == Some(e.epoch) { "*" } else { "" }.into()),
            ]);
        }
    }
    t
}

fn results_table(title: &str, results: &[EvalResult]) -> Table {
    let mut t = Table::new(title, ["dataset", "horizon", "mse", "mae", "windows"].map(String::from).to_vec());
    for r in results {
        t.push(vec![
            r.dataset.clone().into(),
            Cell::Text(r.horizon.to_string()),
            r.mse.into(),
            r.mae.into(),
            Cell::Text(r.n_windows.to_string()),
        ]);
    }
    t
}

fn build_collection(ctx: &Ctx, loaded: &LoadedConfig, horizon: Option<usize>) -> CliResult {
    let horizon = horizon.unwrap_or(loaded.config.eval.horizons[0]);
    let mc = model_config(loaded, horizon)?;
    let sources = loaded.pretrain_sources()?;
    let prepared = prepare_pretrain(&sources, &loaded.config.split, mc.input_len, horizon)?;
    let total = prepared.collection.len().max(1) as f64;
    let mut t = Table::new(
        format!("pretrain collection (I={}, O={horizon})", mc.input_len),
        ["dataset", "train_rows", "features", "stride", "repetition", "windows", "share_pct"]
            .map(String::from)
            .to_vec(),
    );
    t.precision = 2;
    for ((entry, d), &count) in loaded
        .config
        .datasets
        .pretrain
        .iter()
        .zip(&prepared.datasets)
        .zip(&prepared.collection.per_dataset_counts)
    {
        let used = entry.features.resolve(d.num_features())?.len();
        t.push(vec![
            d.name.clone().into(),
            Cell::Text(d.split.train.len().to_string()),
            Cell::Text(format!("{used}/{}", d.num_features())),
            Cell::Text(entry.stride.to_string()),
            Cell::Text(entry.repetition.to_string()),
            Cell::Text(count.to_string()),
            (100.0 * count as f64 / total).into(),
        ]);
    }
    log::info!(
        "collection: {} windows, {} validation windows",
        prepared.collection.len(),
        prepared.validation.len()
    );
    ctx.print(&[t]);
    Ok(())
}

fn pretrain_cmd(ctx: &Ctx, loaded: &LoadedConfig, horizons: Option<Vec<usize>>) -> CliResult {
    let horizons = horizons_or_default(loaded, horizons)?;
    let sources = loaded.pretrain_sources()?;
    create_output_dir(loaded)?;
    let c = &loaded.config;
    let mut runs = Vec::new();
    for &horizon in &horizons {
        let mc = model_config(loaded, horizon)?;
        let prepared = prepare_pretrain(&sources, &c.split, mc.input_len, horizon)?;
        log::info!("pretrain O={horizon}: {} windows", prepared.collection.len());
        let mut run = match mc.variation {
            Variation::TwoLayerMlp { .. } => {
                let widths: Vec<usize> = c.model.mlp_width_multipliers.iter().map(|m| m * mc.rep_dim).collect();
                let (run, width) =
                    pretrain_width_search(&prepared.collection, &prepared.validation, mc, &widths, &c.training, c.seed)?;
                log::info!("pretrain O={horizon}: hidden width {width} chosen from {widths:?}");
                run
            }
            _ => pretrain(&prepared.collection, &prepared.validation, mc, &c.training, c.seed)?,
        };
        run.checkpoint.normalization = prepared.normalization();
        persist(&mut run, &pretrain_path(loaded, horizon))?;
        runs.push((horizon, run.record));
    }
    let refs: Vec<(usize, &RunRecord)> = runs.iter().map(|(h, r)| (*h, r)).collect();
    ctx.print(&[epoch_table("pretrain", &refs)]);
    Ok(())
}

fn finetune_cmd(
    ctx: &Ctx,
    loaded: &LoadedConfig,
    target: &str,
    horizons: Option<Vec<usize>>,
    checkpoint: Option<PathBuf>,
) -> CliResult {
    let horizons = horizons_or_default(loaded, horizons)?;
    if checkpoint.is_some() && horizons.len() != 1 {
        return Err(CliError::Config("--checkpoint needs exactly one horizon".into()));
    }
    let c = &loaded.config;
    let raw = loaded.target(target)?;
    let sources = loaded.pretrain_sources()?;
    create_output_dir(loaded)?;
    let mut runs = Vec::new();
    let mut results = Vec::new();
    for &horizon in &horizons {
        let path = checkpoint.clone().unwrap_or_else(|| pretrain_path(loaded, horizon));
        let pretrained = load_checkpoint(&path, "pretrain")?;
        let mc = pretrained.model.config;
        if mc.horizon != horizon {
            return Err(CliError::Config(format!(
                "{} forecasts {} steps, not {horizon}",
                path.display(),
                mc.horizon
            )));
        }
        let prepared = prepare_pretrain(&sources, &c.split, mc.input_len, horizon)?;
        let target_data = PreparedDataset::prepare(&raw, &c.split, mc.input_len + horizon)?;
        log::info!("finetune {target} O={horizon} from {}", path.display());
        let mut run = finetune(&pretrained, &target_data, &prepared.collection, &c.training, c.seed)?;
        results.push(evaluate(&run.checkpoint.model, &target_data, target_data.split.test.clone(), TEST_BATCH)?);
        persist(&mut run, &finetune_path(loaded, target, horizon))?;
        runs.push((horizon, run.record));
    }
    let refs: Vec<(usize, &RunRecord)> = runs.iter().map(|(h, r)| (*h, r)).collect();
    ctx.print(&[epoch_table(&format!("finetune {target}"), &refs), results_table("finetuned test error", &results)]);
    Ok(())
}

fn split_windows(d: &PreparedDataset, split: SplitName, mc: &ModelConfig) -> CliResult<Vec<WindowSample>> {
    let range = match split {
        SplitName::Train => d.split.train.clone(),
        SplitName::Val => d.split.val.clone(),
        SplitName::Test => d.split.test.clone(),
    };
    let features: Vec<usize> = (0..d.num_features()).collect();
    Ok(dataset_windows(&d.values, range, &features, mc.input_len, mc.horizon, 1, 0)?)
}

fn similarity_cmd(
    ctx: &Ctx,
    loaded: &LoadedConfig,
    horizon: Option<usize>,
    checkpoint: Option<PathBuf>,
    split: Option<SplitName>,
) -> CliResult {
    let c = &loaded.config;
    let path = match checkpoint {
        Some(p) => p,
        None => pretrain_path(loaded, horizon.unwrap_or(c.eval.horizons[0])),
    };
    let ckpt = load_checkpoint(&path, "pretrain")?;
    let mc = ckpt.model.config;
    let split = split.unwrap_or(c.eval.similarity_split);
    let prepared = prepare_pretrain(&loaded.pretrain_sources()?, &c.split, mc.input_len, mc.horizon)?;
    let groups = loaded
        .targets()?
        .iter()
        .map(|raw| {
            let d = PreparedDataset::prepare(raw, &c.split, mc.input_len + mc.horizon)?;
            Ok((d.name.clone(), split_windows(&d, split, &mc)?))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let matrix = similarity_report(&ckpt.model, &prepared.collection, &groups, &c.training, c.seed)?;
    ctx.print(&[matrix.to_table()]);
    Ok(())
}

fn evaluate_cmd(
    ctx: &Ctx,
    loaded: &LoadedConfig,
    horizons: Option<Vec<usize>>,
    stage: Stage,
    ratios: bool,
) -> CliResult {
    let horizons = horizons_or_default(loaded, horizons)?;
    let c = &loaded.config;
    let targets = loaded.targets()?;
    let mut results = Vec::new();
    for &horizon in &horizons {
        let pretrained = match stage {
            Stage::Pretrain => Some(load_checkpoint(&pretrain_path(loaded, horizon), "pretrain")?),
            Stage::Finetune => None,
        };
        for raw in &targets {
            let ckpt = match &pretrained {
                Some(p) => p.clone(),
                None => load_checkpoint(
                    &finetune_path(loaded, &raw.name, horizon),
                    &format!("finetune --target {}", raw.name),
                )?,
            };
            let mc = ckpt.model.config;
            let d = PreparedDataset::prepare(raw, &c.split, mc.input_len + mc.horizon)?;
            results.push(evaluate(&ckpt.model, &d, d.split.test.clone(), TEST_BATCH)?);
        }
    }
    let title = match stage {
        Stage::Pretrain => "zero-shot test error",
        Stage::Finetune => "finetuned test error",
    };
    let mut tables = vec![results_table(title, &results)];
    if ratios {
        let baselines = match loaded.baselines_path() {
            Some(p) => BaselineTable::load(p)?,
            None => BaselineTable::bundled(),
        };
        tables.push(ratio_report(&results, &baselines));
    }
    ctx.print(&tables);
    Ok(())
}

fn sweep_cmd(
    ctx: &Ctx,
    loaded: &LoadedConfig,
    axis: Axis,
    grid: Option<Vec<f64>>,
    horizons: Option<Vec<usize>>,
) -> CliResult {
    let c = &loaded.config;
    let (axis, default_grid) = match axis {
        Axis::Lambda => (SweepAxis::Lambda, &c.eval.lambda_grid),
        Axis::Tau => (SweepAxis::Temperature, &c.eval.tau_grid),
    };
    let grid = grid.unwrap_or_else(|| default_grid.clone());
    let horizons = horizons_or_default(loaded, horizons)?;
    let table = sweep(
        &loaded.pretrain_sources()?,
        &loaded.targets()?,
        &c.split,
        &c.model.spec(),
        &c.training,
        axis,
        &grid,
        &horizons,
        c.seed,
    )?;
    ctx.print(&table.to_tables());
    Ok(())
}

fn gradcheck_cmd(ctx: &Ctx, batches: usize) -> CliResult {
    let mut cfg = GradcheckConfig { batches, ..GradcheckConfig::default() };
    if let Some(seed) = ctx.seed_override {
        cfg.seed = seed;
    }
    let results = gradient_suites(&cfg)?;
    ctx.print(&[suites_table(&results)]);
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::CheckFailed(format!("{failed} of {} gradient suites failed", results.len())));
    }
    Ok(())
}

fn gen_synthetic(ctx: &Ctx, out: &Path, mixture: Option<f64>, with_config: bool) -> CliResult {
    if let Some(w) = mixture {
        if !(0.0..=1.0).contains(&w) {
            return Err(CliError::Config(format!("--mixture must lie in [0, 1], got {w}")));
        }
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let seed = ctx.seed_override.unwrap_or(0);
    let regimes = synthetic::regimes(seed);
    let mut written: Vec<(RawDataset, PathBuf)> = Vec::new();
    for ds in regimes.iter().cloned().chain(mixture.map(|w| synthetic::mixture(seed, w))) {
        let path = out.join(format!("{}.csv", ds.name));
        write_csv(&ds, &path)?;
        written.push((ds, path));
    }
    if with_config {
        let mut config = ExperimentConfig { seed, ..ExperimentConfig::default() };
        config.eval.horizons = vec![96, 192];
        config.datasets.pretrain = regimes
            .iter()
            .map(|d| PretrainEntry {
                name: d.name.clone(),
                path: format!("{}.csv", d.name).into(),
                stride: 1,
                repetition: 1,
                features: Default::default(),
            })
            .collect();
        let path = out.join("experiment.toml");
        std::fs::write(&path, config.to_toml()).map_err(|e| CliError::io(&path, e))?;
        log::info!("wrote {}", path.display());
    }
    let mut t = Table::new(
        format!("synthetic datasets (seed {seed})"),
        ["dataset", "rows", "features", "path"].map(String::from).to_vec(),
    );
    for (ds, path) in &written {
        t.push(vec![
            ds.name.clone().into(),
            Cell::Text(ds.len().to_string()),
            Cell::Text(ds.num_features().to_string()),
            Cell::Text(path.display().to_string()),
        ]);
    }
    ctx.print(&[t]);
    Ok(())
}
