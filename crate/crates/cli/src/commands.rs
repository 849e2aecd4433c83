use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use angiocorr::corrmodel::{
    load_checkpoint, save_checkpoint, train, Checkpoint, CorrError, CorrModel, ModelConfig, Models, Task, TrainConfig,
};
use angiocorr::geometry::Point2;
use angiocorr::harness::{
    evaluate_curves, evaluate_points, load_dataset, make_eval_pairs, mm_per_pixel, render_csv, render_markdown,
    soft_median_check, CurveColumn, CurveTable, Dataset, HarnessError, QueryKind, Report, ReportFormat, TrainingPairs,
};
use angiocorr::phantom::{make_dataset, DatasetConfig, Image2D, PhantomError};
use angiocorr::tracing::{
    cost_from_image, dijkstra_trace, fused_trace, hausdorff_to_polyline, OverlapPhantom, TraceError, TraceResult,
    FUSION_WEIGHT,
};
use angiocorr_service::Session;
use log::{info, warn};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::{Cli, Command, EvalArgs, GenDataArgs, ServeArgs, TraceArgs, TrainArgs};

/// Validation failures exit with 2, everything else with 1.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<CorrError> for Failure {
    fn from(e: CorrError) -> Self {
        match e {
            CorrError::InvalidConfig(_)
            | CorrError::Domain(_)
            | CorrError::ImageSize { .. }
            | CorrError::QueryShape(_)
            | CorrError::WaypointSize { .. }
            | CorrError::TaskMismatch { .. }
            | CorrError::MissingModel(_)
            | CorrError::DatasetNotFound(_)
            | CorrError::VersionMismatch(_)
            | CorrError::CorruptFile(_) => Failure::Validation(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Corr(e) => e.into(),
            HarnessError::Phantom(e) => e.into(),
            HarnessError::Io { .. } | HarnessError::Csv(_) => Failure::Runtime(e.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }
}

impl From<PhantomError> for Failure {
    fn from(e: PhantomError) -> Self {
        match e {
            PhantomError::InvalidConfig(_) => Failure::Validation(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<TraceError> for Failure {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::Phantom(e) => e.into(),
            other => Failure::Validation(other.to_string()),
        }
    }
}

fn invalid(m: impl Into<String>) -> Failure {
    Failure::Validation(m.into())
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    dataset: Option<DatasetConfig>,
    model: Option<ModelConfig>,
    train: Option<TrainConfig>,
}

fn read_config(path: Option<&Path>) -> Result<FileConfig, Failure> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let bytes = fs::read(path).map_err(|e| invalid(format!("config {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| invalid(format!("config {}: {e}", path.display())))
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let file = read_config(cli.config.as_deref())?;
    match cli.command {
        Command::GenData(a) => gen_data(a, file, cli.seed),
        Command::Train(a) => train_cmd(a, file, cli.seed),
        Command::Eval(a) => eval_cmd(a, cli.seed.unwrap_or(0)),
        Command::Trace(a) => trace_cmd(a),
        Command::Serve(a) => serve_cmd(a),
    }
}

fn gen_data(a: GenDataArgs, file: FileConfig, seed: Option<u64>) -> Result<(), Failure> {
    let mut cfg = file.dataset.unwrap_or_default();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = a.subjects {
        cfg.subjects = n;
    }
    if let Some(size) = a.image_size {
        if size == 0 {
            return Err(invalid("image size must be positive"));
        }
        cfg.geometry = cfg.geometry.with_image_size(size);
    }
    if let Some(v) = a.val_fraction {
        cfg.val_fraction = v;
    }
    if let Some(t) = a.test_fraction {
        cfg.test_fraction = t;
    }
    let m = make_dataset(&a.out, &cfg)?;
    info!(
        "wrote {} subjects x 2 sides x {} views to {} (train {}, val {}, test {})",
        m.subjects.len(),
        m.views.len(),
        a.out.display(),
        m.splits.train.len(),
        m.splits.val.len(),
        m.splits.test.len()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs, file: FileConfig, seed: Option<u64>) -> Result<(), Failure> {
    let task: Task = a.task.parse()?;
    let mut model_cfg = match file.model {
        Some(m) if m.task != task => {
            return Err(invalid(format!("config model is for {}, --task is {task}", m.task)));
        }
        Some(m) => m,
        None => ModelConfig::toy(task),
    };
    if let Some(s) = a.size {
        model_cfg.input_size = s;
    }
    if let Some(n) = a.waypoints {
        model_cfg.waypoint_n = n;
    }
    model_cfg.validate()?;
    let mut cfg = file.train.unwrap_or_default();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(v) = a.steps {
        cfg.steps = v;
    }
    if let Some(v) = a.queries {
        cfg.queries = v;
    }
    if let Some(v) = a.lr {
        cfg.adam.lr = v;
    }
    if let Some(v) = a.lr_backbone {
        cfg.adam.lr_backbone = v;
    }
    if let Some(v) = a.log_every {
        cfg.log_every = v;
    }
    if cfg.queries == 0 {
        return Err(invalid("queries per step must be positive"));
    }
    let ds = load_dataset(&a.data)?;
    let mut source = TrainingPairs::new(&ds, model_cfg.input_size)?;
    let mut model = CorrModel::new(model_cfg, cfg.seed)?;
    info!("training {task} for {} steps at {} px", cfg.steps, model_cfg.input_size);
    let out = train(&mut model, &mut source, &cfg, |l| {
        info!("step {:>6}  loss {:.5}  forward {:.5}  cycle {:.5}", l.step, l.loss, l.forward, l.cycle)
    })?;
    let ck = Checkpoint { model, loss: cfg.loss, seed: cfg.seed, step: out.steps as u64 };
    save_checkpoint(&a.out, &ck)?;
    info!("saved {}", a.out.display());
    Ok(())
}

fn load(path: &Path, task: Task) -> Result<CorrModel, Failure> {
    Ok(load_checkpoint(path, Some(task))?.model)
}

fn eval_cmd(a: EvalArgs, seed: u64) -> Result<(), Failure> {
    let format: ReportFormat = a.format.parse()?;
    let ds = load_dataset(&a.data)?;
    let p2p = load(&a.p2p, Task::P2p)?;
    let c2cs = a.c2c.iter().map(|p| load(p, Task::C2c)).collect::<Result<Vec<_>, _>>()?;
    let size = p2p.config.input_size;
    if let Some(c) = c2cs.iter().find(|c| c.config.input_size != size) {
        return Err(invalid(format!("checkpoint sizes differ: p2p {size}, c2c {}", c.config.input_size)));
    }
    let mut pairs = make_eval_pairs(&ds, seed)?;
    if let Some(k) = a.max_pairs {
        pairs.truncate(k);
    }
    let mmpp = mm_per_pixel(&ds.manifest.geometry, size);
    let mut provider = ds.at_size(size);
    info!("evaluating {} pairs at {size} px ({mmpp:.3} mm/px)", pairs.len());

    let mut points = None;
    let mut columns = Vec::new();
    for (i, c2c) in c2cs.into_iter().enumerate() {
        let n = c2c.config.waypoint_n;
        let models = Models::new(Some(p2p.clone()), Some(c2c))?;
        let kinds: &[QueryKind] = if i == 0 { &QueryKind::ALL } else { &[QueryKind::Centerline] };
        let run = evaluate_points(&models, &mut provider, &pairs, kinds, mmpp)?;
        let curves = evaluate_curves(&models, &mut provider, &pairs, n, mmpp)?;
        columns.push(CurveColumn::new(&run, &curves));
        if i == 0 {
            for w in soft_median_check(&run.table) {
                warn!("{w}");
            }
            points = Some(run.table);
        }
    }
    let report = Report { points, curves: Some(CurveTable { columns }) };
    let text = match format {
        ReportFormat::Markdown => render_markdown(&report),
        ReportFormat::Csv => render_csv(&report)?,
    };
    match &a.out {
        Some(p) => fs::write(p, text).map_err(|e| io_error(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn trace_json(r: &TraceResult) -> Value {
    json!({
        "path": r.path.iter().map(|&(x, y)| [x, y]).collect::<Vec<_>>(),
        "total_cost": r.total_cost,
        "steps": r.steps.len(),
    })
}

fn overlay(img: &Image2D, path: &[(usize, usize)]) -> Image2D {
    let mut out = img.clone();
    for &(x, y) in path {
        out.set(x, y, 0.0);
    }
    out
}

fn write_overlay(dir: Option<&Path>, name: &str, img: &Image2D, path: &[(usize, usize)]) -> Result<(), Failure> {
    let Some(dir) = dir else { return Ok(()) };
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let p: PathBuf = dir.join(name);
    fs::write(&p, overlay(img, path).to_pgm()).map_err(|e| io_error(&p, e))
}

fn emit_json(v: &Value, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).expect("JSON values serialize");
    match out {
        Some(p) => fs::write(p, text + "\n").map_err(|e| io_error(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn trace_cmd(a: TraceArgs) -> Result<(), Failure> {
    let dir = a.overlay_dir.as_deref();
    if a.overlap {
        let ph = OverlapPhantom::new(a.size)?;
        let (c1, c2) = (cost_from_image(&ph.view1)?, cost_from_image(&ph.view2)?);
        let (from, to) = (a.from.unwrap_or(ph.seed_a), a.to.unwrap_or(ph.seed_b));
        let single = dijkstra_trace(&c1, from, to)?;
        let fused = fused_trace(&c1, &c2, |p| ph.correspondence(p), FUSION_WEIGHT, from, to)?;
        let h = |r: &TraceResult| hausdorff_to_polyline(&r.path, &ph.branch, 0.25);
        write_overlay(dir, "single.pgm", &ph.view1, &single.path)?;
        write_overlay(dir, "fused.pgm", &ph.view1, &fused.path)?;
        let mut s = trace_json(&single);
        s["hausdorff_px"] = h(&single).into();
        let mut f = trace_json(&fused);
        f["hausdorff_px"] = h(&fused).into();
        return emit_json(&json!({ "single": s, "fused": f }), a.out.as_deref());
    }
    let (Some(data), Some(view)) = (&a.data, a.view) else {
        return Err(invalid("give --overlap or --data with --view"));
    };
    let (Some(from), Some(to)) = (a.from, a.to) else {
        return Err(invalid("--from and --to are required with --data"));
    };
    let ds = load_dataset(data)?;
    let img = ds.image(view)?;
    let c1 = cost_from_image(&img)?;
    let result = match (a.target, &a.p2p) {
        (Some(target), Some(ck)) => {
            let tgt = ds.image(target)?;
            let grid = model_correspondence(&ds, load(ck, Task::P2p)?, &img, &tgt)?;
            let c2 = cost_from_image(&tgt)?;
            fused_trace(&c1, &c2, |p| grid.lookup(p), FUSION_WEIGHT, from, to)?
        }
        _ => dijkstra_trace(&c1, from, to)?,
    };
    write_overlay(dir, "trace.pgm", &img, &result.path)?;
    emit_json(&trace_json(&result), a.out.as_deref())
}

/// P2P predictions for every model-resolution pixel of the reference view,
/// in target pixels at full resolution.
struct CorrespondenceGrid {
    model: usize,
    image: usize,
    points: Vec<Point2>,
}

impl CorrespondenceGrid {
    fn lookup(&self, (x, y): (usize, usize)) -> Option<Point2> {
        let (gx, gy) = (x * self.model / self.image, y * self.model / self.image);
        self.points.get(gy * self.model + gx).copied()
    }
}

fn model_correspondence(ds: &Dataset, p2p: CorrModel, reference: &Image2D, target: &Image2D) -> Result<CorrespondenceGrid, Failure> {
    let (m, w) = (p2p.config.input_size, ds.manifest.geometry.image_size);
    if w % m != 0 || reference.width != w {
        return Err(invalid(format!("cannot scale {w} px images to the {m} px model")));
    }
    let down = |img: &Image2D| img.downsample(w / m);
    let models = Models::new(Some(p2p), None)?;
    let enc = models.encode(&down(reference)?, &down(target)?)?;
    let queries: Vec<Point2> = (0..m * m).map(|i| Point2::new((i % m) as f64 + 0.5, (i / m) as f64 + 0.5)).collect();
    let scale = w as f64 / m as f64;
    let mut points = Vec::with_capacity(queries.len());
    for chunk in queries.chunks(1024) {
        points.extend(models.p2p(&enc, chunk)?.into_iter().map(|p| Point2::new(p.x * scale, p.y * scale)));
    }
    Ok(CorrespondenceGrid { model: m, image: w, points })
}

fn serve_cmd(a: ServeArgs) -> Result<(), Failure> {
    let ds = a.data.as_deref().map(load_dataset).transpose()?;
    let p2p = a.p2p.as_deref().map(|p| load(p, Task::P2p)).transpose()?;
    let c2c = a.c2c.as_deref().map(|p| load(p, Task::C2c)).transpose()?;
    let session = Session::new(ds, Models::new(p2p, c2c)?).map_err(|e| invalid(e.to_string()))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Runtime(e.to_string()))?;
    rt.block_on(async {
        let addr = format!("{}:{}", a.host, a.port);
        let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| Failure::Runtime(format!("{addr}: {e}")))?;
        info!("listening on http://{addr}");
        angiocorr_service::serve(listener, session).await.map_err(|e| Failure::Runtime(e.to_string()))
    })
}
