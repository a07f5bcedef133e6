//! Command implementations behind the `bevlift` binary.
//!
//! A frame directory, as written by `simulate`, holds:
//!
//! ```text
//! frame.txt              stride and camera names
//! cloud.cffp             LiDAR sweep
//! scene.txt              the simulated scene
//! <cam>.calib            calibration text
//! <cam>_heatmap.cfft     [K, H, W]
//! <cam>_features.cfft    [C, H, W]
//! <cam>_depth_gt.cfft    [2, H, W] exact depth and mask
//! manifest.txt           sha256 of every file above
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use bevlift::augment::{apply_to_cloud, replay_on_pseudo_points, sample_params, AugmentationParams};
use bevlift::bev::BevFeatureGrid;
use bevlift::config::Settings;
use bevlift::depthfill::{ipbasic_complete, nn_complete, DenseDepthMap};
use bevlift::geometry::render_sparse_depth;
use bevlift::io::{
    bev_header, bev_to_tensor, calibration_from_text, calibration_to_text, cloud_from_bytes, cloud_to_bytes,
    depth_from_tensor, depth_to_tensor, features_from_tensor, features_to_tensor, heatmap_from_tensor,
    heatmap_to_tensor, key_values, occupancy_pgm, pseudo_points_from_tensor, pseudo_points_to_tensor, Tensor,
};
use bevlift::pipeline::{fuse_frame, threshold_sweep, CameraInput, FrameInput, FrameStats, SweepReport};
use bevlift::simscene::{random_scene, simulate_frame, SceneGenConfig, SceneSpec};

pub const MANIFEST: &str = "manifest.txt";
pub const FRAME_INFO: &str = "frame.txt";
pub const CLOUD_FILE: &str = "cloud.cffp";
pub const SCENE_FILE: &str = "scene.txt";

#[derive(Debug, Parser)]
#[command(name = "bevlift", version, about = "Keypoint-gated camera-to-BEV feature projection")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Seed for simulation and sampled augmentation
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Heatmap selection threshold in [0, 1]
    #[arg(long, global = true)]
    pub threshold: Option<f32>,
    /// BEV cell size in metres
    #[arg(long, global = true)]
    pub cell_size: Option<f64>,
    /// Image-to-grid downsampling factor used when simulating
    #[arg(long, global = true)]
    pub stride: Option<u32>,
    /// Key-value file overriding defaults
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a frame: LiDAR sweep plus per-camera heatmaps, features and depth
    Simulate(SimulateArgs),
    /// Fuse one frame into camera, LiDAR and fused BEV grids
    Project(ProjectArgs),
    /// Sweep selection thresholds and report projection latency
    Bench(BenchArgs),
    /// Apply an augmentation to a cloud and, optionally, pseudo-points
    Augment(AugmentArgs),
    /// Complete one camera's depth and report RMSE against ground truth
    Depth(DepthArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scene text file; omit to generate a random scene from the seed
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Object count for a generated scene
    #[arg(long, default_value_t = 30)]
    pub objects: usize,
    /// Nearest and farthest object distance for a generated scene
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    pub distance: Option<Vec<f64>>,
    #[arg(long)]
    pub cameras: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AugmentSource {
    /// Augmentation record `flip_x,flip_y,scale,rot,tx,ty,tz`
    #[arg(long, conflicts_with = "augment_file")]
    pub augment: Option<String>,
    /// File holding an augmentation record
    #[arg(long)]
    pub augment_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub frame: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub augmentation: AugmentSource,
    /// Use each camera's exact depth instead of completing from the cloud
    #[arg(long)]
    pub gt_depth: bool,
    /// Also write an occupancy image of the fused grid
    #[arg(long)]
    pub pgm: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub frame: PathBuf,
    /// Comma-separated thresholds, reported in the given order
    #[arg(long, default_value = "0.5,0.1,0.05,0.01,0.0")]
    pub thresholds: String,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// CSV destination; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub cloud: PathBuf,
    /// Pseudo-point tensor `[N, 5 + C]`
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Augmentation record; sampled from the seed when neither is given
    #[arg(long, conflicts_with = "record_file")]
    pub record: Option<String>,
    #[arg(long)]
    pub record_file: Option<PathBuf>,
    /// Apply the inverse of the given record
    #[arg(long)]
    pub inverse: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DepthMethod {
    Ipbasic,
    Nn,
}

#[derive(Debug, Args)]
pub struct DepthArgs {
    #[arg(long)]
    pub frame: PathBuf,
    #[arg(long, default_value = "cam0")]
    pub camera: String,
    #[arg(long, value_enum, default_value_t = DepthMethod::Ipbasic)]
    pub method: DepthMethod,
    /// Ground-truth depth tensor; defaults to the frame's own when present
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    let settings = resolve_settings(&cli.global)?;
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&settings, &a).map(|_| ()),
        Command::Project(a) => cmd_project(&settings, &a).map(|stats| {
            println!(
                "selected {} lifted {} pooled {} occupied {} projection {:.3} ms",
                stats.selected,
                stats.lifted,
                stats.pooled,
                stats.occupied_cells,
                stats.projection_ms()
            );
        }),
        Command::Bench(a) => cmd_bench(&settings, &a).map(|report| {
            eprintln!("depth completion {:.3} ms (excluded from latency)", report.depth_ms);
        }),
        Command::Augment(a) => cmd_augment(&settings, &a).map(|p| println!("{p}")),
        Command::Depth(a) => cmd_depth(&settings, &a).map(|rmse| {
            if let Some(r) = rmse {
                println!("rmse {r:.6}");
            }
        }),
    }
}

/// Defaults, then the config file, then explicit flags.
pub fn resolve_settings(g: &GlobalArgs) -> Result<Settings> {
    let mut s = Settings::default();
    if let Some(path) = &g.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        s.apply_overrides(&text).with_context(|| format!("in {}", path.display()))?;
    }
    if let Some(seed) = g.seed {
        s.seed = seed;
    }
    if let Some(t) = g.threshold {
        s.threshold = t;
    }
    if let Some(c) = g.cell_size {
        s.grid.cell_size = c;
    }
    if let Some(st) = g.stride {
        s.stride = st;
    }
    s.validate()?;
    Ok(s)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Artifacts {
    dir: PathBuf,
    entries: Vec<(String, String)>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.entries.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    fn finish(mut self) -> Result<Vec<(String, String)>> {
        self.entries.sort();
        let text: String = self.entries.iter().map(|(n, h)| format!("{h}  {n}\n")).collect();
        let path = self.dir.join(MANIFEST);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.entries)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn read_tensor(path: &Path) -> Result<Tensor> {
    Tensor::from_bytes(&read_file(path)?).with_context(|| format!("in {}", path.display()))
}

/// Writes a simulated frame; returns the manifest entries `(file, sha256)`.
pub fn cmd_simulate(s: &Settings, a: &SimulateArgs) -> Result<Vec<(String, String)>> {
    let scene = match &a.scene {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SceneSpec::parse(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => {
            let mut gen = SceneGenConfig {
                num_objects: a.objects,
                num_classes: s.num_classes,
                ..SceneGenConfig::default()
            };
            if let Some(d) = &a.distance {
                ensure!(d[0] >= 0.0 && d[0] < d[1], "distance range must satisfy 0 <= MIN < MAX");
                gen.distance = (d[0], d[1]);
            }
            random_scene(s.seed, &gen)
        }
    };
    let mut rig = s.rig.clone();
    if let Some(n) = a.cameras {
        ensure!(n >= 1, "need at least one camera");
        rig.num_cameras = n;
    }
    let cams = rig.cameras();
    let frame = simulate_frame(
        &scene,
        &cams,
        &s.lidar(),
        s.seed,
        s.stride,
        s.num_classes,
        s.depth_fill.sentinel_depth,
    )?;

    let mut out = Artifacts::new(&a.out)?;
    let names: Vec<&str> = frame.cameras.iter().map(|c| c.name.as_str()).collect();
    out.write(
        FRAME_INFO,
        format!("stride {}\ncameras {}\n", s.stride, names.join(" ")).as_bytes(),
    )?;
    out.write(SCENE_FILE, scene.to_text().as_bytes())?;
    out.write(CLOUD_FILE, &cloud_to_bytes(&frame.cloud))?;
    for cam in &frame.cameras {
        out.write(&format!("{}.calib", cam.name), calibration_to_text(&cam.calib).as_bytes())?;
        out.write(
            &format!("{}_heatmap.cfft", cam.name),
            &heatmap_to_tensor(&cam.heatmap).to_bytes(),
        )?;
        out.write(
            &format!("{}_features.cfft", cam.name),
            &features_to_tensor(&cam.features).to_bytes(),
        )?;
        out.write(
            &format!("{}_depth_gt.cfft", cam.name),
            &depth_to_tensor(&cam.depth_gt).to_bytes(),
        )?;
    }
    out.finish()
}

/// Stride and camera names from `frame.txt`.
pub fn read_frame_info(dir: &Path) -> Result<(u32, Vec<String>)> {
    let path = dir.join(FRAME_INFO);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let (mut stride, mut cameras) = (None, None);
    for (line, key, vals) in key_values(&text) {
        match key.as_str() {
            "stride" if vals.len() == 1 => {
                stride = Some(
                    vals[0]
                        .parse::<u32>()
                        .with_context(|| format!("{}:{line}: bad stride", path.display()))?,
                )
            }
            "cameras" => cameras = Some(vals),
            _ => bail!("{}:{line}: unexpected entry {key:?}", path.display()),
        }
    }
    match (stride, cameras) {
        (Some(s), Some(c)) if s > 0 && !c.is_empty() => Ok((s, c)),
        _ => bail!("{} must name a positive stride and at least one camera", path.display()),
    }
}

/// Loads a frame directory into a pipeline input using `s` for the grid,
/// depth completion and threshold.
pub fn load_frame(dir: &Path, s: &Settings, gt_depth: bool) -> Result<FrameInput> {
    let (stride, names) = read_frame_info(dir)?;
    let cloud_path = dir.join(CLOUD_FILE);
    let cloud = cloud_from_bytes(&read_file(&cloud_path)?).with_context(|| format!("in {}", cloud_path.display()))?;
    let mut cameras = Vec::with_capacity(names.len());
    for name in names {
        let calib_path = dir.join(format!("{name}.calib"));
        let calib_text =
            fs::read_to_string(&calib_path).with_context(|| format!("reading {}", calib_path.display()))?;
        let calib = calibration_from_text(&calib_text).with_context(|| format!("in {}", calib_path.display()))?;
        let hm_path = dir.join(format!("{name}_heatmap.cfft"));
        let heatmap = heatmap_from_tensor(&read_tensor(&hm_path)?, stride)
            .with_context(|| format!("in {}", hm_path.display()))?;
        let fm_path = dir.join(format!("{name}_features.cfft"));
        let features =
            features_from_tensor(&read_tensor(&fm_path)?).with_context(|| format!("in {}", fm_path.display()))?;
        let depth_override = if gt_depth {
            let p = dir.join(format!("{name}_depth_gt.cfft"));
            Some(depth_from_tensor(&read_tensor(&p)?).with_context(|| format!("in {}", p.display()))?)
        } else {
            None
        };
        cameras.push(CameraInput {
            name,
            calib,
            heatmap,
            features,
            depth_override,
        });
    }
    Ok(FrameInput {
        cloud,
        cameras,
        grid: s.grid.clone(),
        depth_fill: s.depth_fill.clone(),
        augmentation: None,
        threshold: s.threshold,
    })
}

fn augmentation_from(src: &AugmentSource) -> Result<Option<AugmentationParams>> {
    let text = match (&src.augment, &src.augment_file) {
        (Some(r), _) => r.clone(),
        (None, Some(path)) => fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        (None, None) => return Ok(None),
    };
    Ok(Some(text.trim().parse().context("parsing augmentation record")?))
}

pub const STATS_HEADER: [&str; 14] = [
    "threshold",
    "pixels",
    "latency_ms",
    "depth_ms",
    "select_ms",
    "lift_ms",
    "pool_ms",
    "lidar_ms",
    "fuse_ms",
    "lifted",
    "guard_dropped",
    "range_dropped",
    "pooled",
    "occupied_cells",
];

pub fn stats_csv(stats: &FrameStats) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(STATS_HEADER)?;
    w.write_record([
        stats.threshold.to_string(),
        stats.selected.to_string(),
        format!("{:.6}", stats.projection_ms()),
        format!("{:.6}", stats.depth_ms),
        format!("{:.6}", stats.select_ms),
        format!("{:.6}", stats.lift_ms),
        format!("{:.6}", stats.pool_ms),
        format!("{:.6}", stats.lidar_ms),
        format!("{:.6}", stats.fuse_ms),
        stats.lifted.to_string(),
        stats.guard_dropped.to_string(),
        stats.range_dropped.to_string(),
        stats.pooled.to_string(),
        stats.occupied_cells.to_string(),
    ])?;
    Ok(w.into_inner()?)
}

fn write_grid(dir: &Path, name: &str, grid: &BevFeatureGrid, s: &Settings) -> Result<()> {
    let path = dir.join(format!("{name}.cfft"));
    bev_to_tensor(grid)
        .write(&path)
        .with_context(|| format!("writing {}", path.display()))?;
    let hdr = dir.join(format!("{name}.hdr"));
    fs::write(&hdr, bev_header(&s.grid, grid.channels)).with_context(|| format!("writing {}", hdr.display()))?;
    Ok(())
}

pub fn cmd_project(s: &Settings, a: &ProjectArgs) -> Result<FrameStats> {
    let mut fi = load_frame(&a.frame, s, a.gt_depth)?;
    fi.augmentation = augmentation_from(&a.augmentation)?;
    let out = fuse_frame(&fi)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_grid(&a.out, "camera_bev", &out.camera, s)?;
    write_grid(&a.out, "lidar_bev", &out.lidar, s)?;
    write_grid(&a.out, "fused_bev", &out.fused, s)?;
    let stats_path = a.out.join("stats.csv");
    fs::write(&stats_path, stats_csv(&out.stats)?).with_context(|| format!("writing {}", stats_path.display()))?;
    if let Some(p) = &fi.augmentation {
        fs::write(a.out.join("augmentation.txt"), format!("{p}\n"))?;
    }
    if a.pgm {
        fs::write(a.out.join("occupancy.pgm"), occupancy_pgm(&out.fused))?;
    }
    Ok(out.stats)
}

pub fn parse_thresholds(list: &str) -> Result<Vec<f32>> {
    list.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f32>().with_context(|| format!("bad threshold {t:?}"))
        })
        .collect()
}

pub fn sweep_csv(report: &SweepReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["threshold", "pixels", "latency_ms"])?;
    for row in &report.rows {
        w.write_record([
            row.threshold.to_string(),
            row.pixels.to_string(),
            format!("{:.6}", row.latency_ms),
        ])?;
    }
    Ok(w.into_inner()?)
}

pub fn cmd_bench(s: &Settings, a: &BenchArgs) -> Result<SweepReport> {
    let thresholds = parse_thresholds(&a.thresholds)?;
    ensure!(!thresholds.is_empty(), "no thresholds given");
    let repetitions = a.repetitions.unwrap_or(s.repetitions);
    let fi = load_frame(&a.frame, s, false)?;
    let report = threshold_sweep(&fi, &thresholds, repetitions)?;
    let csv = sweep_csv(&report)?;
    match &a.out {
        Some(path) => fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{}", String::from_utf8(csv)?),
    }
    Ok(report)
}

/// Returns the parameters actually applied.
pub fn cmd_augment(s: &Settings, a: &AugmentArgs) -> Result<AugmentationParams> {
    let record = match (&a.record, &a.record_file) {
        (Some(r), _) => Some(r.clone()),
        (None, Some(path)) => Some(fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?),
        (None, None) => None,
    };
    let mut params = match record {
        Some(r) => r.trim().parse::<AugmentationParams>().context("parsing augmentation record")?,
        None => sample_params(s.seed, &s.augmentation)?,
    };
    if a.inverse {
        params = params.inverse();
    }

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let cloud = cloud_from_bytes(&read_file(&a.cloud)?).with_context(|| format!("in {}", a.cloud.display()))?;
    fs::write(a.out.join(CLOUD_FILE), cloud_to_bytes(&apply_to_cloud(&cloud, &params)))?;
    if let Some(path) = &a.points {
        let t = read_tensor(path)?;
        let pts = pseudo_points_from_tensor(&t).with_context(|| format!("in {}", path.display()))?;
        let channels = t.dims[1] - 5;
        let moved = replay_on_pseudo_points(pts, &params);
        pseudo_points_to_tensor(&moved, channels)?.write(&a.out.join("points.cfft"))?;
    }
    fs::write(a.out.join("params.txt"), format!("{params}\n"))?;
    Ok(params)
}

/// RMSE over pixels that are in range in both maps.
pub fn depth_rmse(estimate: &DenseDepthMap, truth: &DenseDepthMap) -> Option<f64> {
    let (mut sse, mut n) = (0.0, 0usize);
    for i in 0..estimate.depth.len().min(truth.depth.len()) {
        if estimate.in_range[i] && truth.in_range[i] {
            sse += (estimate.depth[i] - truth.depth[i]).powi(2);
            n += 1;
        }
    }
    (n > 0).then(|| (sse / n as f64).sqrt())
}

pub fn cmd_depth(s: &Settings, a: &DepthArgs) -> Result<Option<f64>> {
    let (stride, names) = read_frame_info(&a.frame)?;
    ensure!(names.contains(&a.camera), "frame has no camera {:?}", a.camera);
    let calib_path = a.frame.join(format!("{}.calib", a.camera));
    let calib = calibration_from_text(
        &fs::read_to_string(&calib_path).with_context(|| format!("reading {}", calib_path.display()))?,
    )
    .with_context(|| format!("in {}", calib_path.display()))?;
    let cloud = cloud_from_bytes(&read_file(&a.frame.join(CLOUD_FILE))?)?;
    let sparse = render_sparse_depth(&cloud, &calib, stride)?;
    let dense = match a.method {
        DepthMethod::Ipbasic => ipbasic_complete(&sparse, &s.depth_fill)?,
        DepthMethod::Nn => nn_complete(&sparse, &s.depth_fill)?,
    };
    depth_to_tensor(&dense)
        .write(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    let gt_path = a
        .gt
        .clone()
        .unwrap_or_else(|| a.frame.join(format!("{}_depth_gt.cfft", a.camera)));
    if !gt_path.exists() {
        return Ok(None);
    }
    let gt = depth_from_tensor(&read_tensor(&gt_path)?).with_context(|| format!("in {}", gt_path.display()))?;
    ensure!(
        (gt.width, gt.height) == (dense.width, dense.height),
        "{} is {}x{}, completion is {}x{}",
        gt_path.display(),
        gt.width,
        gt.height,
        dense.width,
        dense.height
    );
    Ok(depth_rmse(&dense, &gt))
}
