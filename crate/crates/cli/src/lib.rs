//! Command implementations behind the `modkf` binary.
//!
//! Every command is a plain function so it can be tested without spawning a
//! process; `main.rs` only parses arguments and reports errors.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use modkf::enhancer::{enhance, run_bins, EnhancerConfig, TraceBins};
use modkf::metrics::{evaluate, Metrics};
use modkf::reverb::{ab_to_gamma_beta, room_to_ab, RoomParams};
use modkf::simkit::{stft_scene, NoiseKind};
use modkf::stft::AudioBuffer;
use modkf::trace::{truth_header, truth_records, write_trace};
use modkf::wav::{read_wav, write_wav};

/// A simulated room with its tabulated reverberation parameters at 8 ms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRoom {
    pub label: char,
    pub t60: f64,
    pub drr: f64,
    /// Room dimensions in metres.
    pub size: [f64; 3],
    pub a: f64,
    pub b: f64,
}

const SMALL: [f64; 3] = [5.0, 4.0, 4.0];
const LARGE: [f64; 3] = [10.0, 7.0, 3.0];

const fn room(label: char, t60: f64, drr: f64, size: [f64; 3], a: f64, b: f64) -> ReferenceRoom {
    ReferenceRoom { label, t60, drr, size, a, b }
}

/// The 22 reference environments, A to I in the small room and J to V in
/// the large one. Source-microphone distance 1.5 m.
pub const REFERENCE_ROOMS: [ReferenceRoom; 22] = [
    room('A', 0.18, 8.43, SMALL, 0.54, 0.07),
    room('B', 0.25, 5.78, SMALL, 0.64, 0.10),
    room('C', 0.33, 3.13, SMALL, 0.72, 0.14),
    room('D', 0.40, 1.69, SMALL, 0.76, 0.16),
    room('E', 0.47, 0.25, SMALL, 0.79, 0.20),
    room('F', 0.54, -0.74, SMALL, 0.81, 0.23),
    room('G', 0.61, -1.74, SMALL, 0.83, 0.25),
    room('H', 0.64, -2.13, SMALL, 0.84, 0.26),
    room('I', 0.68, -2.52, SMALL, 0.85, 0.27),
    room('J', 0.21, 8.07, LARGE, 0.59, 0.06),
    room('K', 0.31, 2.74, LARGE, 0.70, 0.16),
    room('L', 0.40, 0.17, LARGE, 0.76, 0.23),
    room('M', 0.50, 0.11, LARGE, 0.80, 0.19),
    room('N', 0.59, -0.73, LARGE, 0.83, 0.20),
    room('O', 0.64, -0.95, LARGE, 0.84, 0.20),
    room('P', 0.69, -1.12, LARGE, 0.85, 0.19),
    room('Q', 0.71, -1.68, LARGE, 0.86, 0.21),
    room('R', 0.73, -2.01, LARGE, 0.86, 0.22),
    room('S', 0.85, -2.09, LARGE, 0.88, 0.19),
    room('T', 0.97, -2.95, LARGE, 0.89, 0.22),
    room('U', 1.01, -3.11, LARGE, 0.90, 0.20),
    room('V', 1.05, -3.33, LARGE, 0.90, 0.22),
];

/// `a`, `b`, `γ`, `β` for one room.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRow {
    pub t60: f64,
    pub drr: f64,
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
    pub beta: f64,
}

pub fn param_row(t60: f64, drr: f64, frame_increment: f64) -> Result<ParamRow> {
    let room = RoomParams::new(t60, drr, frame_increment)?;
    let (a, b) = room_to_ab(&room)?;
    let (gamma, beta) = ab_to_gamma_beta(a, b)?;
    Ok(ParamRow { t60, drr, a, b, gamma, beta })
}

impl ParamRow {
    pub fn display(&self) -> String {
        format!(
            "t60={:.4} drr={:.4} a={:.4} b={:.4} gamma={:.4} beta={:.4}",
            self.t60, self.drr, self.a, self.b, self.gamma, self.beta
        )
    }
}

/// One line per reference room: label, tabulated and computed `(a, b)`.
pub fn table_text(frame_increment: f64) -> Result<String> {
    let mut s = String::from("label,t60,drr,room,a_table,b_table,a,b,gamma,beta\n");
    for r in &REFERENCE_ROOMS {
        let p = param_row(r.t60, r.drr, frame_increment)?;
        s.push_str(&format!(
            "{},{:.2},{:.2},{}x{}x{},{:.2},{:.2},{:.4},{:.4},{:.4},{:.4}\n",
            r.label, r.t60, r.drr, r.size[0], r.size[1], r.size[2], r.a, r.b, p.a, p.b, p.gamma, p.beta
        ));
    }
    Ok(s)
}

/// T60 samples of the β-against-T60 curves, seconds.
pub const FIG1_T60: (f64, f64, f64) = (0.1, 2.0, 0.05);
/// Fixed DRRs of the β-against-T60 curves, dB.
pub const FIG1_DRRS: [f64; 4] = [-5.0, 0.0, 5.0, 10.0];
/// DRR samples of the β-against-DRR curves, dB.
pub const FIG1_DRR: (f64, f64, f64) = (-10.0, 20.0, 0.5);
/// Fixed T60s of the β-against-DRR curves, seconds.
pub const FIG1_T60S: [f64; 3] = [0.3, 0.5, 1.0];

fn samples((lo, hi, step): (f64, f64, f64)) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

/// CSV of `β` against T60 at fixed DRRs (`curve = t60`) and against DRR at
/// fixed T60s (`curve = drr`).
pub fn fig1_csv(frame_increment: f64) -> Result<String> {
    let mut s = String::from("curve,t60,drr,a,b,gamma,beta\n");
    let mut push = |curve: &str, p: ParamRow| {
        s.push_str(&format!(
            "{curve},{:.4},{:.4},{:.6},{:.6},{:.6},{:.6}\n",
            p.t60, p.drr, p.a, p.b, p.gamma, p.beta
        ));
    };
    for &drr in &FIG1_DRRS {
        for t60 in samples(FIG1_T60) {
            push("t60", param_row(t60, drr, frame_increment)?);
        }
    }
    for &t60 in &FIG1_T60S {
        for drr in samples(FIG1_DRR) {
            push("drr", param_row(t60, drr, frame_increment)?);
        }
    }
    Ok(s)
}

/// Bin selection: `all`, a comma list of bin indices, or `None` for the bin
/// nearest 1 kHz.
pub fn parse_bins(spec: Option<&str>, n_bins: usize, default_bin: usize) -> Result<TraceBins> {
    let Some(spec) = spec else {
        return Ok(TraceBins::Only(vec![default_bin]));
    };
    if spec.trim() == "all" {
        return Ok(TraceBins::All);
    }
    let mut bins = Vec::new();
    for part in spec.split(',') {
        let k: usize = part.trim().parse().with_context(|| format!("bad bin {part:?}"))?;
        ensure!(k < n_bins, "bin {k} out of range 0..{n_bins}");
        bins.push(k);
    }
    ensure!(!bins.is_empty(), "empty bin list");
    Ok(TraceBins::Only(bins))
}

fn bins_list(sel: &TraceBins, n_bins: usize) -> Vec<usize> {
    match sel {
        TraceBins::None => Vec::new(),
        TraceBins::All => (0..n_bins).collect(),
        TraceBins::Only(v) => v.clone(),
    }
}

/// Defaults, then the config file, then `key=value` overrides.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<EnhancerConfig> {
    let mut cfg = match path {
        Some(p) => modkf::config::load(p, EnhancerConfig::default()).with_context(|| format!("reading {}", p.display()))?,
        None => EnhancerConfig::default(),
    };
    for o in overrides {
        let (k, v) = o.split_once('=').with_context(|| format!("override {o:?} is not key=value"))?;
        modkf::config::set(&mut cfg, k, v).map_err(anyhow::Error::msg)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_audio(path: &Path, audio: &AudioBuffer<f64>) -> Result<()> {
    let clipped = write_wav(path, audio).with_context(|| format!("writing {}", path.display()))?;
    if clipped > 0 {
        eprintln!("warning: {clipped} samples clipped in {}", path.display());
    }
    Ok(())
}

fn n_bins_of(cfg: &EnhancerConfig, sample_rate: u32) -> usize {
    cfg.analysis.bins(sample_rate)
}

fn bin_of_1k(cfg: &EnhancerConfig, sample_rate: u32) -> usize {
    let n = cfg.analysis.fft_len(sample_rate) as f64;
    ((1000.0 * n / sample_rate as f64).round() as usize).min(n_bins_of(cfg, sample_rate) - 1)
}

pub struct EnhanceArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    pub trace: Option<PathBuf>,
    pub bins: Option<String>,
    pub config: EnhancerConfig,
}

pub fn cmd_enhance(args: &EnhanceArgs) -> Result<()> {
    let audio = read_wav(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let sr = audio.sample_rate;
    let bins = match &args.trace {
        Some(_) => parse_bins(args.bins.as_deref(), n_bins_of(&args.config, sr), bin_of_1k(&args.config, sr))?,
        None => TraceBins::None,
    };
    let out = enhance(&audio, &args.config, &bins)?;
    if let Some(path) = &args.trace {
        write_trace(create(path)?, &[], &out.traces)?;
    }
    write_audio(&args.output, &out.audio)
}

pub struct SceneArgs {
    pub clean: PathBuf,
    pub t60: f64,
    pub drr: f64,
    pub snr: f64,
    pub noise: NoiseKind,
    pub seed: u64,
    pub bins: Option<String>,
}

fn scene(args: &SceneArgs, cfg: &EnhancerConfig) -> Result<(modkf::simkit::StftScene, TraceBins)> {
    let clean = read_wav(&args.clean).with_context(|| format!("reading {}", args.clean.display()))?;
    ensure!(args.snr.is_finite(), "SNR must be finite");
    let room = RoomParams::new(args.t60, args.drr, cfg.analysis.frame_increment)?;
    let scene = stft_scene(&clean, &room, args.noise, args.snr, args.seed, &cfg.analysis)?;
    let sr = clean.sample_rate;
    let bins = parse_bins(args.bins.as_deref(), n_bins_of(cfg, sr), bin_of_1k(cfg, sr))?;
    Ok((scene, bins))
}

/// Reverberates and adds noise to a clean WAV in the STFT domain; optionally
/// writes the ground truth of the selected bins.
pub fn cmd_simulate(args: &SceneArgs, output: &Path, truth: Option<&Path>) -> Result<()> {
    let cfg = EnhancerConfig::default();
    let (scene, bins) = scene(args, &cfg)?;
    write_audio(output, &scene.observed_audio()?)?;
    if let Some(path) = truth {
        let list = bins_list(&bins, scene.observed.n_bins);
        write_trace(create(path)?, &[truth_header(&scene.truth)], &truth_records(&scene.truth, &list))?;
    }
    Ok(())
}

/// Simulates a scene and writes the filter's trace, with the truth in a
/// second file if requested.
pub fn cmd_track(args: &SceneArgs, cfg: &EnhancerConfig, output: &Path, truth: Option<&Path>) -> Result<()> {
    let (scene, bins) = scene(args, cfg)?;
    let list = bins_list(&bins, scene.observed.n_bins);
    let runs = run_bins(&scene.observed, cfg, Some(&list))?;
    let mut records: Vec<_> = runs.iter().flat_map(|r| r.trace(cfg.analysis.frame_increment)).collect();
    records.sort_by_key(|r| (r.frame, r.bin));
    write_trace(create(output)?, &[truth_header(&scene.truth)], &records)?;
    if let Some(path) = truth {
        write_trace(create(path)?, &[truth_header(&scene.truth)], &truth_records(&scene.truth, &list))?;
    }
    Ok(())
}

pub fn cmd_eval(reference: &Path, test: &Path) -> Result<Metrics> {
    let r = read_wav(reference).with_context(|| format!("reading {}", reference.display()))?;
    let t = read_wav(test).with_context(|| format!("reading {}", test.display()))?;
    if r.len() != t.len() {
        bail!("length mismatch: {} has {} samples, {} has {}", reference.display(), r.len(), test.display(), t.len());
    }
    Ok(evaluate(&r, &t)?)
}

pub fn metrics_json(m: &Metrics) -> String {
    serde_json::json!({
        "cepstral_distance": m.cepstral_distance,
        "log_spectral_distance": m.log_spectral_distance,
        "segmental_snr": m.segmental_snr,
    })
    .to_string()
}

pub fn metrics_text(m: &Metrics) -> String {
    format!(
        "CD {:.2} dB\nLSD {:.2} dB\nsegSNR {:.2} dB",
        m.cepstral_distance, m.log_spectral_distance, m.segmental_snr
    )
}

/// Writes `text` to stdout, failing on a closed pipe rather than panicking.
pub fn print(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
