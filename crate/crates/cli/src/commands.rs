use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use de_core::decoder::{Decoder, DecoderConfig, StageTimings, TraceMode};
use de_core::encoder::{encode, DispKind, EncoderConfig, FieldStack};
use de_core::io::{
    eval_images, poses_to_results, read_scene_records, results_from_json, to_sorted_json, SceneRecord,
};
use de_core::losses::{loss_total, PushPairs};
use de_core::metrics::{average_precision, pckh, ApParams};
use de_core::noise::{jitter_peaks, perturb_displacements, NoiseTarget, PeakJitter};
use de_core::refiner::{refine_pose, RefineConfig};
use de_core::render::{draw_poses, Canvas};
use de_core::rng::SplitMix64;
use de_core::scenegen::generate_scene;
use de_core::{defs, default_coco_skeleton, mpii_skeleton, PersonPose, SkeletonSpec};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{NoiseConfig, RunConfig};
use crate::error::CliError;
use crate::{Cli, Command, DecodeFlags, EncodeFlags, JitterTarget, Metric, Pairs, Trace};

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.skeleton {
        cfg.skeleton = Some(s);
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(jobs) = cfg.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        // a pool can only be installed once per process; later calls are no-ops
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let skel = load_skeleton(cfg.skeleton.as_deref())?;

    match cli.command {
        Command::Gen {
            seed,
            n,
            count,
            width,
            height,
            min_separation,
            drop_prob,
            scale_min,
            scale_max,
            out,
        } => {
            let mut params = cfg.scene;
            set(&mut params.min_separation, min_separation);
            set(&mut params.drop_joint_prob, drop_prob);
            set(&mut params.scale_range.0, scale_min);
            set(&mut params.scale_range.1, scale_max);
            let records: Vec<SceneRecord> = (0..count as u64)
                .into_par_iter()
                .map(|i| {
                    let scene = generate_scene(seed + i, n, width, height, &params, &skel)?;
                    Ok(SceneRecord::from_scene(&scene, &skel))
                })
                .collect::<Result<_, de_core::Error>>()?;
            let text = if count == 1 {
                to_sorted_json(&records[0])?
            } else {
                to_sorted_json(&records)?
            };
            write_text(out.as_deref(), &text)
        }

        Command::Encode {
            input,
            enc,
            no_reverse,
            jitter,
            jitter_target,
            attenuate,
            disp_noise,
            noise_seed,
            out,
        } => {
            let mut enc_cfg = cfg.encoder;
            apply_encode(&mut enc_cfg, &enc);
            if no_reverse {
                enc_cfg.reverse_edges = false;
            }
            let mut noise = cfg.noise;
            set(&mut noise.jitter, jitter);
            set(&mut noise.disp_noise, disp_noise);
            set(&mut noise.seed, noise_seed);
            if let Some(t) = jitter_target {
                noise.jitter_target = match t {
                    JitterTarget::Level2 => NoiseTarget::Level2,
                    JitterTarget::All => NoiseTarget::All,
                };
            }
            if let Some(a) = attenuate {
                noise.attenuate = a.get();
            }
            let text = String::from_utf8(read_input(input.as_deref())?)
                .map_err(|e| CliError::Input(format!("scene is not UTF-8: {e}")))?;
            let records = read_scene_records(&text)?;
            let encode_one = |r: &SceneRecord| -> Result<Vec<u8>, CliError> {
                let poses = r.poses(&skel)?;
                let mut stack = encode(&poses, &skel, &enc_cfg, r.width, r.height)?.stack;
                add_noise(&mut stack, &poses, &skel, &enc_cfg, &noise, r.image_id);
                Ok(defs::to_bytes(&stack))
            };
            match records.as_slice() {
                [one] => write_bytes(out.as_deref(), &encode_one(one)?),
                many => {
                    let dir = out.ok_or_else(|| {
                        CliError::Usage("several scenes need --out <DIR> to receive one file each".into())
                    })?;
                    std::fs::create_dir_all(&dir).map_err(|e| CliError::Internal(format!("{}: {e}", dir.display())))?;
                    many.par_iter().try_for_each(|r| {
                        let path = dir.join(format!("{}.defs", r.image_id));
                        write_bytes(Some(&path), &encode_one(r)?)
                    })
                }
            }
        }

        Command::Decode {
            inputs,
            dec,
            image_id,
            out,
        } => {
            let mut dec_cfg = cfg.decoder;
            apply_decode(&mut dec_cfg, &dec);
            let decoder = Decoder::new(&skel, dec_cfg)?;
            let inputs: Vec<Option<PathBuf>> = if inputs.is_empty() {
                vec![None]
            } else {
                inputs.into_iter().map(Some).collect()
            };
            let per_image: Vec<_> = inputs
                .par_iter()
                .enumerate()
                .map(|(i, path)| {
                    let stack = read_stack(path.as_deref())?;
                    let poses = decoder.decode(&stack)?;
                    Ok(poses_to_results(image_id + i as u64, &poses, &skel))
                })
                .collect::<Result<_, CliError>>()?;
            let results: Vec<_> = per_image.into_iter().flatten().collect();
            write_text(out.as_deref(), &to_sorted_json(&results)?)
        }

        Command::Refine {
            poses,
            stack,
            mrm_threshold,
            stride,
            out,
        } => {
            let mut rcfg = RefineConfig {
                conf_threshold: cfg.decoder.mrm_threshold,
                stride: cfg.decoder.stride,
            };
            set(&mut rcfg.conf_threshold, mrm_threshold);
            set(&mut rcfg.stride, stride);
            let text = read_text(Some(&poses))?;
            let grouped = results_from_json(&text, &skel)?;
            let stack = read_stack(Some(&stack))?;
            let mut results = Vec::new();
            for (id, poses) in grouped {
                let refined: Vec<PersonPose> = poses
                    .iter()
                    .map(|p| refine_pose(&with_stack_confidence(p, &stack, rcfg.stride), &stack, &skel, &rcfg))
                    .collect();
                results.extend(poses_to_results(id, &refined, &skel));
            }
            write_text(out.as_deref(), &to_sorted_json(&results)?)
        }

        Command::Loss {
            pred,
            gt,
            scene,
            alpha,
            beta,
            sigma_tag,
            push,
            d_mask,
            enc,
        } => {
            let mut lcfg = cfg.loss;
            set(&mut lcfg.alpha, alpha);
            set(&mut lcfg.beta, beta);
            set(&mut lcfg.sigma_tag, sigma_tag);
            if let Some(p) = push {
                lcfg.push_pairs = match p {
                    Pairs::Cross => PushPairs::CrossOnly,
                    Pairs::All => PushPairs::AllPairs,
                };
            }
            if let Some(m) = d_mask {
                lcfg.d_mask = m.get();
            }
            let mut enc_cfg = cfg.encoder;
            apply_encode(&mut enc_cfg, &enc);
            let pred = read_stack(Some(&pred))?;
            let gt = read_stack(Some(&gt))?;
            let gt_poses = match scene {
                Some(path) => {
                    let records = read_scene_records(&read_text(Some(&path))?)?;
                    let first = records
                        .first()
                        .ok_or_else(|| CliError::Input("scene file holds no scene".into()))?;
                    first.poses(&skel)?
                }
                None => Decoder::new(&skel, DecoderConfig::default())?.decode(&gt)?,
            };
            let breakdown = loss_total(&pred, &gt, &gt_poses, &skel, &enc_cfg, &lcfg)?;
            write_text(None, &to_sorted_json(&breakdown)?)
        }

        Command::Eval {
            preds,
            gts,
            metric,
            alpha,
        } => {
            let preds = results_from_json(&read_text(Some(&preds))?, &skel)?;
            let gts = read_scene_records(&read_text(Some(&gts))?)?;
            let images = eval_images(preds, &gts, &skel)?;
            let text = match metric {
                Metric::Oks => to_sorted_json(&average_precision(&images, &skel, &ApParams::default()))?,
                Metric::Pckh => {
                    let a = alpha.or(cfg.pckh_alpha).unwrap_or(0.5);
                    to_sorted_json(&pckh(&images, &skel, a)?)?
                }
            };
            write_text(None, &text)
        }

        Command::Bench {
            images,
            n,
            seed,
            size,
            dec,
        } => {
            let mut dec_cfg = cfg.decoder;
            apply_decode(&mut dec_cfg, &dec);
            let decoder = Decoder::new(&skel, dec_cfg)?;
            let stacks: Vec<FieldStack> = (0..images as u64)
                .into_par_iter()
                .map(|i| {
                    let scene = generate_scene(seed + i, n, size, size, &cfg.scene, &skel)?;
                    Ok(encode(&scene.poses(), &skel, &cfg.encoder, size, size)?.stack)
                })
                .collect::<Result<_, de_core::Error>>()?;
            let start = Instant::now();
            let runs: Vec<(usize, StageTimings)> = stacks
                .par_iter()
                .map(|s| decoder.decode_timed(s).map(|(p, t)| (p.len(), t)))
                .collect::<Result<_, _>>()?;
            let wall = start.elapsed();
            let mut stages = StageTimings::default();
            let mut persons = 0;
            for (p, t) in runs {
                persons += p;
                stages += t;
            }
            let ms = |d: Duration| d.as_secs_f64() * 1e3;
            let report = json!({
                "images": images,
                "persons_per_image": n,
                "decoded_persons": persons,
                "size": size,
                "jobs": rayon::current_num_threads(),
                "wall_seconds": wall.as_secs_f64(),
                "images_per_second": images as f64 / wall.as_secs_f64().max(1e-12),
                "stage_ms": {
                    "peaks": ms(stages.peaks),
                    "cluster": ms(stages.cluster),
                    "trace": ms(stages.trace),
                    "assemble": ms(stages.assemble),
                    "refine": ms(stages.refine),
                    "total": ms(stages.total()),
                },
            });
            write_text(None, &to_sorted_json(&report)?)
        }

        Command::Render {
            input,
            stack,
            image_id,
            width,
            height,
            out,
        } => {
            let text = read_text(Some(&input))?;
            let (poses, dims) = match read_scene_records(&text) {
                Ok(records) => {
                    let r = records
                        .iter()
                        .find(|r| image_id.is_none_or(|id| id == r.image_id))
                        .ok_or_else(|| CliError::Input("no scene with the requested image id".into()))?;
                    (r.poses(&skel)?, Some((r.width, r.height)))
                }
                Err(_) => {
                    let grouped = results_from_json(&text, &skel)?;
                    let poses = grouped
                        .into_iter()
                        .filter(|(id, _)| image_id.is_none_or(|want| want == *id))
                        .flat_map(|(_, p)| p)
                        .collect();
                    (poses, None)
                }
            };
            let stack = stack.map(|p| read_stack(Some(&p))).transpose()?;
            let mut canvas = match &stack {
                Some(s) => Canvas::from_heatmap(s),
                None => {
                    let fallback = dims.unwrap_or_else(|| extent(&poses));
                    Canvas::new(width.unwrap_or(fallback.0), height.unwrap_or(fallback.1), [0; 3])
                }
            };
            if stack.is_some() && (width.is_some() || height.is_some()) {
                return Err(CliError::Usage("--width/--height cannot be combined with --stack".into()));
            }
            draw_poses(&mut canvas, &poses, &skel);
            write_bytes(out.as_deref(), &canvas.to_ppm())
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn load_skeleton(name: Option<&str>) -> Result<SkeletonSpec, CliError> {
    match name.unwrap_or("coco") {
        "coco" | "coco17" => Ok(default_coco_skeleton()),
        "mpii" | "mpii16" => Ok(mpii_skeleton()),
        path => {
            let text = read_text(Some(Path::new(path)))?;
            SkeletonSpec::from_json(&text).map_err(|e| CliError::Input(format!("{path}: {e}")))
        }
    }
}

fn apply_encode(cfg: &mut EncoderConfig, flags: &EncodeFlags) {
    set(&mut cfg.sigma, flags.sigma);
    set(&mut cfg.tau, flags.tau);
    set(&mut cfg.stride, flags.stride);
}

fn apply_decode(cfg: &mut DecoderConfig, flags: &DecodeFlags) {
    if let Some(tau) = flags.tau {
        cfg.match_radius = tau;
    }
    set(&mut cfg.match_radius, flags.match_radius);
    set(&mut cfg.peak_threshold, flags.peak_threshold);
    set(&mut cfg.tag_cluster_threshold, flags.tag_threshold);
    set(&mut cfg.mrm_threshold, flags.mrm_threshold);
    set(&mut cfg.max_persons, flags.max_persons);
    set(&mut cfg.stride, flags.stride);
    if let Some(m) = flags.mrm {
        cfg.mrm = m.get();
    }
    if let Some(f) = flags.fallback {
        cfg.fallback = f.get();
    }
    if let Some(t) = flags.trace {
        cfg.trace_mode = match t {
            Trace::Hierarchical => TraceMode::Hierarchical,
            Trace::Basic => TraceMode::BasicOnly,
        };
    }
}

fn add_noise(
    stack: &mut FieldStack,
    poses: &[PersonPose],
    skel: &SkeletonSpec,
    enc: &EncoderConfig,
    noise: &NoiseConfig,
    image_id: u64,
) {
    let mut rng = SplitMix64::derive(noise.seed, image_id);
    if noise.jitter > 0.0 {
        let jitter = PeakJitter {
            sigma: noise.jitter,
            target: noise.jitter_target,
            attenuate: noise.attenuate,
        };
        jitter_peaks(stack, poses, skel, enc, &jitter, &mut rng);
    }
    if noise.disp_noise > 0.0 {
        perturb_displacements(stack, &[DispKind::Hierarchical, DispKind::Basic], noise.disp_noise, &mut rng);
    }
}

/// Copies the stack's confidence at each visible joint into the pose.
fn with_stack_confidence(pose: &PersonPose, stack: &FieldStack, stride: f64) -> PersonPose {
    let mut out = pose.clone();
    for (i, k) in out.joints.iter_mut().enumerate() {
        if !k.visible {
            continue;
        }
        let conf = stack
            .conf
            .get(&de_core::JointId(i as u16))
            .and_then(|g| g.sample_nearest(k.x / stride, k.y / stride));
        k.confidence = conf.map_or(0.0, f64::from);
    }
    out
}

fn extent(poses: &[PersonPose]) -> (usize, usize) {
    let (mut w, mut h) = (1.0f64, 1.0f64);
    for k in poses.iter().flat_map(|p| &p.joints).filter(|k| k.visible) {
        w = w.max(k.x);
        h = h.max(k.y);
    }
    (w.ceil() as usize + 16, h.ceil() as usize + 16)
}

fn is_stdio(path: Option<&Path>) -> bool {
    path.is_none_or(|p| p.as_os_str() == "-")
}

fn read_input(path: Option<&Path>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    if is_stdio(path) {
        std::io::stdin()
            .read_to_end(&mut buf)
            .map_err(|e| CliError::Input(format!("stdin: {e}")))?;
    } else {
        let p = path.expect("checked above");
        buf = std::fs::read(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
    }
    Ok(buf)
}

fn read_text(path: Option<&Path>) -> Result<String, CliError> {
    String::from_utf8(read_input(path)?).map_err(|e| CliError::Input(format!("not UTF-8: {e}")))
}

fn read_stack(path: Option<&Path>) -> Result<FieldStack, CliError> {
    let name = path.map_or("stdin".to_string(), |p| p.display().to_string());
    defs::from_bytes(&read_input(path)?).map_err(|e| CliError::Input(format!("{name}: {e}")))
}

fn write_bytes(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    if is_stdio(path) {
        let mut out = std::io::stdout().lock();
        out.write_all(bytes)
            .and_then(|_| out.flush())
            .map_err(|e| CliError::Internal(format!("stdout: {e}")))
    } else {
        let p = path.expect("checked above");
        std::fs::write(p, bytes).map_err(|e| CliError::Internal(format!("{}: {e}", p.display())))
    }
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    let mut s = String::with_capacity(text.len() + 1);
    s.push_str(text);
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}
