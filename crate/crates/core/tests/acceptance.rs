//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use de_core::decoder::{Decoder, DecoderConfig, TraceMode};
use de_core::encoder::{encode, DispKind, EncoderConfig};
use de_core::losses::{loss_total, tag_loss_from_samples, LossConfig, PushPairs};
use de_core::metrics::{average_precision, oks, pckh, pckh_threshold, ApParams, EvalImage, GtInstance};
use de_core::noise::{jitter_peaks, perturb_displacements, NoiseTarget, PeakJitter};
use de_core::refiner::fuse;
use de_core::rng::SplitMix64;
use de_core::scenegen::SceneParams;
use de_core::{defs, default_coco_skeleton, JointId, Keypoint, PersonPose, SkeletonSpec};
use rand::Rng;

use common::{bootstrap_lower, match_persons, mean, scene, SIZE};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn round_trip_params() -> SceneParams {
    let enc = EncoderConfig::default();
    let dec = DecoderConfig::default();
    SceneParams {
        min_separation: 2.0 * enc.tau.max(dec.match_radius) + 1.0,
        drop_joint_prob: 0.1,
        ..Default::default()
    }
}

fn criterion_1_round_trip() -> Outcome {
    let skel = default_coco_skeleton();
    let enc = EncoderConfig::default();
    let decoder = Decoder::new(&skel, DecoderConfig::default()).unwrap();
    let params = round_trip_params();
    let start = Instant::now();
    let (mut persons, mut found, mut joints, mut exact, mut spurious) = (0, 0, 0, 0, 0);
    let mut worst: f64 = 0.0;
    for seed in 0..200u64 {
        let sc = scene(seed, None, &params, &skel);
        let gts = sc.poses();
        let stack = encode(&gts, &skel, &enc, SIZE, SIZE).unwrap().stack;
        let decoded = decoder.decode(&stack).unwrap();
        persons += gts.len();
        if decoded.len() != gts.len() {
            continue;
        }
        for (g, m) in gts.iter().zip(match_persons(&decoded, &gts, &skel)) {
            let Some(m) = m else { continue };
            found += 1;
            for j in skel.annotated_ids() {
                let (gk, dk) = (&g.joints[j.index()], &decoded[m].joints[j.index()]);
                match (gk.visible, dk.visible) {
                    (true, true) => {
                        joints += 1;
                        let d = gk.distance_to(dk);
                        worst = worst.max(d);
                        if d <= 1.0 {
                            exact += 1;
                        }
                    }
                    (true, false) => joints += 1,
                    (false, true) => spurious += 1,
                    (false, false) => {}
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = found == persons && exact == joints && spurious == 0 && secs < 60.0;
    outcome(
        pass,
        format!(
            "persons {found}/{persons}, joints within 1px {exact}/{joints} (max err {worst:.3}), \
             misassigned joints {spurious}, {secs:.1}s"
        ),
    )
}

fn criterion_2_losses() -> Outcome {
    let skel = default_coco_skeleton();
    let enc = EncoderConfig::default();
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let sc = scene(seed, None, &round_trip_params(), &skel);
        let stack = encode(&sc.poses(), &skel, &enc, SIZE, SIZE).unwrap().stack;
        let l = loss_total(&stack, &stack, &sc.poses(), &skel, &enc, &LossConfig::default()).unwrap();
        worst = worst.max(l.confidence.abs()).max(l.displacement.abs()).max(l.pull.abs());
    }
    let mut push_err: f64 = 0.0;
    for n in 1..=10usize {
        let samples: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let got = tag_loss_from_samples(&samples, 1.0, PushPairs::CrossOnly).unwrap().push;
        let mut oracle = 0.0;
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    let d = a as f64 - b as f64;
                    oracle += (-(d * d) / 2.0).exp();
                }
            }
        }
        oracle /= (n * n) as f64;
        push_err = push_err.max((got - oracle).abs());
    }
    outcome(
        worst <= 1e-9 && push_err <= 1e-9,
        format!("max |L^H|,|L^D|,|L_pull| on pred=gt: {worst:e}; max push error vs oracle: {push_err:e}"),
    )
}

fn criterion_3_fusion() -> Outcome {
    let worked = fuse((10.0, 0.0), 0.5, &[((16.0, 0.0), 1.0)]).location.0;
    let mut rng = SplitMix64::new(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.random_range(1..=4);
        let neighbors: Vec<((f64, f64), f64)> = (0..k)
            .map(|_| {
                (
                    (rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0)),
                    rng.random_range(0.75..1.0),
                )
            })
            .collect();
        let f = fuse((rng.random_range(0.0..256.0), 3.0), rng.random_range(0.0..0.75), &neighbors);
        worst = worst.max((f.weights.iter().sum::<f64>() - 1.0).abs());
    }
    outcome(
        worked == 14.0 && worst <= 1e-12,
        format!("worked example x = {worked}; max |Σw - 1| = {worst:e}"),
    )
}

fn level2_error(decoded: &[PersonPose], truth: &[PersonPose], skel: &SkeletonSpec) -> Vec<Option<f64>> {
    let mut out = Vec::new();
    for (g, m) in truth.iter().zip(match_persons(decoded, truth, skel)) {
        for j in skel.level2_ids() {
            let gk = &g.joints[j.index()];
            if !gk.visible {
                continue;
            }
            out.push(
                m.map(|m| &decoded[m].joints[j.index()])
                    .filter(|k| k.visible)
                    .map(|k| k.distance_to(gk)),
            );
        }
    }
    out
}

fn criterion_4_mrm() -> Outcome {
    let skel = default_coco_skeleton();
    let enc = EncoderConfig::default();
    let off = Decoder::new(&skel, DecoderConfig::default()).unwrap();
    let on = Decoder::new(
        &skel,
        DecoderConfig {
            mrm: true,
            ..Default::default()
        },
    )
    .unwrap();
    let params = SceneParams {
        drop_joint_prob: 0.0,
        ..round_trip_params()
    };
    let jitter = PeakJitter {
        sigma: 3.0,
        target: NoiseTarget::Level2,
        attenuate: true,
    };
    let (mut diffs, mut all_off, mut all_on) = (Vec::new(), Vec::new(), Vec::new());
    for trial in 0..1000u64 {
        let sc = scene(10_000 + trial, Some(1 + (trial % 4) as usize), &params, &skel);
        let truth = sc.poses();
        let mut stack = encode(&truth, &skel, &enc, SIZE, SIZE).unwrap().stack;
        jitter_peaks(&mut stack, &truth, &skel, &enc, &jitter, &mut SplitMix64::derive(4, trial));
        let e_off = level2_error(&off.decode(&stack).unwrap(), &truth, &skel);
        let e_on = level2_error(&on.decode(&stack).unwrap(), &truth, &skel);
        let pairs: Vec<(f64, f64)> = e_off
            .iter()
            .zip(&e_on)
            .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
            .collect();
        if pairs.is_empty() {
            continue;
        }
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        diffs.push(mean(&a) - mean(&b));
        all_off.extend(a);
        all_on.extend(b);
    }
    let lower = bootstrap_lower(&diffs, 2000, 44, 0.05);
    let (m_off, m_on) = (mean(&all_off), mean(&all_on));
    outcome(
        m_on < m_off && lower > 0.0,
        format!(
            "{} trials, {} paired joints: mean error off {m_off:.3}px, on {m_on:.3}px; \
             improvement {:.3}px, bootstrap 95% lower bound {lower:.3}px",
            diffs.len(),
            all_off.len(),
            m_off - m_on
        ),
    )
}

/// Level-2 joints decoded into the person holding the right root joints and
/// within 1 px of their true location.
fn correct_level2(decoded: &[PersonPose], truth: &[PersonPose], skel: &SkeletonSpec) -> usize {
    let roots: Vec<JointId> = skel.rjg_ids().into_iter().filter(|&j| j != skel.center_id()).collect();
    let only_roots = |p: &PersonPose| {
        let mut q = PersonPose::empty(skel);
        for &j in &roots {
            q.joints[j.index()] = p.joints[j.index()];
        }
        q
    };
    let d_roots: Vec<PersonPose> = decoded.iter().map(only_roots).collect();
    let g_roots: Vec<PersonPose> = truth.iter().map(only_roots).collect();
    let mut count = 0;
    for (g, m) in truth.iter().zip(match_persons(&d_roots, &g_roots, skel)) {
        let Some(m) = m else { continue };
        for j in skel.level2_ids() {
            let (gk, dk) = (&g.joints[j.index()], &decoded[m].joints[j.index()]);
            if gk.visible && dk.visible && gk.distance_to(dk) <= 1.0 {
                count += 1;
            }
        }
    }
    count
}

fn criterion_5_hierarchical() -> Outcome {
    let skel = default_coco_skeleton();
    let enc = EncoderConfig::default();
    let hier = Decoder::new(&skel, DecoderConfig::default()).unwrap();
    let basic = Decoder::new(
        &skel,
        DecoderConfig {
            trace_mode: TraceMode::BasicOnly,
            ..Default::default()
        },
    )
    .unwrap();
    let rho = 0.15;
    let (mut n_h, mut n_b, mut total) = (0, 0, 0);
    for i in 0..200u64 {
        let sc = scene(20_000 + i, None, &round_trip_params(), &skel);
        let truth = sc.poses();
        let mut stack = encode(&truth, &skel, &enc, SIZE, SIZE).unwrap().stack;
        perturb_displacements(
            &mut stack,
            &[DispKind::Hierarchical, DispKind::Basic],
            rho,
            &mut SplitMix64::derive(5, i),
        );
        total += truth
            .iter()
            .map(|p| skel.level2_ids().iter().filter(|j| p.joints[j.index()].visible).count())
            .sum::<usize>();
        n_h += correct_level2(&hier.decode(&stack).unwrap(), &truth, &skel);
        n_b += correct_level2(&basic.decode(&stack).unwrap(), &truth, &skel);
    }
    outcome(
        n_h >= n_b,
        format!("rho {rho}: wrists/ankles correct, hierarchical {n_h}/{total}, basic-only {n_b}/{total}"),
    )
}

fn criterion_6_metrics() -> Outcome {
    let skel = default_coco_skeleton();
    // COCO per-keypoint sigmas; the falloff constant is twice the sigma
    const SIGMAS: [f64; 17] = [
        0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072, 0.062, 0.062, 0.107, 0.107, 0.087,
        0.087, 0.089, 0.089,
    ];
    let mut rng = SplitMix64::new(6);
    let mut oks_err: f64 = 0.0;
    for _ in 0..1000 {
        let mut gt = PersonPose::empty(&skel);
        let mut pred = PersonPose::empty(&skel);
        for i in 0..17 {
            let (x, y) = (rng.random_range(0.0..256.0), rng.random_range(0.0..256.0));
            if i == 0 || rng.random_bool(0.8) {
                gt.joints[i] = Keypoint::visible(x, y);
            }
            pred.joints[i] = Keypoint::visible(x + rng.random_range(-20.0..20.0), y + rng.random_range(-20.0..20.0));
        }
        let area: f64 = rng.random_range(100.0..40_000.0);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..17 {
            if gt.joints[i].visible {
                let dx = pred.joints[i].x - gt.joints[i].x;
                let dy = pred.joints[i].y - gt.joints[i].y;
                let k = 2.0 * SIGMAS[i];
                num += (-(dx * dx + dy * dy) / (2.0 * area * k * k)).exp();
                den += 1.0;
            }
        }
        let got = oks(&pred, &gt, area.sqrt(), &skel).unwrap();
        oks_err = oks_err.max((got - num / den).abs());
    }

    // three persons, one missed: precision 1 up to recall 2/3
    let person = |x0: f64| {
        let mut p = PersonPose::empty(&skel);
        for (n, j) in skel.annotated_ids().into_iter().enumerate() {
            p.joints[j.index()] = Keypoint::visible(x0 + (n % 3) as f64 * 15.0, 20.0 + n as f64 * 10.0);
        }
        p
    };
    let gts: Vec<GtInstance> = [10.0, 80.0, 150.0].iter().map(|&x| GtInstance::new(person(x))).collect();
    let scored = |x: f64, s: f64| PersonPose {
        score: s,
        ..person(x)
    };
    let missed = EvalImage {
        image_id: 1,
        preds: vec![scored(10.0, 0.9), scored(80.0, 0.8)],
        gts: gts.clone(),
    };
    let r1 = average_precision(&[missed], &skel, &ApParams::default());
    let want1 = 67.0 / 101.0;
    // TP, FP, TP: interpolated precision 1 on 34 recall points, 2/3 on 33
    let with_fp = EvalImage {
        image_id: 1,
        preds: vec![scored(10.0, 0.9), scored(400.0, 0.8), scored(80.0, 0.7)],
        gts,
    };
    let r2 = average_precision(&[with_fp], &skel, &ApParams::default());
    let want2 = (34.0 + 33.0 * 2.0 / 3.0) / 101.0;
    let ap_ok = r1.per_threshold.iter().all(|t| (t.ap - want1).abs() < 1e-12)
        && r2.per_threshold.iter().all(|t| (t.ap - want2).abs() < 1e-12)
        && (r1.ar - 2.0 / 3.0).abs() < 1e-12;

    // PCKh: exactly alpha*l counts, the next float above does not
    let head = [0.0, 0.0, 24.0, 32.0];
    let alpha = 0.5;
    let t = pckh_threshold(head, alpha);
    let mut g = PersonPose::empty(&skel);
    for j in skel.annotated_ids() {
        g.joints[j.index()] = Keypoint::visible(0.0, 10.0 * j.0 as f64);
    }
    let shifted = |dx: f64| {
        let mut p = g.clone();
        for k in p.joints.iter_mut().filter(|k| k.visible) {
            k.x = dx;
        }
        p
    };
    let img = |dx: f64| EvalImage {
        image_id: 0,
        preds: vec![shifted(dx)],
        gts: vec![GtInstance {
            head_box: Some(head),
            ..GtInstance::new(g.clone())
        }],
    };
    let at = pckh(&[img(t)], &skel, alpha).unwrap().total;
    let above = pckh(&[img(t.next_up())], &skel, alpha).unwrap().total;

    outcome(
        oks_err <= 1e-9 && ap_ok && at == 100.0 && above == 0.0,
        format!(
            "OKS max error {oks_err:e}; AP missed-person {:.6} (want {want1:.6}), with FP {:.6} (want {want2:.6}); \
             PCKh at alpha*l {at}%, just beyond {above}%",
            r1.ap, r2.ap
        ),
    )
}

fn criterion_7_tau() -> Outcome {
    let skel = default_coco_skeleton();
    let taus = [1.0, 3.0, 5.0, 7.0];
    let params = round_trip_params();
    let jitter = PeakJitter {
        sigma: 1.5,
        target: NoiseTarget::All,
        attenuate: false,
    };
    let scenes: Vec<Vec<PersonPose>> = (0..100u64).map(|i| scene(30_000 + i, None, &params, &skel).poses()).collect();
    let mut curve = Vec::new();
    for &tau in &taus {
        let enc = EncoderConfig {
            tau,
            ..Default::default()
        };
        let dec = Decoder::new(
            &skel,
            DecoderConfig {
                match_radius: tau,
                ..Default::default()
            },
        )
        .unwrap();
        let (mut ok, mut total) = (0usize, 0usize);
        for (i, truth) in scenes.iter().enumerate() {
            let mut stack = encode(truth, &skel, &enc, SIZE, SIZE).unwrap().stack;
            let moved = jitter_peaks(&mut stack, truth, &skel, &enc, &jitter, &mut SplitMix64::derive(7, i as u64));
            let decoded = dec.decode(&stack).unwrap();
            for (g, m) in moved.iter().zip(match_persons(&decoded, &moved, &skel)) {
                for j in skel.annotated_ids() {
                    let gk = &g.joints[j.index()];
                    if !gk.visible {
                        continue;
                    }
                    total += 1;
                    if let Some(m) = m {
                        let dk = &decoded[m].joints[j.index()];
                        if dk.visible && dk.distance_to(gk) <= 1.0 {
                            ok += 1;
                        }
                    }
                }
            }
        }
        curve.push((tau, ok as f64 / total as f64));
    }
    let json = format!(
        "{{\"jitter_sigma\": {}, \"points\": [{}]}}",
        jitter.sigma,
        curve
            .iter()
            .map(|(t, r)| format!("{{\"tau\": {t}, \"success_rate\": {r:.6}}}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("tau_curve.json");
    let _ = std::fs::write(&path, &json);
    let monotone = curve.windows(2).all(|w| w[1].1 >= w[0].1);
    outcome(monotone, format!("{json} (written to {})", path.display()))
}

fn criterion_8_format() -> Outcome {
    let golden = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden.defs");
    let bytes = match std::fs::read(&golden) {
        Ok(b) => b,
        Err(e) => return outcome(false, format!("cannot read {}: {e}", golden.display())),
    };
    let stack = match defs::from_bytes(&bytes) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("golden file does not parse: {e}")),
    };
    let rewritten = defs::to_bytes(&stack);
    let fresh = defs::to_bytes(&format_fixture());
    let checksum = fnv1a(&bytes);
    let pass = checksum == GOLDEN_FNV1A && rewritten == bytes && fresh == bytes;
    outcome(
        pass,
        format!(
            "{} bytes, fnv1a {checksum:#018x} (pinned {GOLDEN_FNV1A:#018x}); re-serialized identical: {}; \
             fresh encode identical: {}",
            bytes.len(),
            rewritten == bytes,
            fresh == bytes
        ),
    )
}

const GOLDEN_FNV1A: u64 = 0xb3bc_f4b3_c6ec_2d14;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// The stack stored in the golden file.
fn format_fixture() -> de_core::FieldStack {
    let skel = default_coco_skeleton();
    let params = SceneParams {
        scale_range: (16.0, 30.0),
        min_separation: 3.0,
        drop_joint_prob: 0.0,
        ..Default::default()
    };
    let sc = de_core::scenegen::generate_scene(8, 2, 32, 32, &params, &skel).unwrap();
    encode(&sc.poses(), &skel, &EncoderConfig::default(), 32, 32).unwrap().stack
}

fn main() {
    if std::env::var_os("DE_BLESS").is_some() {
        let golden = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden.defs");
        std::fs::write(&golden, defs::to_bytes(&format_fixture())).unwrap();
        println!("wrote {}", golden.display());
    }
    let criteria: [(u8, &str, fn() -> Outcome); 8] = [
        (1, "round-trip exactness", criterion_1_round_trip),
        (2, "loss identities", criterion_2_losses),
        (3, "refinement fusion", criterion_3_fusion),
        (4, "refinement ablation direction", criterion_4_mrm),
        (5, "hierarchical vs basic tracing", criterion_5_hierarchical),
        (6, "OKS/AP/PCKh oracles", criterion_6_metrics),
        (7, "tau sensitivity", criterion_7_tau),
        (8, "format stability", criterion_8_format),
    ];
    let mut failed = 0;
    for (n, name, run) in criteria {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let tag = if result.pass { "PASS" } else { "FAIL" };
        if !result.pass {
            failed += 1;
        }
        println!(
            "{tag} [{n}] {name} ({:.1}s): {}",
            start.elapsed().as_secs_f64(),
            result.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
