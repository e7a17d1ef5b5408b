use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pseudopan::grid::Grid;
use pseudopan::io::{read_npy, read_panoptic_png, read_rgb_png, write_panoptic_png, PanopticLabel, IGNORE};
use pseudopan::pipeline::{
    inst_file, sem_file, write_probs, write_soft_masks, BundleFrame, BundleView, PredictionBundle, PARTIAL_MARKER,
    SUMMARY_FILE,
};
use pseudopan::selflabel::{
    ensemble_instances, ensemble_semantics, semantic_self_label, threshold_instances, ScoredInstances, ViewTransform,
};
use pseudopan::semantic::SoftSemantics;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pseudopan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pseudopan")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = pseudopan(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, scenario: &str, seed: u64, frames: usize) -> PathBuf {
    let manifest = ok(&[
        "synth",
        s(dir),
        "--scenario",
        scenario,
        "--seed",
        &seed.to_string(),
        "--frames",
        &frames.to_string(),
    ]);
    PathBuf::from(manifest.trim())
}

fn gt_instances(dir: &Path, stem: &str) -> usize {
    let gt = dir.join("gt");
    read_panoptic_png(gt.join(sem_file(stem)), gt.join(inst_file(stem)))
        .unwrap()
        .0
        .instance_count()
}

#[test]
fn synth_scenarios_have_expected_instances() {
    let tmp = tempfile::tempdir().unwrap();
    for (scenario, n) in [("static", 0), ("one_mover", 1), ("two_movers", 2)] {
        let dir = tmp.path().join(scenario);
        let manifest = synth(&dir, scenario, 5, 1);
        assert!(manifest.exists());
        assert_eq!(gt_instances(&dir, "frame_0000"), n, "{scenario}");
    }
}

#[test]
fn unknown_scenario_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = pseudopan(&["synth", s(tmp.path()), "--scenario", "three_movers"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn pseudo_label_writes_pairs_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(tmp.path(), "two_movers", 1, 2);
    ok(&["pseudo-label", s(&manifest), "--semantic.crf.max_side=48"]);
    let out = tmp.path().join("pseudo");
    for stem in ["frame_0000", "frame_0001"] {
        let (label, repairs) = read_panoptic_png(out.join(sem_file(stem)), out.join(inst_file(stem))).unwrap();
        assert_eq!(repairs, 0);
        assert_eq!((label.width(), label.height()), (128, 96));
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary["frames"].as_array().unwrap().len(), 2);
    assert!(summary["failed"].as_array().unwrap().is_empty());
    assert!(summary["class_ratios"].as_array().is_some());
    assert!(!out.join(PARTIAL_MARKER).exists());
}

#[test]
fn empty_manifest_fails_with_no_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(tmp.path(), "static", 0, 1);
    let mut m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    m["frames"] = serde_json::json!([]);
    std::fs::write(&manifest, m.to_string()).unwrap();
    let out = pseudopan(&["pseudo-label", s(&manifest)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no frames"));
}

#[test]
fn missing_frame_input_keeps_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(tmp.path(), "one_mover", 2, 2);
    std::fs::remove_file(tmp.path().join("inputs/frame_0001_flow_fw.npy")).unwrap();
    let out = pseudopan(&["pseudo-label", s(&manifest), "--semantic.crf.max_side=48"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("frame_0001"), "{stderr}");
    let dir = tmp.path().join("pseudo");
    assert!(dir.join(PARTIAL_MARKER).exists());
    assert!(dir.join(sem_file("frame_0000")).exists());
    assert!(!dir.join(sem_file("frame_0001")).exists());

    // a successful rerun clears the marker
    let m = tmp.path().join("inputs/frame_0000_flow_fw.npy");
    std::fs::copy(&m, tmp.path().join("inputs/frame_0001_flow_fw.npy")).unwrap();
    ok(&["pseudo-label", s(&manifest), "--semantic.crf.max_side=48"]);
    assert!(!dir.join(PARTIAL_MARKER).exists());
}

#[test]
fn bad_override_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(tmp.path(), "static", 0, 1);
    for bad in ["--fusion.psi_tss=0.1", "--fusion.psi_ts=2", "--nosuch.key=1"] {
        let out = pseudopan(&["pseudo-label", s(&manifest), bad]);
        assert_eq!(out.status.code(), Some(1), "{bad}");
    }
}

fn report(pred: &Path, gt: &Path, extra: &[&str]) -> serde_json::Value {
    let mut args = vec!["eval", s(pred), s(gt)];
    args.extend(extra);
    serde_json::from_str(&ok(&args)).unwrap()
}

#[test]
fn eval_of_ground_truth_against_itself_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "two_movers", 4, 2);
    let gt = tmp.path().join("gt");
    let r = report(&gt, &gt, &[]);
    assert_eq!(r["PQ"].as_f64(), Some(1.0));
    assert_eq!(r["mIoU"].as_f64(), Some(1.0));
    assert_eq!(r["Acc"].as_f64(), Some(1.0));
}

#[test]
fn eval_is_invariant_to_pseudo_class_ids() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "two_movers", 6, 2);
    let gt = tmp.path().join("gt");
    let pred = tmp.path().join("permuted");
    std::fs::create_dir_all(&pred).unwrap();
    let perm = [4u8, 2, 0, 3, 1];
    for stem in ["frame_0000", "frame_0001"] {
        let (label, _) = read_panoptic_png(gt.join(sem_file(stem)), gt.join(inst_file(stem))).unwrap();
        let sem = label.semantic().map(|&c| if c == IGNORE { c } else { perm[c as usize] });
        let permuted = PanopticLabel::new(sem, label.instance().clone()).unwrap();
        write_panoptic_png(&permuted, pred.join(sem_file(stem)), pred.join(inst_file(stem))).unwrap();
    }
    let split: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(gt.join("thing_stuff.json")).unwrap()).unwrap();
    let permuted: serde_json::Map<String, serde_json::Value> = split
        .into_iter()
        .map(|(c, e)| (perm[c.parse::<usize>().unwrap()].to_string(), e))
        .collect();
    std::fs::write(pred.join("thing_stuff.json"), serde_json::Value::Object(permuted).to_string()).unwrap();
    let r = report(&pred, &gt, &[]);
    assert_eq!(r["PQ"].as_f64(), Some(1.0));
    assert_eq!(r["mIoU"].as_f64(), Some(1.0));
}

#[test]
fn eval_rejects_unpaired_files() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "one_mover", 3, 2);
    let gt = tmp.path().join("gt");
    let pred = tmp.path().join("pred");
    std::fs::create_dir_all(&pred).unwrap();
    for f in [sem_file("frame_0000"), inst_file("frame_0000"), "thing_stuff.json".into()] {
        std::fs::copy(gt.join(&f), pred.join(&f)).unwrap();
    }
    let out = pseudopan(&["eval", s(&pred), s(&gt)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("frame_0001"));
}

#[test]
fn eval_writes_report_file() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "one_mover", 3, 1);
    let gt = tmp.path().join("gt");
    let path = tmp.path().join("r.json");
    ok(&["eval", s(&gt), s(&gt), "--report", s(&path)]);
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    for key in ["PQ", "SQ", "RQ", "PQ_thing", "PQ_stuff", "mIoU", "Acc", "AP", "AP50", "matching"] {
        assert!(r.get(key).is_some(), "{key}");
    }
}

fn random_probs(r: &mut ChaCha8Rng, k: usize, w: usize, h: usize) -> SoftSemantics {
    let scores = (0..k * w * h).map(|_| r.gen_range(0.0..1.0f64).powi(3)).collect();
    SoftSemantics::from_scores(k, w, h, scores).unwrap()
}

fn blob(w: usize, h: usize, cx: f64, cy: f64, rad: f64) -> Grid<f64> {
    Grid::from_fn(w, h, |x, y| {
        let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
        (1.0 - d / rad).clamp(0.0, 1.0).sqrt()
    })
}

/// Writes one frame with the given views into `dir` and returns the
/// bundle frame entry.
fn bundle_frame(
    dir: &Path,
    name: &str,
    (w, h): (usize, usize),
    views: &[(ViewTransform, SoftSemantics, Option<ScoredInstances>)],
) -> BundleFrame {
    let views = views
        .iter()
        .enumerate()
        .map(|(i, (t, p, inst))| {
            let sem = format!("{name}_v{i}_sem.npy");
            write_probs(&dir.join(&sem), p).unwrap();
            let (instances, kappa) = match inst {
                Some(s) => {
                    let path = format!("{name}_v{i}_inst.npy");
                    write_soft_masks(&dir.join(&path), &s.masks, p.width(), p.height()).unwrap();
                    (Some(PathBuf::from(path)), s.kappa.clone())
                }
                None => (None, Vec::new()),
            };
            BundleView {
                scale: t.scale,
                hflip: t.hflip,
                semantics: PathBuf::from(sem),
                instances,
                kappa,
            }
        })
        .collect();
    BundleFrame {
        name: name.into(),
        width: w,
        height: h,
        views,
    }
}

fn read_label(dir: &Path, stem: &str) -> PanopticLabel {
    let (l, repairs) = read_panoptic_png(dir.join(sem_file(stem)), dir.join(inst_file(stem))).unwrap();
    assert_eq!(repairs, 0);
    l
}

#[test]
fn single_identity_view_at_zero_thresholds_is_argmax() {
    let tmp = tempfile::tempdir().unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(21);
    let p = random_probs(&mut r, 4, 20, 14);
    let frame = bundle_frame(tmp.path(), "a", (20, 14), &[(ViewTransform::IDENTITY, p, None)]);
    PredictionBundle { frames: vec![frame] }.save(tmp.path()).unwrap();
    let out = tmp.path().join("out");
    ok(&[
        "self-label",
        s(tmp.path()),
        "--out",
        s(&out),
        "--selflabel.zeta_hat=0",
        "--selflabel.gamma=0",
    ]);
    let stored = SoftSemantics::from_tensor(&read_npy(tmp.path().join("a_v0_sem.npy")).unwrap()).unwrap();
    let label = read_label(&out, "a");
    let expected = stored.argmax().map(|&c| c as u8);
    assert_eq!(label.semantic(), &expected);
    assert_eq!(label.instance_count(), 0);
}

#[test]
fn full_threshold_is_ignore_dominant() {
    let tmp = tempfile::tempdir().unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(22);
    let p = random_probs(&mut r, 3, 24, 16);
    let frame = bundle_frame(tmp.path(), "a", (24, 16), &[(ViewTransform::IDENTITY, p, None)]);
    PredictionBundle { frames: vec![frame] }.save(tmp.path()).unwrap();
    let out = tmp.path().join("out");
    ok(&["self-label", s(tmp.path()), "--out", s(&out), "--selflabel.zeta_hat=1"]);
    let label = read_label(&out, "a");
    let ignored = label.semantic().iter().filter(|&&c| c == IGNORE).count();
    assert!(ignored * 2 > label.semantic().len(), "{ignored} ignored");
    assert!(ignored < label.semantic().len());
}

#[test]
fn six_view_bundle_matches_manual_composition() {
    let tmp = tempfile::tempdir().unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(23);
    let (w, h, k) = (32, 24, 5);
    let base = random_probs(&mut r, k, w, h);
    let masks = vec![blob(w, h, 8.0, 8.0, 6.0), blob(w, h, 22.0, 14.0, 7.0), blob(w, h, 16.0, 20.0, 3.0)];
    let kappa = [0.95, 0.8, 0.3];
    let views: Vec<_> = ViewTransform::standard_set()
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let jitter: Vec<f64> = kappa.iter().map(|k| (k - 0.02 * i as f64).max(0.0)).collect();
            let inst = ScoredInstances::new(masks.clone(), jitter).unwrap();
            (t, t.apply_semantics(&base), Some(t.apply_instances(&inst)))
        })
        .collect();
    let frame = bundle_frame(tmp.path(), "f", (w, h), &views);
    PredictionBundle { frames: vec![frame.clone()] }.save(tmp.path()).unwrap();
    let out = tmp.path().join("out");
    ok(&[
        "self-label",
        s(tmp.path()),
        "--out",
        s(&out),
        "--selflabel.gamma=0.5",
        "--selflabel.zeta_hat=0.4",
    ]);
    let label = read_label(&out, "f");

    // the same steps by hand, from the stored (f32) view files
    let mut sems = Vec::new();
    let mut insts = Vec::new();
    for v in &frame.views {
        let t = ViewTransform::new(v.scale, v.hflip).unwrap();
        let p = SoftSemantics::from_tensor(&read_npy(tmp.path().join(&v.semantics)).unwrap()).unwrap();
        sems.push(t.invert_semantics(&p, w, h));
        let (j, vh, vw, vals) = read_npy(tmp.path().join(v.instances.as_ref().unwrap()))
            .unwrap()
            .to_planes()
            .unwrap();
        let m = (0..j)
            .map(|i| Grid::from_vec(vw, vh, vals[i * vw * vh..(i + 1) * vw * vh].to_vec()).unwrap())
            .collect();
        insts.push(t.invert_instances(&ScoredInstances::new(m, v.kappa.clone()).unwrap(), w, h));
    }
    let p = ensemble_semantics(&sems).unwrap();
    let mut sem = semantic_self_label(&p, 0.4).unwrap();
    let kept = threshold_instances(&ensemble_instances(&insts, 0.5).unwrap(), 0.5);
    assert_eq!(kept.len(), 2);
    let hard = p.argmax();
    let mut ids = Grid::filled(w, h, 0u16);
    let mut order: Vec<usize> = (0..kept.len()).collect();
    order.sort_by(|&a, &b| kept.kappa[b].total_cmp(&kept.kappa[a]));
    for (n, j) in order.into_iter().enumerate() {
        let pix: Vec<(usize, usize)> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .filter(|&(x, y)| *kept.masks[j].get(x, y) >= 0.5 && *ids.get(x, y) == 0)
            .collect();
        let mut votes = vec![0; k];
        for &(x, y) in &pix {
            votes[*hard.get(x, y)] += 1;
        }
        let class = (0..k).rev().max_by_key(|&c| votes[c]).unwrap() as u8;
        for &(x, y) in &pix {
            ids.set(x, y, n as u16 + 1);
            sem.set(x, y, class);
        }
    }
    assert_eq!(label.semantic(), &sem);
    assert_eq!(label.instance(), &ids);
}

#[test]
fn bundle_view_without_metadata_aborts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(24);
    let p = random_probs(&mut r, 3, 8, 8);
    write_probs(&tmp.path().join("v.npy"), &p).unwrap();
    std::fs::write(
        tmp.path().join("bundle.json"),
        r#"{"frames": [{"name": "a", "width": 8, "height": 8, "views": [{"semantics": "v.npy"}]}]}"#,
    )
    .unwrap();
    let out = pseudopan(&["self-label", s(tmp.path()), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn visualize_is_deterministic_and_blacks_out_ignore() {
    let tmp = tempfile::tempdir().unwrap();
    let sem = Grid::from_fn(10, 6, |x, _| match x {
        0..=2 => IGNORE,
        8.. => 2,
        _ => (x % 2) as u8,
    });
    let inst = Grid::from_fn(10, 6, |x, y| u16::from(x >= 8 && y < 3));
    let label = PanopticLabel::new(sem, inst).unwrap();
    let sp = tmp.path().join(sem_file("one"));
    write_panoptic_png(&label, &sp, tmp.path().join(inst_file("one"))).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["visualize", s(&sp), "--out", s(&a), "--seed", "3"]);
    ok(&["visualize", s(&sp), "--out", s(&b), "--seed", "3"]);
    let files: Vec<_> = std::fs::read_dir(&a).unwrap().collect();
    assert_eq!(files.len(), 1);
    let va = std::fs::read(a.join("one_vis.png")).unwrap();
    assert_eq!(va, std::fs::read(b.join("one_vis.png")).unwrap());
    let rgb = read_rgb_png(a.join("one_vis.png")).unwrap();
    for y in 0..6 {
        for x in 0..3 {
            assert_eq!(*rgb.get(x, y), [0, 0, 0]);
        }
    }
    assert_ne!(*rgb.get(5, 0), [0, 0, 0]);
}
