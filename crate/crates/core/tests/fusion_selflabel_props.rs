use pseudopan::fusion::{assemble_panoptic, split_thing_stuff, ThingStuffSplit, ThingStuffStats};
use pseudopan::grid::{Grid, Mask};
use pseudopan::io::{PanopticLabel, IGNORE};
use pseudopan::selflabel::{
    copy_paste, drop_loss_indicator, ensemble_semantics, semantic_self_label, threshold_instances, BankEntry,
    ScoredInstances, ViewTransform,
};
use pseudopan::semantic::SoftSemantics;
use proptest::prelude::*;

const W: usize = 14;
const H: usize = 10;

fn rect(x0: usize, y0: usize, w: usize, h: usize) -> Mask {
    Grid::from_fn(W, H, |x, y| (x0..x0 + w).contains(&x) && (y0..y0 + h).contains(&y))
}

/// Disjoint masks cut from a random column partition.
fn disjoint_masks() -> impl Strategy<Value = Vec<Mask>> {
    prop::collection::vec((1usize..4, 0usize..5, 1usize..6), 0..4).prop_map(|spec| {
        let mut x = 0;
        let mut out = Vec::new();
        for (w, y0, h) in spec {
            if x + w > W {
                break;
            }
            out.push(rect(x, y0, w, h));
            x += w + 1;
        }
        out
    })
}

fn soft(k: usize, w: usize, h: usize) -> impl Strategy<Value = SoftSemantics> {
    prop::collection::vec(0.001f64..1.0, k * w * h).prop_map(move |v| SoftSemantics::from_scores(k, w, h, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn assembled_instances_are_whole_input_masks(
        sem in prop::collection::vec(0usize..5, W * H),
        masks in disjoint_masks(),
        classes in prop::collection::vec(0usize..5, 4),
        thing in prop::collection::vec(any::<bool>(), 5),
    ) {
        let semantic = Grid::from_vec(W, H, sem).unwrap();
        let classes = &classes[..masks.len()];
        let split = ThingStuffSplit { ratio: vec![0.5; 5], is_thing: thing.clone(), threshold: 0.5 };
        let label = assemble_panoptic(&semantic, &masks, classes, &split).unwrap();
        for (s, i) in label.semantic().iter().zip(label.instance().iter()) {
            prop_assert!(*i == 0 || *s != IGNORE);
        }
        let kept: Vec<&Mask> = masks.iter().zip(classes).filter(|(_, c)| thing[**c]).map(|(m, _)| m).collect();
        let out = label.instance_masks();
        prop_assert_eq!(out.len(), kept.iter().filter(|m| m.count() > 0).count());
        for m in &out {
            prop_assert!(kept.contains(&m), "instance is not one of the input masks");
        }
    }

    #[test]
    fn raising_psi_never_adds_things(
        stats in prop::collection::vec((0u64..1000, 0u64..1000), 1..30),
        a in 0.01f64..0.99, b in 0.01f64..0.99,
    ) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let stats = ThingStuffStats {
            inside: stats.iter().map(|(i, t)| (*i).min(*t)).collect(),
            total: stats.iter().map(|(_, t)| *t).collect(),
        };
        let l = split_thing_stuff(&stats, lo).unwrap();
        let h = split_thing_stuff(&stats, hi).unwrap();
        prop_assert!(h.is_thing.iter().zip(&l.is_thing).all(|(h, l)| !*h || *l));
    }

    #[test]
    fn view_ensemble_ignores_view_order(views in prop::collection::vec(soft(3, 6, 5), 1..5), rot in 0usize..5) {
        let mut shuffled = views.clone();
        shuffled.rotate_left(rot % views.len());
        let a = ensemble_semantics(&views).unwrap();
        let b = ensemble_semantics(&shuffled).unwrap();
        prop_assert!(a.max_norm_error() <= 1e-9);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn thresholds_are_monotone(
        p in soft(4, 7, 6), z1 in 0.0f64..1.0, z2 in 0.0f64..1.0,
        kappa in prop::collection::vec(0.0f64..1.0, 0..6), g1 in 0.0f64..1.0, g2 in 0.0f64..1.0,
    ) {
        let (zl, zh) = if z1 < z2 { (z1, z2) } else { (z2, z1) };
        let a = semantic_self_label(&p, zl).unwrap();
        let b = semantic_self_label(&p, zh).unwrap();
        prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| *y == IGNORE || x == y));

        let (gl, gh) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
        let masks = kappa.iter().map(|k| Grid::filled(3, 3, *k)).collect();
        let s = ScoredInstances::new(masks, kappa.clone()).unwrap();
        let lo = threshold_instances(&s, gl);
        let hi = threshold_instances(&s, gh);
        prop_assert!(hi.len() <= lo.len());
        prop_assert!(hi.kappa.iter().all(|k| lo.kappa.contains(k)));
    }

    #[test]
    fn drop_loss_is_monotone_in_tau(
        preds in prop::collection::vec(prop::collection::vec(any::<bool>(), 36), 1..4),
        pseudo in prop::collection::vec(prop::collection::vec(any::<bool>(), 36), 0..4),
        t1 in 0.0f64..1.0, t2 in 0.0f64..1.0,
    ) {
        let g = |v: &Vec<bool>| Grid::from_vec(6, 6, v.clone()).unwrap();
        let preds: Vec<Mask> = preds.iter().map(g).collect();
        let pseudo: Vec<Mask> = pseudo.iter().map(g).collect();
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let a = drop_loss_indicator(&preds, &pseudo, lo);
        let b = drop_loss_indicator(&preds, &pseudo, hi);
        prop_assert!(a.iter().zip(&b).all(|(x, y)| *x || !*y));
    }

    #[test]
    fn double_flip_is_identity(p in soft(3, 9, 4)) {
        let t = ViewTransform::new(1.0, true).unwrap();
        let back = t.invert_semantics(&t.apply_semantics(&p), 9, 4);
        prop_assert_eq!(back, p);
    }

    #[test]
    fn copy_paste_touches_only_pasted_pixels(seed in any::<u64>(), n in 1usize..4) {
        let image = Grid::from_fn(20, 16, |x, y| [x as u8, y as u8, 7]);
        let sem = Grid::from_fn(20, 16, |x, _| if x < 10 { 0u8 } else { 1 });
        let inst = Grid::from_fn(20, 16, |x, y| u16::from(x < 4 && y < 4) + 2 * u16::from(x >= 16 && y >= 12));
        let sem = Grid::from_fn(20, 16, |x, y| if *inst.get(x, y) > 0 { 2 } else { *sem.get(x, y) });
        let label = PanopticLabel::new(sem, inst).unwrap();
        let bank = vec![BankEntry {
            patch: Grid::filled(5, 4, [250, 10, 10]),
            mask: Grid::from_fn(5, 4, |x, _| if x < 3 { 1.0 } else { 0.2 }),
            class: 3,
        }];
        let (img, out, pastes) = copy_paste(&image, &label, &bank, seed, (n, n)).unwrap();
        prop_assert_eq!(pastes.len(), n);
        let mut pasted = Grid::filled(20, 16, false);
        for p in &pastes {
            for y in 0..4 {
                for x in 0..3 {
                    pasted.set(p.col + x, p.row + y, true);
                }
            }
        }
        for y in 0..16 {
            for x in 0..20 {
                if *pasted.get(x, y) {
                    prop_assert_eq!(*img.get(x, y), [250, 10, 10]);
                    prop_assert_eq!(*out.semantic().get(x, y), 3);
                    prop_assert!(*out.instance().get(x, y) > 0);
                } else {
                    prop_assert_eq!(img.get(x, y), image.get(x, y));
                    prop_assert_eq!(out.semantic().get(x, y), label.semantic().get(x, y));
                }
            }
        }
        // surviving original instances keep their pixels together
        for orig in label.instance_masks() {
            let left: Vec<u16> = orig
                .iter()
                .zip(pasted.iter())
                .zip(out.instance().iter())
                .filter(|((o, p), _)| **o && !**p)
                .map(|(_, i)| *i)
                .collect();
            if let Some(first) = left.first() {
                prop_assert!(left.iter().all(|i| i == first) && *first > 0);
            }
        }
    }
}

#[test]
fn ensemble_then_threshold_drops_low_confidence_instances() {
    let m = |x0| Grid::from_fn(8, 8, |x, _| if (x0..x0 + 3).contains(&x) { 0.9 } else { 0.0 });
    let s = ScoredInstances::new(vec![m(0), m(4)], vec![0.9, 0.4]).unwrap();
    let kept = threshold_instances(&s, 0.5);
    assert_eq!(kept.kappa, vec![0.9]);
}
