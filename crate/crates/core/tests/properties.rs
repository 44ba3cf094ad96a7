use std::sync::Arc;

use proptest::prelude::*;

use xma_core::evaluate::{
    compute_metrics, diff_predictions, fmt2, select_optimal_shots, ConfusionMatrix, MetricSet, SweepReport, SweepRow,
};
use xma_core::export::{estimate_annotation_hours, CostParams};
use xma_core::inference::Prediction;
use xma_core::item::MediaKind;
use xma_core::labels::BinaryLabel;
use xma_core::reannotate::{
    resolve_vote, AnnotationEvent, ManualClock, ReannotateError, Store, StoreOptions, VoteState,
};
use xma_core::visionprep::uniform_index;

fn label() -> impl Strategy<Value = BinaryLabel> {
    prop_oneof![Just(BinaryLabel::Positive), Just(BinaryLabel::Negative)]
}

fn prediction() -> impl Strategy<Value = Prediction> {
    prop_oneof![
        4 => label().prop_map(Prediction::Label),
        1 => Just(Prediction::PredictionFailed),
        1 => Just(Prediction::Unparseable),
    ]
}

fn scored_pair(max: usize) -> impl Strategy<Value = (Vec<BinaryLabel>, Vec<Prediction>)> {
    (1..=max).prop_flat_map(|n| (prop::collection::vec(label(), n), prop::collection::vec(prediction(), n)))
}

fn flip_pred(p: Prediction) -> Prediction {
    match p {
        Prediction::Label(l) => Prediction::Label(l.flip()),
        other => other,
    }
}

proptest! {
    #[test]
    fn macro_f1_ignores_which_class_is_positive((gt, pred) in scored_pair(40)) {
        let m = compute_metrics(&gt, &pred).unwrap();
        let gt2: Vec<_> = gt.iter().map(|l| l.flip()).collect();
        let pred2: Vec<_> = pred.iter().copied().map(flip_pred).collect();
        let s = compute_metrics(&gt2, &pred2).unwrap();
        prop_assert!((m.macro_f1 - s.macro_f1).abs() < 1e-12);
        prop_assert!((m.acc - s.acc).abs() < 1e-12);
        prop_assert!((m.f1_pos - s.f1_neg).abs() < 1e-12);
        prop_assert!((m.recall_pos - s.recall_neg).abs() < 1e-12);
        prop_assert!((m.precision_pos - s.precision_neg).abs() < 1e-12);
    }

    #[test]
    fn metrics_are_bounded_and_consistent((gt, pred) in scored_pair(40)) {
        let cm = ConfusionMatrix::tally(&gt, &pred).unwrap();
        prop_assert_eq!(cm.total(), gt.len());
        let m = cm.metrics();
        for v in m.values() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!((m.acc - (cm.tp + cm.tn) as f64 / gt.len() as f64).abs() < 1e-12);
        prop_assert!((m.macro_f1 - (m.f1_pos + m.f1_neg) / 2.0).abs() < 1e-12);
        let failures = pred.iter().filter(|p| p.label().is_none()).count();
        let right = gt.iter().zip(&pred).filter(|(g, p)| p.label() == Some(**g)).count();
        prop_assert_eq!(cm.tp + cm.tn, right);
        prop_assert!(cm.fp + cm.fn_ >= failures);
    }

    #[test]
    fn perfect_predictions_score_one(gt in prop::collection::vec(label(), 2..30)) {
        prop_assume!(gt.contains(&BinaryLabel::Positive) && gt.contains(&BinaryLabel::Negative));
        let pred: Vec<_> = gt.iter().map(|&l| Prediction::Label(l)).collect();
        let m = compute_metrics(&gt, &pred).unwrap();
        prop_assert!(m.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn diff_counts_explain_the_accuracy_change(
        (gt, a, b) in (1usize..40).prop_flat_map(|n| (
            prop::collection::vec(label(), n),
            prop::collection::vec(prediction(), n),
            prop::collection::vec(prediction(), n),
        ))
    ) {
        let ids: Vec<String> = (0..gt.len()).map(|i| format!("i{i}")).collect();
        let d = diff_predictions(&ids, &gt, &a, &b).unwrap();
        let acc_a = compute_metrics(&gt, &a).unwrap().acc;
        let acc_b = compute_metrics(&gt, &b).unwrap().acc;
        let n = gt.len() as f64;
        prop_assert!(((acc_b - acc_a) - (d.corrected as f64 - d.introduced as f64) / n).abs() < 1e-9);
        prop_assert_eq!(d.corrected, d.corrected_ids.len());
        let back = diff_predictions(&ids, &gt, &b, &a).unwrap();
        prop_assert_eq!(back.corrected_ids, d.introduced_ids);
        prop_assert_eq!(back.introduced_ids, d.corrected_ids);
    }

    #[test]
    fn resolver_invariants(original in label(), model in prediction(), human in proptest::option::of(label())) {
        let out = resolve_vote(original, model, human);
        match out.state {
            VoteState::Agreed => {
                prop_assert_eq!(model.label(), Some(original));
                prop_assert_eq!(out.final_label, Some(original));
            }
            VoteState::Queued | VoteState::Failed | VoteState::Leased => prop_assert!(out.final_label.is_none()),
            VoteState::Resolved => prop_assert!(human.is_some()),
        }
        if let Some(h) = human {
            prop_assert_eq!(out.state, VoteState::Resolved);
            let fin = out.final_label.unwrap();
            let votes = [Some(original), model.label(), Some(h)];
            prop_assert!(votes.contains(&Some(fin)));
            if model.label().is_some_and(|m| m != original) || model.label().is_none() {
                prop_assert_eq!(fin, h);
            }
        } else {
            prop_assert_ne!(out.state, VoteState::Resolved);
        }
    }

    #[test]
    fn selected_n_has_the_best_macro_f1(scores in prop::collection::vec((0u32..=100, 0u32..=100), 1..8)) {
        let rows: Vec<SweepRow> = scores
            .iter()
            .enumerate()
            .map(|(i, &(acc, f1))| SweepRow {
                n_shots: 2 * i,
                metrics: MetricSet { acc: acc as f64 / 100.0, macro_f1: f1 as f64 / 100.0, ..MetricSet::default() },
                scored: 1,
                failed: 0,
                demo_ids: vec![],
            })
            .collect();
        let best = rows.iter().map(|r| r.metrics.macro_f1).fold(f64::MIN, f64::max);
        let report = SweepReport::new("m", "d", rows.clone()).unwrap();
        let n = select_optimal_shots(&report).unwrap();
        let row = report.row(n).unwrap();
        prop_assert!((row.metrics.macro_f1 - best).abs() < 1e-9);
        for r in &rows {
            if r.n_shots < n {
                let tie = (r.metrics.macro_f1 - best).abs() < 1e-9;
                prop_assert!(!tie || r.metrics.acc < row.metrics.acc);
            }
        }
    }

    #[test]
    fn uniform_indices_cover_the_clip(k in 1u32..40, frames in 1u32..500) {
        let idx: Vec<u32> = (0..k).map(|i| uniform_index(i, k, frames)).collect();
        prop_assert!(idx.iter().all(|&i| i < frames));
        prop_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(idx[0], 0);
        if k > 1 {
            prop_assert_eq!(*idx.last().unwrap(), frames - 1);
        }
        if k == frames {
            prop_assert_eq!(idx, (0..k).collect::<Vec<_>>());
        }
    }

    #[test]
    fn two_decimal_rounding_is_close(x in 0.0f64..1.0) {
        let shown: f64 = fmt2(x).parse().unwrap();
        prop_assert!((shown - x).abs() <= 0.005 + 1e-9);
        prop_assert_eq!(fmt2(x).len(), 4);
    }

    #[test]
    fn cost_is_linear_in_n(n in 0usize..100_000, rate in 0.0f64..=1.0) {
        let p = CostParams { disagreement_rate: rate, ..CostParams::default() };
        for kind in [MediaKind::Meme, MediaKind::Video] {
            let one = estimate_annotation_hours(kind, 1, &p);
            prop_assert!((estimate_annotation_hours(kind, n, &p) - one * n as f64).abs() < 1e-6);
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Lease(u8),
    Submit { slot: usize, label: BinaryLabel },
    Stale(usize),
    Advance(u8),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0u8..4).prop_map(Op::Lease),
        3 => (0usize..16, label()).prop_map(|(slot, label)| Op::Submit { slot, label }),
        1 => (0usize..16).prop_map(Op::Stale),
        1 => (1u8..30).prop_map(Op::Advance),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn store_replay_matches_live_state(
        votes in prop::collection::vec((label(), prediction()), 1..12),
        ops in prop::collection::vec(op(), 0..60),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::new(5_000));
        let opts = StoreOptions { fsync: false, snapshot_every: None };
        let store = Store::open(dir.path(), clock.clone(), opts.clone()).unwrap();
        let inputs: Vec<_> = votes.iter().enumerate().map(|(i, &(o, m))| (format!("x{i:02}"), o, m)).collect();
        store.enqueue(&inputs).unwrap();
        let mut leases = Vec::new();
        for op in ops {
            match op {
                Op::Lease(who) => {
                    if let Some(l) = store.lease_next(&format!("a{who}"), 10.0).unwrap() {
                        leases.push(l);
                    }
                }
                Op::Submit { .. } | Op::Stale(_) if leases.is_empty() => {}
                Op::Submit { slot, label } => {
                    let l = &leases[slot % leases.len()];
                    let r = store.submit(&AnnotationEvent {
                        item_id: l.item_id.clone(),
                        annotator_id: l.annotator_id.clone(),
                        label,
                        elapsed_s: 3.0,
                        lease_token: l.lease_token.clone(),
                    });
                    match r {
                        Ok(out) => prop_assert_eq!(out.state, VoteState::Resolved),
                        Err(ReannotateError::Duplicate { .. } | ReannotateError::LeaseExpired { .. }) => {}
                        Err(e) => prop_assert!(false, "unexpected {e}"),
                    }
                }
                Op::Stale(slot) => {
                    let l = &leases[slot % leases.len()];
                    let r = store.submit(&AnnotationEvent {
                        item_id: "nope".into(),
                        annotator_id: String::new(),
                        label: BinaryLabel::Positive,
                        elapsed_s: 1.0,
                        lease_token: l.lease_token.clone(),
                    });
                    prop_assert!(r.is_err());
                }
                Op::Advance(s) => clock.advance_s(s as f64),
            }
            let c = store.counts();
            prop_assert_eq!(c.total, c.agreed + c.queued + c.leased + c.resolved + c.failed);
            prop_assert_eq!(c.total, votes.len());
        }
        let live = (store.seq(), store.counts(), store.records());
        drop(store);
        let again = Store::open(dir.path(), clock, opts).unwrap();
        prop_assert_eq!(live, (again.seq(), again.counts(), again.records()));
    }
}
