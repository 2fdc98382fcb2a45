use clickintent_core::analyze::*;
use clickintent_core::ingest::sessionize;
use clickintent_core::simgen::{generate, SimConfig};
use clickintent_core::train::{build_dataset, train_model, Dataset, Hyperparams, TrainedModel};

fn fixture(cfg: &SimConfig, epochs: usize) -> (TrainedModel, Dataset) {
    let sim = generate(cfg).unwrap();
    let (ds, _) = build_dataset(&sessionize(sim.events), &sim.labels, &cfg.default_schema()).unwrap();
    let hp = Hyperparams { hidden_dim: 8, epochs, ..Hyperparams::default() };
    let run = train_model(&ds.items, &ds.schema, &hp, 5).unwrap();
    (run.model, ds)
}

#[test]
fn single_pass_matches_brute_force_prefixes() {
    let (model, ds) = fixture(&SimConfig::marketplace(8, 100), 2);
    for item in &ds.items {
        let series = prefix_predictions(&model, &item.sequence).unwrap();
        assert_eq!(series.len(), item.sequence.len());
        for (t, p) in series.probabilities.iter().enumerate() {
            let brute = model.predict(&item.sequence.prefix(t + 1)).unwrap();
            assert!((p - brute).abs() <= 1e-12, "{} t={t}: {p} vs {brute}", item.session_id());
            assert!(*p > 0.0 && *p < 1.0);
        }
        let full = model.predict(&item.sequence).unwrap();
        assert_eq!(series.probabilities.last().unwrap().to_bits(), full.to_bits());
    }
    let one = ds.items[0].sequence.prefix(1);
    let s = prefix_predictions(&model, &one).unwrap();
    assert_eq!(s.probabilities, vec![model.predict(&one).unwrap()]);
}

#[test]
fn exclude_final_drops_the_last_prefix() {
    let (model, ds) = fixture(&SimConfig::marketplace(8, 20), 0);
    let item = &ds.items[0];
    let full = analyze_sequence(&model, &item.sequence, &item.snapshots, &AbsoluteDifference, SeriesConvention::Full)
        .unwrap();
    let cut =
        analyze_sequence(&model, &item.sequence, &item.snapshots, &AbsoluteDifference, SeriesConvention::ExcludeFinal)
            .unwrap();
    assert_eq!(cut.predictions[..], full.predictions[..full.predictions.len() - 1]);
    assert_eq!(cut.distances.len(), cut.predictions.len() - 1);
    assert_eq!(cut.events.len(), cut.predictions.len());
}

#[test]
fn shocks_surface_as_top_impacts() {
    let cfg = SimConfig::planted_shock(3, 600);
    let truth = generate(&cfg).unwrap().truth;
    let (model, ds) = fixture(&cfg, 6);
    let analyzed = analyze_dataset(&model, &ds.items, &AbsoluteDifference, SeriesConvention::Full).unwrap();
    let (mut hits, mut shocked) = (0, 0);
    for (a, g) in analyzed.iter().zip(&truth) {
        assert_eq!(a.session_id, g.session_id);
        assert!(a.distances.iter().all(|d| *d >= 0.0));
        assert_eq!(a.distances.len(), a.predictions.len() - 1);
        if let Some(&pos) = g.shock_positions.first() {
            shocked += 1;
            let top = top_impact(a).unwrap();
            if top.event_index == pos {
                hits += 1;
                assert_eq!(top.snapshot["page_type"], "error");
                assert_eq!(top.direction, Direction::Fell);
            }
        }
    }
    assert!(shocked > 100);
    assert!(hits as f64 >= 0.9 * shocked as f64, "{hits}/{shocked}");

    let ranked = rank_impacts(&analyzed, ThresholdPolicy::default()).unwrap();
    assert!(!ranked.is_empty());
    assert!(ranked.windows(2).all(|w| w[0].distance >= w[1].distance));
}

#[test]
fn partition_and_clusters_cover_mispredictions() {
    let (model, ds) = fixture(&SimConfig::misprediction_modes(2, 300), 4);
    let part = confusion_partition(&model, &ds.items, 0.5).unwrap();
    assert_eq!(part.len(), ds.items.len());
    let mis = part.mispredicted();
    let seqs: Vec<_> = ds.items.iter().filter(|d| mis.contains(d.session_id())).map(|d| &d.sequence).collect();
    let clusters = cluster_mispredicted(&model, &seqs, 2, 1).unwrap();
    let mut members: Vec<String> = clusters.iter().flat_map(|c| c.members.clone()).collect();
    members.sort();
    assert_eq!(members, mis.into_iter().collect::<Vec<_>>());
    assert!(clusters.iter().all(|c| !c.members.is_empty() && c.centroid.len() == 8));
    assert_eq!(clusters, cluster_mispredicted(&model, &seqs, 2, 1).unwrap());
}
