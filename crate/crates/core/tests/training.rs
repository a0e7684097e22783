use chrono::NaiveDate;
use stlf_core::cli_io::synth::{generate, SynthConfig};
use stlf_core::loss::LossConfig;
use stlf_core::network::{CellVariant, ModelConfig};
use stlf_core::preprocess::{build_training_set, DateRange, HourlySeries};
use stlf_core::training::{forecast_range, train, train_ensemble, EnsembleMember, EnsembleModel, TrainRecipe};

fn tiny(cell: CellVariant) -> ModelConfig {
    ModelConfig { cell, s_c: 8, s_h: 4, s_y: 4, s_q: 4, d_emb: 3 }
}

fn corpus(days: usize, noise: f64) -> Vec<HourlySeries> {
    generate(&SynthConfig { series: 2, days, noise, seed: 11, ..SynthConfig::default() }).unwrap()
}

fn quick_recipe(epochs: usize, seeds: Vec<u64>) -> TrainRecipe {
    TrainRecipe { epochs, lr_schedule: vec![(1, 1e-2)], batch_schedule: vec![(1, 2)], window: 28, seeds, ..TrainRecipe::default() }
}

#[test]
fn member_order_does_not_matter() {
    let data = build_training_set(&corpus(60, 0.02), None).unwrap();
    let cfg = tiny(CellVariant::Gru1);
    let a = train_ensemble(&data, cfg, &LossConfig::default(), &quick_recipe(2, vec![1, 2])).unwrap();
    let b = train_ensemble(&data, cfg, &LossConfig::default(), &quick_recipe(2, vec![2, 1])).unwrap();
    assert_eq!(a.members[0], b.members[1]);
    assert_eq!(a.members[1], b.members[0]);
}

#[test]
fn identical_seeds_forecast_like_one_member() {
    let series = corpus(60, 0.02);
    let data = build_training_set(&series, None).unwrap();
    let cfg = tiny(CellVariant::DLstm);
    let five = train_ensemble(&data, cfg, &LossConfig::default(), &quick_recipe(1, vec![4; 5])).unwrap();
    let one = EnsembleModel::new(vec![five.members[0].clone()]).unwrap();
    let range = DateRange::new(NaiveDate::from_ymd_opt(2016, 2, 10).unwrap(), NaiveDate::from_ymd_opt(2016, 2, 20).unwrap());
    let f5 = forecast_range(&five, &series[0], range, 56, "x").unwrap();
    let f1 = forecast_range(&one, &series[0], range, 56, "x").unwrap();
    assert_eq!(f5.len(), 11);
    for (a, b) in f5.iter().zip(&f1) {
        for (x, y) in a.point.iter().chain(&a.lower).chain(&a.upper).zip(b.point.iter().chain(&b.lower).chain(&b.upper)) {
            assert!((x - y).abs() <= 1e-9 * y.abs());
        }
    }
}

#[test]
fn lower_point_quantile_shifts_forecasts_down() {
    // Symmetric noise: the conditional median sits above the 0.3 quantile.
    let series = corpus(120, 0.05);
    let data = build_training_set(&series, None).unwrap();
    let cfg = tiny(CellVariant::DRnn);
    let recipe = quick_recipe(8, vec![3]);
    let mean_point = |q_star: f64| {
        let loss = LossConfig { q_star, ..LossConfig::default() };
        let (model, _) = train(&data, cfg, &loss, &recipe, 3).unwrap();
        let ens = EnsembleModel::new(vec![EnsembleMember { seed: 3, model, log: vec![] }]).unwrap();
        let range = DateRange::new(NaiveDate::from_ymd_opt(2016, 3, 1).unwrap(), NaiveDate::from_ymd_opt(2016, 4, 29).unwrap());
        let recs: Vec<_> = series.iter().flat_map(|s| forecast_range(&ens, s, range, 56, "q").unwrap()).collect();
        let n = recs.len() as f64 * 24.0;
        recs.iter().flat_map(|r| r.point.iter()).sum::<f64>() / n
    };
    let median = mean_point(0.5);
    let low = mean_point(0.3);
    assert!(low < median, "q*=0.3 mean {low} vs q*=0.5 mean {median}");
}

#[test]
fn clipping_can_be_disabled() {
    let data = build_training_set(&corpus(30, 0.02), None).unwrap();
    let cfg = tiny(CellVariant::Lstm2);
    let on = TrainRecipe { clip_norm: Some(1e-9), ..quick_recipe(1, vec![1]) };
    let zero = TrainRecipe { clip_norm: Some(0.0), ..quick_recipe(1, vec![1]) };
    let none = TrainRecipe { clip_norm: None, ..quick_recipe(1, vec![1]) };
    let (a, _) = train(&data, cfg, &LossConfig::default(), &zero, 1).unwrap();
    let (b, _) = train(&data, cfg, &LossConfig::default(), &none, 1).unwrap();
    let (c, _) = train(&data, cfg, &LossConfig::default(), &on, 1).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn gaps_restart_runs_and_training_stays_finite() {
    let mut series = corpus(70, 0.02);
    for m in &mut series[0].missing[24 * 30..24 * 30 + 5] {
        *m = true;
    }
    let data = build_training_set(&series, None).unwrap();
    let (_, log) = train(&data, tiny(CellVariant::AdRnn), &LossConfig::default(), &quick_recipe(2, vec![1]), 1).unwrap();
    assert!(log.iter().all(|l| l.mean_loss.is_finite() && l.updates > 0));
}
