use lcurve::covariate::{fit_covariate_model, ModelKind};
use lcurve::harness::{dataset_study, true_curve_oracle, DatasetStudyConfig, GenerativeModel};
use lcurve::impint::brie_curve;
use lcurve::logistic::{Dataset, FitOptions};
use lcurve::subex::{default_schedule, fit_power_law, subex_curve, PowerLawPoint};
use lcurve::{delta_estimate, Provenance, RngStream};
use nalgebra::DVector;

fn null_data(n: usize, p: usize, seed: u64) -> Dataset {
    GenerativeModel::with_beta(0.0, DVector::zeros(p), 0.0).unwrap().draw(n, RngStream::new(seed, 0))
}

#[test]
fn subex_null_model_near_half() {
    let d = null_data(200, 3, 1);
    let sched = default_schedule(200);
    let res = subex_curve(&d, &[sched[0]], &sched, 100, &FitOptions::default(), RngStream::new(2, 0)).unwrap();
    let v = res.curve.values()[0];
    assert!((v - 0.5).abs() < 0.08, "{v}");
}

#[test]
fn subex_reports_the_fitted_curve() {
    let d = GenerativeModel::new(3, 0.2).unwrap().draw(60, RngStream::new(3, 0));
    let sched = default_schedule(60);
    let res = subex_curve(&d, &[36, 60], &sched, 30, &FitOptions::no_intercept(), RngStream::new(4, 0)).unwrap();
    assert_eq!(res.curve.provenance(), Provenance::Subex);
    let pts: Vec<PowerLawPoint> = res.direct.iter().map(|&(m, t)| PowerLawPoint::new(m, t)).collect();
    let refit = fit_power_law(&pts).unwrap();
    for (m, v) in res.curve.sizes().into_iter().zip(res.curve.values()) {
        assert_eq!(v, refit.eval(m as f64).clamp(0.0, 1.0));
    }
    let v = res.curve.values();
    assert!(v[1] <= v[0]);
}

#[test]
fn oracle_is_non_increasing_within_noise() {
    let gm = GenerativeModel::new(5, 0.3).unwrap();
    let c = true_curve_oracle(&gm, &[10, 20, 40, 80], 500, 1000, RngStream::new(5, 0)).unwrap();
    for w in c.points().windows(2) {
        let se = (w[0].std_error.unwrap().powi(2) + w[1].std_error.unwrap().powi(2)).sqrt();
        assert!(w[1].value - w[0].value < 2.0 * se, "{:?}", c.points());
    }
}

#[test]
fn brie_on_generated_data() {
    let gm = GenerativeModel::new(5, 0.1).unwrap();
    let d = gm.draw(50, RngStream::new(6, 0));
    let model = fit_covariate_model(ModelKind::MvnAr1, d.features(), None).unwrap();
    let res = brie_curve(&d, &model, &[50, 100, 150], 100, 1000, &gm.fit_options(), RngStream::new(7, 0)).unwrap();
    assert_eq!(res.curve.provenance(), Provenance::Brie);
    assert_eq!(res.curve.sizes(), vec![49, 50, 100, 150]);
    assert_eq!(res.curve.value_at(49).unwrap().0, res.cv_error);
    let db = delta_estimate(&res.curve, 50, 150).unwrap().value;
    let ds = delta_estimate(&res.smoothed, 50, 150).unwrap().value;
    assert_eq!(db.to_bits(), ds.to_bits());
    assert!(db >= 0.0);
}

#[test]
fn dataset_study_table_shape() {
    let gm = GenerativeModel::new(3, 0.2).unwrap();
    let base = gm.draw(120, RngStream::new(8, 0));
    // replace the first column by a 0/1 indicator
    let mut x = base.features().clone();
    for i in 0..x.nrows() {
        x[(i, 0)] = f64::from(u8::from(x[(i, 0)] > 0.0));
    }
    let d = Dataset::new(x, base.labels().to_vec()).unwrap();
    let mut cfg = DatasetStudyConfig::new(
        vec![ModelKind::GaussianMixture, ModelKind::GaussianCopula],
        vec![30, 45, 60, 90],
        3,
    );
    cfg.n_test = 300;
    cfg.binary_columns = Some(vec![0]);
    let rows = dataset_study(&d, &cfg, RngStream::new(9, 0)).unwrap();
    assert_eq!(rows.len(), 8);
    assert_eq!(rows[0].kind, ModelKind::GaussianMixture);
    assert_eq!(rows[7].kind, ModelKind::GaussianCopula);
    assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![30, 45, 60, 90, 30, 45, 60, 90]);
    assert!(rows.iter().all(|r| r.gain[0] == 0.0 && r.tau.len() == 3));
}
