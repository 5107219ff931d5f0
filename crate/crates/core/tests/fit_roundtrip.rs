use geoshape::formats::MeasuredRow;
use geoshape::link::NliCoefficients;
use geoshape::sweep::default_power_grid_dbm;
use geoshape::units::{db_to_linear, dbm_to_watts};
use geoshape::{fit_link_params, LinkParams, MeasuredSweep};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn link(p_ase_dbm: f64, eta_db: f64, btb_db: f64) -> LinkParams {
    LinkParams::new(
        dbm_to_watts(p_ase_dbm),
        NliCoefficients::fixed(db_to_linear(eta_db)).unwrap(),
        db_to_linear(btb_db),
    )
    .unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

#[test]
fn noiseless_recovery_over_random_links() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let truth = link(
            rng.random_range(-22.0..-15.0),
            rng.random_range(26.0..30.0),
            rng.random_range(18.0..26.0),
        );
        let m = MeasuredSweep::synthetic(&truth, 0.0, &default_power_grid_dbm()).unwrap();
        let r = fit_link_params(&m, None).unwrap();
        assert!(rel(r.link.p_ase, truth.p_ase) <= 1e-9);
        assert!(rel(r.link.nli.eta1(), truth.nli.eta1()) <= 1e-9);
        assert!(rel(r.link.snr_btb, truth.snr_btb) <= 1e-9);
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn perturbed_recovery_median_within_ten_percent() {
    let truth = link(-18.46, 27.61, 22.78);
    let clean = MeasuredSweep::synthetic(&truth, 0.0, &default_power_grid_dbm()).unwrap();
    let noise = Normal::new(0.0, 0.1).unwrap();
    let (mut ep, mut ee, mut eb) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<MeasuredRow> = clean
            .rows()
            .iter()
            .map(|r| MeasuredRow {
                power_dbm: r.power_dbm,
                snr_db: r.snr_db + noise.sample(&mut rng),
            })
            .collect();
        let r = fit_link_params(&MeasuredSweep::new(rows, "perturbed").unwrap(), None).unwrap();
        ep.push(rel(r.link.p_ase, truth.p_ase));
        ee.push(rel(r.link.nli.eta1(), truth.nli.eta1()));
        eb.push(rel(r.link.snr_btb, truth.snr_btb));
    }
    let (mp, me, mb) = (median(ep), median(ee), median(eb));
    assert!(mp <= 0.1 && me <= 0.1 && mb <= 0.1, "medians {mp} {me} {mb}");
}

#[test]
fn fixed_btb_fit_recovers_remaining_terms() {
    let truth = link(-19.0, 28.2, 21.6);
    let m = MeasuredSweep::synthetic(&truth, 0.0, &default_power_grid_dbm()).unwrap();
    let r = fit_link_params(&m, Some(21.6)).unwrap();
    assert!(r.snr_btb_fixed);
    assert!(rel(r.link.p_ase, truth.p_ase) <= 1e-9);
    assert!(rel(r.link.nli.eta1(), truth.nli.eta1()) <= 1e-9);
}
