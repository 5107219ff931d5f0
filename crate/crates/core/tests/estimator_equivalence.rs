use geoshape::{gmi_2d, gmi_monte_carlo, product_constellation, ChannelSnr, PamLevels};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn quadrature_within_three_standard_errors_of_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for k in 0..6 {
        let mut acc = 0.0;
        let half: Vec<f64> = (0..8)
            .map(|_| {
                acc += rng.random_range(0.5..1.5);
                acc
            })
            .collect();
        let levels = PamLevels::from_positive_half(&half).unwrap();
        let snr = ChannelSnr::from_db(rng.random_range(5.0..25.0)).unwrap();
        let quad = gmi_2d(&levels, snr, 64).unwrap().value;
        let c = product_constellation(&levels, &levels).unwrap();
        let mc = gmi_monte_carlo(&c, snr, 200_000, k as u64).unwrap();
        assert!(
            (quad - mc.value).abs() <= 3.0 * mc.std_error,
            "{:?} at {} dB: quadrature {quad}, MC {} ± {}",
            half,
            snr.db(),
            mc.value,
            mc.std_error
        );
    }
}

#[test]
fn monte_carlo_is_reproducible_and_seed_dependent() {
    let levels = PamLevels::from_positive_half(&[1.0, 3.0]).unwrap();
    let c = product_constellation(&levels, &levels).unwrap();
    let snr = ChannelSnr::from_db(10.0).unwrap();
    let a = gmi_monte_carlo(&c, snr, 50_000, 3).unwrap();
    let b = gmi_monte_carlo(&c, snr, 50_000, 3).unwrap();
    let other = gmi_monte_carlo(&c, snr, 50_000, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.value, other.value);
}
