use geoshape::formats::{
    read_constellation, read_levels, read_measured_rows, read_sweep_rows, write_constellation, write_levels,
    write_measured_rows, write_sweep_rows, MeasuredRow, SweepRow,
};
use geoshape::shaping::DesignPoint;
use geoshape::{product_constellation, LinkParams, NliCoefficients, PamLevels};
use proptest::prelude::*;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn levels_strategy() -> impl Strategy<Value = PamLevels> {
    (1u32..=5).prop_flat_map(|bits| {
        prop::collection::vec(0.01f64..2.0, 1usize << (bits - 1)).prop_map(|inc| {
            let mut acc = 0.0;
            let half: Vec<f64> = inc
                .iter()
                .map(|d| {
                    acc += d;
                    acc
                })
                .collect();
            PamLevels::from_positive_half(&half).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn levels_csv(levels in levels_strategy()) {
        let mut buf = Vec::new();
        write_levels(&mut buf, &levels).unwrap();
        let back = read_levels(buf.as_slice()).unwrap();
        prop_assert_eq!(back, levels);
    }

    #[test]
    fn constellation_csv(levels in levels_strategy()) {
        let c = product_constellation(&levels, &levels).unwrap();
        let mut buf = Vec::new();
        write_constellation(&mut buf, &c).unwrap();
        let back = read_constellation(buf.as_slice()).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn sweep_and_measured_csv(rows in prop::collection::vec((-10.0f64..10.0, 0.0f64..30.0, 0.0f64..8.0), 1..40)) {
        let sweep: Vec<SweepRow> = rows
            .iter()
            .map(|&(power_dbm, snr_db, g)| SweepRow { power_dbm, snr_db, gmi_2d: g, gmi_4d: 2.0 * g })
            .collect();
        let mut buf = Vec::new();
        write_sweep_rows(&mut buf, &sweep).unwrap();
        prop_assert_eq!(read_sweep_rows(buf.as_slice()).unwrap(), sweep);

        let measured: Vec<MeasuredRow> = rows.iter().map(|&(power_dbm, snr_db, _)| MeasuredRow { power_dbm, snr_db }).collect();
        let mut buf = Vec::new();
        write_measured_rows(&mut buf, &measured).unwrap();
        prop_assert_eq!(read_measured_rows(buf.as_slice()).unwrap(), measured);
    }

    #[test]
    fn link_json(p_ase in 1e-6f64..1e-1, eta1 in 1.0f64..1e4, c in prop::option::of(0.0f64..1.5), btb in prop::option::of(10.0f64..1e3)) {
        let nli = match c {
            Some(c) => NliCoefficients::from_eta1_and_c(eta1, c).unwrap(),
            None => NliCoefficients::fixed(eta1).unwrap(),
        };
        let link = LinkParams::new(p_ase, nli, btb.unwrap_or(f64::INFINITY)).unwrap();
        let back = LinkParams::from_json(&link.to_json().unwrap()).unwrap();
        prop_assert!(close(back.p_ase, link.p_ase));
        prop_assert!(close(back.nli.eta1(), link.nli.eta1()));
        prop_assert!(close(back.nli.eta2(), link.nli.eta2()));
        prop_assert!(back.snr_btb == link.snr_btb || close(back.snr_btb, link.snr_btb));
    }
}

#[test]
fn design_point_json() {
    let p = DesignPoint {
        snr_db: 18.0,
        uniform_gmi_4d: 11.562663,
        awgn_gmi_4d: 0.1 + 0.2,
        nonlinear_gmi_4d: 1.0 / 3.0,
        uniform_flat_gmi_4d: 11.171193,
        awgn_flat_gmi_4d: std::f64::consts::PI,
        awgn_kurtosis: -0.365148,
        nonlinear_kurtosis: -0.443651,
        awgn_levels: vec![-1.0 / 7.0, 1.0 / 7.0],
        nonlinear_levels: vec![-0.7, 0.7],
    };
    let back: DesignPoint = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
    assert_eq!(back, p);
}
