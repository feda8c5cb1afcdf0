use proptest::prelude::*;
use taylor_icp::io::{format_ply, format_text, parse_cloud, read_map, trace_csv, write_map, TRACE_HEADER};
use taylor_icp::linear::Homography;
use taylor_icp::synth::{random_taylor_warp, unit_disk, TaylorWarpSpec};
use taylor_icp::taylor::ChainStage;
use taylor_icp::{analytic_icp, IcpConfig, MapChain, PointSet};

fn any_finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL
}

proptest! {
    #[test]
    fn text_cloud_round_trip(n in 1usize..=4, vals in prop::collection::vec(any_finite(), 1..60)) {
        let len = vals.len() / n * n;
        prop_assume!(len > 0);
        let pts = PointSet::new(n, vals[..len].to_vec()).unwrap();
        prop_assert_eq!(parse_cloud(&format_text(&pts)).unwrap(), pts);
    }

    #[test]
    fn ply_cloud_round_trip(vals in prop::collection::vec(any_finite(), 3..60)) {
        let len = vals.len() / 3 * 3;
        let pts = PointSet::new(3, vals[..len].to_vec()).unwrap();
        prop_assert_eq!(parse_cloud(&format_ply(&pts).unwrap()).unwrap(), pts);
    }

    #[test]
    fn map_round_trip_is_exact(seed in 0u64..5000, n in 2usize..=3, order in 1usize..=4, c in prop::collection::vec(-1.0f64..1.0, 3)) {
        let map = random_taylor_warp(&TaylorWarpSpec { dim: n, order, seed, ..Default::default() }).unwrap()
            .with_center(&c[..n]).unwrap();
        let mut chain = MapChain::new();
        chain.push(map.clone());
        chain.push(map.lifted(order + 1));
        let back = read_map(&write_map(&chain).unwrap()).unwrap();
        prop_assert_eq!(&back, &chain);
        let grid = unit_disk(50);
        if n == 2 {
            prop_assert_eq!(back.apply(&grid).unwrap(), chain.apply(&grid).unwrap());
        }
    }

    #[test]
    fn projective_stage_round_trip(m in prop::collection::vec(-2.0f64..2.0, 8)) {
        let matrix = [[m[0], m[1], m[2]], [m[3], m[4], m[5]], [m[6] * 0.1, m[7] * 0.1, 1.0]];
        let chain = MapChain::from_stages(vec![ChainStage::Projective(Homography { matrix })]);
        prop_assert_eq!(read_map(&write_map(&chain).unwrap()).unwrap(), chain);
    }
}

#[test]
fn file_round_trip_through_disk() {
    let dir = std::env::temp_dir().join(format!("taylor-icp-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let pts = taylor_icp::synth::lumpy_solid(40, 3);
    for name in ["a.txt", "a.ply"] {
        let path = dir.join(name);
        taylor_icp::io::write_cloud(&path, &pts).unwrap();
        assert_eq!(taylor_icp::io::read_cloud(&path).unwrap(), pts.without_meta());
    }
    let chain = MapChain::from_stages(vec![random_taylor_warp(&TaylorWarpSpec {
        dim: 3,
        ..Default::default()
    })
    .unwrap()
    .into()]);
    let path = dir.join("map.json");
    taylor_icp::io::save_map(&path, &chain).unwrap();
    assert_eq!(taylor_icp::io::load_map(&path).unwrap(), chain);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn trace_csv_shape() {
    let moving = unit_disk(60);
    let warp = random_taylor_warp(&TaylorWarpSpec {
        coeff_range: 0.05,
        ..Default::default()
    })
    .unwrap();
    let fixed = warp.apply(&moving).unwrap();
    let r = analytic_icp(&fixed, &moving, &IcpConfig::default()).unwrap();
    let csv = trace_csv(&r.trace);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(TRACE_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), r.trace.len());
    for (row, rec) in rows.iter().zip(&r.trace.iterations) {
        assert_eq!(row.len(), 6);
        assert_eq!(row[1], rec.stage.to_string());
        assert_eq!(row[3].parse::<f64>().unwrap(), rec.rmse);
    }
}
