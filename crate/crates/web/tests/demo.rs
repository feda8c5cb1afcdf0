use taylor_icp::{nearest_neighbors, rmse, PointSet};
use taylor_icp_web::demo::{deform_pair, register_frames, shear_bend_map, warp_grid};

#[test]
fn zero_parameters_leave_grid_in_place() {
    let map = shear_bend_map(0.0, 0.0, 0.0).unwrap();
    let g = warp_grid(&map, 3, 5).unwrap();
    assert_eq!(g.len(), 2 * 3 * 5 * 2);
    // First horizontal line runs along y = -1, first vertical along x = -1.
    assert_eq!(&g[..4], &[-1.0, -1.0, -0.5, -1.0]);
    let v = 3 * 5 * 2;
    assert_eq!(&g[v..v + 4], &[-1.0, -1.0, -1.0, -0.5]);
}

#[test]
fn grid_follows_the_polynomial() {
    let (a1, a2, a3) = (0.4, -0.6, 0.3);
    let map = shear_bend_map(a1, a2, a3).unwrap();
    let g = warp_grid(&map, 4, 7).unwrap();
    let (u, v) = (-1.0 + 2.0 * 3.0 / 6.0, -1.0 + 2.0 / 3.0);
    let idx = (7 + 3) * 2;
    assert!((g[idx] - (u + a1 * v + a2 * u * u / 2.0)).abs() < 1e-15);
    assert!((g[idx + 1] - (v + a3 * u * v)).abs() < 1e-15);
    assert!(warp_grid(&map, 1, 7).is_err());
}

#[test]
fn frames_end_at_registered_result() {
    let (moving, fixed) = deform_pair("disk", 80, 2, 0.05).unwrap();
    let frames = register_frames(&fixed, &moving, 4).unwrap();
    assert_eq!(frames.points.len(), frames.labels.len());
    assert_eq!(frames.labels[0], "start");
    assert!(frames.labels[2..].iter().all(|l| l.starts_with("taylor order")));
    let last = PointSet::new(2, frames.points.last().unwrap().clone()).unwrap();
    let corr = nearest_neighbors(&fixed, &last).unwrap();
    let e = rmse(&fixed, &last, &corr).unwrap();
    assert!((e - frames.rmse.last().unwrap()).abs() < 1e-9);
    assert!(e < 0.1 * 0.05);
}

#[test]
fn unknown_shape_rejected() {
    assert!(deform_pair("teapot", 50, 0, 0.05).is_err());
}
