use std::io::Cursor;

use teki::io::{read_grid, read_metrics, read_obs, read_trajectory, write_grid, write_metrics, write_obs, write_trajectory, Manifest};
use teki_core::field::{CovarianceSpec, GridField, SpectralField};
use teki_core::flow::{MetricsRow, TrajectoryPoint};

fn bytes<F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>>(f: F) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).unwrap();
    buf
}

#[test]
fn grid_round_trip_is_exact() {
    let g = GridField::from_fn(7, |x, y| (x * 3.1).sin() + y.exp() / 3.0);
    let text = bytes(|w| write_grid(w, &g));
    let back = read_grid(Cursor::new(&text)).unwrap();
    assert_eq!(back, g);
}

#[test]
fn grid_layout_rows_are_x2() {
    let g = GridField::from_fn(2, |x, y| x + 10.0 * y);
    let text = String::from_utf8(bytes(|w| write_grid(w, &g))).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n=2");
    assert_eq!(lines.len(), 4);
    let last: Vec<f64> = lines[3].split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(last, vec![10.0, 10.5, 11.0]);
}

#[test]
fn grid_rejects_bad_input() {
    assert!(read_grid(Cursor::new("")).is_err());
    assert!(read_grid(Cursor::new("m=1\n0,0\n0,0\n")).is_err());
    assert!(read_grid(Cursor::new("n=1\n0,0,0\n0,0\n")).is_err());
    assert!(read_grid(Cursor::new("n=1\n0,x\n0,0\n")).is_err());
    assert!(read_grid(Cursor::new("n=1\n0,0\n")).is_err());
}

#[test]
fn obs_round_trip() {
    let y = vec![1.0 / 3.0, -2.5e-300, 7.0];
    let back = read_obs(Cursor::new(bytes(|w| write_obs(w, &y)))).unwrap();
    assert_eq!(&back[..], &y[..]);
}

#[test]
fn floats_carry_17_significant_digits() {
    assert_eq!(teki::io::fmt_f64(0.1), "1.0000000000000001e-1");
}

#[test]
fn metrics_round_trip() {
    let rows = vec![
        MetricsRow {
            iter: 0,
            t: 0.0,
            h: 0.0,
            rel_error: 0.5,
            misfit: 3.0,
            noise_level: 2.0,
            cov_norm: 1e-5,
            loss: 4.5,
            member_misfit: vec![1.0],
        },
        MetricsRow {
            iter: 1,
            t: 0.01,
            h: 0.01,
            rel_error: f64::NAN,
            misfit: 2.0,
            noise_level: 2.0,
            cov_norm: 9e-6,
            loss: 2.0,
            member_misfit: vec![],
        },
    ];
    let parsed = read_metrics(Cursor::new(bytes(|w| write_metrics(w, &rows)))).unwrap();
    assert_eq!(parsed.len(), 2);
    assert_eq!(parsed[1].iter, 1);
    assert_eq!(parsed[0].values, [0.0, 0.0, 0.5, 3.0, 2.0, 1e-5, 4.5]);
    assert!(parsed[1].values[2].is_nan());
}

#[test]
fn trajectory_round_trip() {
    let spec = CovarianceSpec::new(2.0, 1.0, 1).unwrap();
    let f = |c: [f64; 4]| SpectralField::new(spec, c.to_vec()).unwrap();
    let points = vec![
        TrajectoryPoint { iter: 0, t: 0.0, members: vec![f([1.0, 2.0, 3.0, 4.0]), f([0.5, 0.0, 0.0, -1.0])] },
        TrajectoryPoint { iter: 1, t: 0.25, members: vec![f([0.9, 2.0, 3.0, 4.0]), f([0.6, 0.0, 0.0, -1.0])] },
    ];
    let back = read_trajectory(Cursor::new(bytes(|w| write_trajectory(w, &points))), spec).unwrap();
    assert_eq!(back, points);
}

#[test]
fn manifest_set_replaces_and_round_trips() {
    let mut m = Manifest::new();
    m.set("a", 1);
    m.set("b", "x=y");
    m.set("a", 2);
    assert_eq!(m.entries().len(), 2);
    assert_eq!(m.get("a"), Some("2"));
    let back = Manifest::parse(&m.to_text()).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.get("b"), Some("x=y"));
    assert!(Manifest::parse("novalue\n").is_err());
}
