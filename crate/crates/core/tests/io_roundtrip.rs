use hangstring_core::bessel::chain_mode;
use hangstring_core::evolution::{solve_ibvp, Coefficients};
use hangstring_core::mesh::{make_mesh, GridFn};
use hangstring_core::string::{make_straight_background, BackgroundState};

#[test]
fn trajectory_csv_has_one_row_per_cell_and_snapshot() {
    let m = make_mesh(16, 1.0).unwrap();
    let c = Coefficients::hanging_chain(1, 1.0);
    let u0 = GridFn::from_scalar_fn(&m, chain_mode);
    let tr = solve_ibvp(&c, &u0, &GridFn::zeros(&m, 1), 0.0, 0.1, 0.01).unwrap();
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,s,comp,u,v");
    assert_eq!(lines.count(), tr.snapshots.len() * 16);
}

#[test]
fn straight_background_survives_csv() {
    let m = make_mesh(24, 1.0).unwrap();
    let g = [0.0, -2.0];
    let bg = make_straight_background(&g, &m, 0.2, 0.1).unwrap();
    let mut csv = String::from("t,s,x0,x1,tau\n");
    for &t in bg.times() {
        let smp = bg.at(t);
        for (i, s) in m.centers().iter().enumerate() {
            let x = smp.x.cell(i);
            csv.push_str(&format!(
                "{t:.17e},{s:.17e},{:.17e},{:.17e},{:.17e}\n",
                x[0],
                x[1],
                smp.tau.get(i, 0)
            ));
        }
    }
    let back = BackgroundState::from_csv(csv.as_bytes(), &g, &m).unwrap();
    assert!(back.is_steady() || back.times().len() == bg.times().len());
    let (motion, tension, bc) = back.residuals().unwrap();
    assert!(motion < 1e-6 && tension < 1e-6 && bc < 1e-6, "{motion} {tension} {bc}");
    assert!((&back.at(0.1).tau - &bg.at(0.1).tau).max_abs() < 1e-14);
}

#[test]
fn background_csv_rejects_wrong_header() {
    let m = make_mesh(4, 1.0).unwrap();
    let bad = "t,s,x,tau\n0,0.125,0,0,0\n";
    assert!(BackgroundState::from_csv(bad.as_bytes(), &[0.0, -1.0], &m).is_err());
}
