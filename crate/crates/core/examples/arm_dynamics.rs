//! Inverse dynamics, end-effector speed and the ballistic landing of a
//! release state on the default arm.
//!
//! `cargo run --release --example arm_dynamics`

use motion_manifold::robot::{norm2, PlanarArm};
use motion_manifold::task::{flight_time, release_error, TaskConfig, TaskParam};

fn main() -> motion_manifold::Result<()> {
    let arm = PlanarArm::default_three_link();
    let cfg = TaskConfig::default();
    let q = [0.4, 0.6, 0.3];
    let dq = [-2.0, -1.5, -1.0];
    let ddq = [0.0; 3];

    let fk = arm.fk(&q)?;
    println!("end effector at ({:.3}, {:.3})", fk.ee_position[0], fk.ee_position[1]);
    println!("ee speed {:.3} m/s", norm2(arm.ee_velocity(&q, &dq)?));
    println!("torques {:?}", arm.inverse_dynamics(&q, &dq, &ddq)?);
    let (clearance, pair) = arm.min_clearance(&q)?;
    println!("clearance {clearance:.3} m between {pair:?}");

    let (p, v) = arm.object_kinematics(&q, &dq)?;
    let tau = TaskParam::new(1.0, 0.1);
    let ft = flight_time(p[1], v[1], tau.h, cfg.g);
    println!(
        "released at ({:.3}, {:.3}) with ({:.3}, {:.3}) m/s: lands after {:.3} s at r = {:.3}",
        p[0],
        p[1],
        v[0],
        v[1],
        ft.dt,
        p[0] + v[0] * ft.dt
    );
    let (err, _) = release_error(&arm, &q, &dq, tau, &cfg)?;
    println!("miss for target ({}, {}): {:.3} m", tau.r, tau.h, err.sqrt());
    Ok(())
}
