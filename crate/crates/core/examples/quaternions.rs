//! Quaternion log/exp maps, orientation error and constant-rate integration.
//!
//!     cargo run --example quaternions

use automaton_drive::quaternion::{orientation_error, qexp, qintegrate, qlog, quat_to_yaw, yaw_to_quat, RotVec};

fn main() -> automaton_drive::Result<()> {
    let w = RotVec([0.3, -0.2, 0.9]);
    let q = qexp(&w)?;
    println!("exp({:?}) = {:?}", w.0, q);
    println!("log(exp(w)) = {:?}", qlog(&q)?.0);

    let goal = yaw_to_quat(1.2);
    let current = yaw_to_quat(-0.3);
    let err = orientation_error(&goal, &current)?;
    println!("orientation error to a yaw of 1.2 from -0.3: {:?}", err.0);

    // a constant yaw rate of 0.5 rad/s for 2 s, in one step and in 100
    let eta = RotVec([0.0, 0.0, 0.5]);
    let once = qintegrate(&current, &eta, 2.0, 1.0)?;
    let mut many = current;
    for _ in 0..100 {
        many = qintegrate(&many, &eta, 0.02, 1.0)?;
    }
    println!("yaw after one step {:.9}, after 100 steps {:.9}", quat_to_yaw(&once), quat_to_yaw(&many));
    Ok(())
}
