//! The actuator buffer on its own: sequences arrive early, activate at their
//! stamp, and the buffer starves when a sequence runs out.
//!
//! cargo run --example actuator_buffer

use predcomp::transport::{ActuatorBuffer, ControlSequencePacket, DelayRecord};
use predcomp::ControlVector;

fn packet(stamp: usize, measured: usize, first: f64) -> ControlSequencePacket {
    ControlSequencePacket {
        stamp_n: stamp,
        measurement_stamp: measured,
        sequence: (0..4).map(|q| ControlVector::from_element(1, first + q as f64)).collect(),
    }
}

fn main() {
    let mut buffer = ActuatorBuffer::new(4).unwrap().with_startup_input(ControlVector::zeros(1));
    // (arrival time, packet)
    let arrivals = [(1, packet(3, 0, 10.0)), (2, packet(5, 2, 20.0)), (4, packet(6, 3, 30.0))];
    for now in 0..12 {
        for (_, p) in arrivals.iter().filter(|(at, _)| *at == now) {
            buffer.insert(p.clone(), now);
        }
        match buffer.read(now) {
            Ok(applied) => println!("n={now:2}  u={:5.1}  active={:?}", applied.input()[0], buffer.active_stamp()),
            Err(e) => {
                println!("n={now:2}  {e}");
                break;
            }
        }
    }
    for s in buffer.switch_log() {
        println!("switch at sigma={} to stamp {} (tau={})", s.sigma, s.stamp, s.tau);
    }
    let record = DelayRecord::from_switches(buffer.switch_log(), None);
    println!("tau_inf={} delta_sigma_inf={}", record.tau_inf, record.delta_sigma_inf);
}
