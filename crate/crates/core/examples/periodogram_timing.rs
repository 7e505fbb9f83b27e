//! Times the peak search of a 1024 x 1024 periodogram for each pilot pattern.

use std::time::Instant;

use bisac_core::channel::{noise_stream, NoiseModel};
use bisac_core::receiver::SensingReceiver;
use bisac_core::waveform::{generate_frame, FrameConfig, FrameParams};

fn main() {
    for (n_p, m_p) in [(2, 4), (2, 2), (2, 1)] {
        let cfg = FrameConfig::new(FrameParams::reference().with_pilot_spacing(n_p, m_p)).unwrap();
        let x = generate_frame(&cfg, 1, 2);
        let stream = noise_stream(&cfg, &NoiseModel::with_variance(1.0), 3);
        let mut rx = SensingReceiver::new(&cfg, &x, 1024, 1024);
        let reps = 40;
        let start = Instant::now();
        let mut acc = 0.0;
        for i in 0..reps {
            acc += rx.metric_at(&stream.samples, 14 + i).unwrap().eta;
        }
        let per = start.elapsed().as_secs_f64() / reps as f64;
        println!("pattern ({n_p},{m_p}): {:.2} ms per window (checksum {acc:.3e})", per * 1e3);
    }
}
