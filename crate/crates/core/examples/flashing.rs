//! Feeds a flashing yellow arrow (1 Hz, duty 0.5, 10 frames/s) through the
//! duty-cycle detector and prints when the flag rises and falls.
//!
//!     cargo run --example flashing

use tlfusion::detection::TlClass;
use tlfusion::statefilter::{detect_flashing, FlashingConfig, FlashingLatch};

fn main() {
    let cfg = FlashingConfig::default();
    let mut latch = FlashingLatch::default();
    let mut history = Vec::new();
    let mut flagged = false;
    for frame in 0..90 {
        let class = match frame {
            0..20 => TlClass::YellowLeft4,
            20..70 if (frame - 20) % 10 < 5 => TlClass::FlashingYellowLeft4,
            20..70 => TlClass::Off4,
            _ => TlClass::RedLeft4,
        };
        history.push(class);
        let literal = detect_flashing(&history, &cfg).is_some();
        let now = latch.update(&history, &cfg).is_some();
        if now != flagged {
            println!("frame {frame:>2}: flag {}", if now { "raised" } else { "dropped" });
            flagged = now;
        }
        if flagged && !literal {
            println!("frame {frame:>2}: held by the latch");
        }
    }
    println!("flash onset at frame 20, offset at frame 70 (one observation per frame)");
}
