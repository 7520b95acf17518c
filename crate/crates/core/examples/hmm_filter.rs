//! Filters a noisy three-bulb observation stream with the forward
//! algorithm and compares the filtered state with the raw argmax.
//!
//!     cargo run --example hmm_filter

use tlfusion::detection::{confusion_from_counts, Confidence, TlClass, TlType};
use tlfusion::statefilter::Hmm;

fn main() -> tlfusion::Result<()> {
    // rows true, columns observed: red, yellow, green
    let counts = vec![vec![900, 60, 40], vec![100, 800, 100], vec![30, 70, 900]];
    let hmm = Hmm::with_defaults(TlType::ThreeBulb, 0.95, confusion_from_counts(&counts)?)?;
    let mut belief = hmm.initial_belief(0.0);

    let truth = [TlClass::Red3; 6].into_iter().chain([TlClass::Green3; 6]);
    let observed = [
        TlClass::Red3, TlClass::Red3, TlClass::Green3, TlClass::Red3, TlClass::Red3, TlClass::Red3,
        TlClass::Green3, TlClass::Green3, TlClass::Yellow3, TlClass::Green3, TlClass::Green3, TlClass::Green3,
    ];
    println!("{:>4} {:>9} {:>9} {:>9}  belief", "step", "truth", "observed", "filtered");
    for (k, (truth, obs)) in truth.zip(observed).enumerate() {
        let mut v = [0.0; 13];
        v[obs.index()] = 0.8;
        v[TlClass::Yellow3.index()] += 0.1;
        v[TlClass::Red3.index()] += 0.05;
        v[TlClass::Green3.index()] += 0.05;
        let x = Confidence::new(v)?.restricted(TlType::ThreeBulb).unwrap();
        hmm.observe(&mut belief, &x, k as f64 * 0.1)?;
        let alpha: Vec<String> = belief.alpha.iter().map(|a| format!("{a:.3}")).collect();
        println!("{k:>4} {:>9} {:>9} {:>9}  [{}]", truth.name(), obs.name(), hmm.map_state(&belief).name(), alpha.join(", "));
    }
    Ok(())
}
