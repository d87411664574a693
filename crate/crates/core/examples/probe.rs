//! Runs a scenario over a range of seeds and prints per-stage counts.
//!
//! `cargo run --release -p semmap-core --example probe -- prelim 0 5`

use std::time::Instant;

use semmap_core::pipeline::run;
use semmap_core::RunConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map_or("prelim", String::as_str);
    let from: u64 = args.get(1).map_or(Ok(0), |s| s.parse())?;
    let to: u64 = args.get(2).map_or(Ok(from + 1), |s| s.parse())?;
    let cfg = RunConfig::load(name)?;
    for seed in from..to {
        let t = Instant::now();
        let out = run(&cfg, seed, None, None)?;
        let s = &out.summary;
        let obj: Vec<String> = s.stages.object.iter().map(|m| format!("{}/{}/{}", m.tp, m.fp, m.fn_)).collect();
        let img: Vec<String> = s.stages.image.iter().map(|m| format!("{}/{}", m.tp, m.fp)).collect();
        println!(
            "seed {seed:>3} {:>6.2}s raw {:>6} obj {} img {} reports {}/{} clusters {} reward {}",
            t.elapsed().as_secs_f64(),
            s.raw_detections,
            obj.join(" "),
            img.join(" "),
            s.link.delivered,
            s.link.reports_generated,
            s.clusters,
            s.reward
        );
    }
    Ok(())
}
