//! Prints the nominal-load voltage profile of a built-in feeder.
//!
//! cargo run -p cmarl-vvc --example voltage_profile -- ieee34 [load_scale] [taps...]

use cmarl_vvc::feeder::{solve_power_flow, total_and_per_branch_losses, FeederModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map(String::as_str).unwrap_or("ieee4");
    let scale: f64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(1.0);
    let feeder = FeederModel::builtin(name)?;
    let mut taps = feeder.initial_taps();
    for (t, s) in taps.iter_mut().zip(args.iter().skip(2)) {
        *t = s.parse()?;
    }
    let (mut p, mut q) = feeder.nominal_loads();
    p.iter_mut().chain(q.iter_mut()).for_each(|v| *v *= scale);
    let sol = solve_power_flow(&feeder, &taps, &p, &q)?;
    for (bus, v) in feeder.buses.iter().zip(&sol.voltages) {
        println!("{:>5} {:.4}", bus.id, v);
    }
    let (lo, hi) = sol.voltages.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    println!(
        "taps {:?} load {:.1} kW losses {:.2} kW  vmin {:.4} vmax {:.4}  sweeps {}",
        taps,
        p.iter().sum::<f64>(),
        total_and_per_branch_losses(&sol).total_kw,
        lo,
        hi,
        sol.iterations
    );
    Ok(())
}
