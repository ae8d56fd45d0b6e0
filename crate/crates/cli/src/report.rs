use std::io::Read;
use std::path::{Path, PathBuf};

use clap::Args;
use rganet::engine::MAGIC;
use rganet::{build_model, Model32, Profile, TrainConfig};

use crate::{io_failure, Outcome};

/// Parameter and FLOP counts per module at the configured input size.
#[derive(Debug, Args)]
#[command(long_about = "Parameter and FLOP counts per module at the configured input size, batch 1.\n\n\
    MODEL is a checkpoint or a `key = value` config file. With --csv the columns are: \
    kind, name, h, w, c, params, flops. kind is module, gam or total. GAM rows carry \
    their extents, the enumerated depth-wise kernel count in params, and leave flops empty.")]
pub struct ReportArgs {
    pub model: PathBuf,
    #[arg(long)]
    pub csv: bool,
}

fn load(path: &Path) -> Outcome<Model32> {
    let mut head = [0u8; 4];
    let mut file = std::fs::File::open(path).map_err(|e| io_failure(path, e))?;
    let is_checkpoint = file.read_exact(&mut head).is_ok() && &head == MAGIC;
    if is_checkpoint {
        Ok(Model32::load(path)?)
    } else {
        let cfg = TrainConfig::load(path)?;
        Ok(build_model(cfg.model, cfg.seed)?)
    }
}

fn print_table(p: &Profile) {
    println!("{:<10} {:>12} {:>16}", "module", "params", "flops");
    for m in &p.modules {
        println!("{:<10} {:>12} {:>16}", m.name, m.params, m.flops);
    }
    println!("{:<10} {:>12} {:>16}", "total", p.params, p.flops);
    println!();
    println!("{:<10} {:>5} {:>5} {:>5} {:>12} {:>12} {:>10}", "gam", "h", "w", "c", "2hw+cw+hc", "enumerated", "with aux");
    for g in &p.gams {
        let formula = 2 * g.h * g.w + g.c * g.w + g.h * g.c;
        println!(
            "{:<10} {:>5} {:>5} {:>5} {:>12} {:>12} {:>10}",
            g.name, g.h, g.w, g.c, formula, g.depthwise, g.total
        );
    }
}

fn write_csv(p: &Profile) -> Outcome {
    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    w.write_record(["kind", "name", "h", "w", "c", "params", "flops"])?;
    for m in &p.modules {
        w.write_record(["module", &m.name, "", "", "", &m.params.to_string(), &m.flops.to_string()])?;
    }
    for g in &p.gams {
        let dims = [g.h, g.w, g.c].map(|v| v.to_string());
        w.write_record(["gam", &g.name, &dims[0], &dims[1], &dims[2], &g.depthwise.to_string(), ""])?;
    }
    w.write_record(["total", "", "", "", "", &p.params.to_string(), &p.flops.to_string()])?;
    w.flush().map_err(|e| crate::Failure::Data(format!("writing CSV: {e}")))
}

pub fn run(args: &ReportArgs) -> Outcome {
    let profile = load(&args.model)?.count_params_flops()?;
    if args.csv {
        write_csv(&profile)
    } else {
        print_table(&profile);
        Ok(())
    }
}
