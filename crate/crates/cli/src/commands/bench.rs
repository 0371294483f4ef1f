use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{anyhow, Result};
use serde::Serialize;

use dsk::experiment::{gram_timing, TimedMethod};
use dsk::MetricId;

use crate::io;

#[derive(clap::Args, Debug, Serialize)]
pub struct Args {
    /// Comma-separated dimensions; `a..b` expands to the 1-2-5 ladder within `[a, b]`.
    #[arg(long, value_delimiter = ',', default_value = "5..100")]
    pub dims: Vec<String>,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// `all` or a list of metric names plus `stein` (kernel) and `dsk`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub metrics: Vec<String>,
    /// Best of this many runs is reported.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn expand_dims(items: &[String]) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for item in items {
        if let Some((a, b)) = item.split_once("..") {
            let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
            let mut decade = 1;
            while decade <= b {
                for m in [1, 2, 5] {
                    let v = m * decade;
                    if (a..=b).contains(&v) {
                        out.push(v);
                    }
                }
                decade *= 10;
            }
        } else {
            out.push(item.trim().parse().map_err(|_| anyhow!("bad dimension '{item}'"))?);
        }
    }
    if out.is_empty() || out.contains(&0) {
        return Err(anyhow!("no positive dimensions in {items:?}"));
    }
    Ok(out)
}

fn parse_method(name: &str) -> Result<TimedMethod> {
    Ok(match name.trim() {
        "stein" | "sk" => TimedMethod::Stein,
        "dsk" => TimedMethod::Dsk,
        other => TimedMethod::Metric(io::parse_metric(other).map_err(anyhow::Error::msg)?),
    })
}

pub fn run(args: Args) -> Result<u8> {
    let dims = expand_dims(&args.dims)?;
    let methods: Vec<TimedMethod> = if args.metrics.iter().any(|m| m == "all") {
        TimedMethod::all()
    } else {
        args.metrics.iter().map(|m| parse_method(m)).collect::<Result<_>>()?
    };
    let mut csv = String::from("method,dim,count,seconds\n");
    let mut notes = Vec::new();
    for (i, &d) in dims.iter().enumerate() {
        let rows = gram_timing(&methods, d, args.count, args.repeats, args.seed.wrapping_add(i as u64))?;
        for r in &rows {
            writeln!(csv, "{},{},{},{:.6}", r.method, r.dim, r.count, r.seconds)?;
        }
        let time = |m: TimedMethod| rows.iter().find(|r| r.method == m.name()).map(|r| r.seconds);
        let stein = time(TimedMethod::Stein);
        if let (Some(airm), Some(sk)) = (time(TimedMethod::Metric(MetricId::Airm)), stein) {
            notes.push(format!("d={d}: airm slower than stein: {}", if airm > sk { "yes" } else { "no" }));
        }
        if let (Some(dsk), Some(sk)) = (time(TimedMethod::Dsk), stein) {
            notes.push(format!("d={d}: dsk within 3x stein: {} ({:.2}x)", if dsk <= 3.0 * sk { "yes" } else { "no" }, dsk / sk.max(f64::MIN_POSITIVE)));
        }
    }
    io::emit(args.out.as_deref(), &csv)?;
    if let Some(out) = &args.out {
        io::write_config(out, "bench", &args)?;
    }
    for n in notes {
        eprintln!("{n}");
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_follow_the_ladder() {
        let dims = expand_dims(&["5..100".into(), "7".into()]).unwrap();
        assert_eq!(dims, vec![5, 10, 20, 50, 100, 7]);
        assert!(expand_dims(&["0".into()]).is_err());
    }
}
