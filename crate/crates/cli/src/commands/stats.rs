use anyhow::{bail, Context, Result};
use vpsim_core::analytics::{descriptive_stats, read_survey, wilcoxon_signed_rank, AnalyticsError, Table};

use super::open;
use crate::args::StatsArgs;
use crate::output::{num, Output};

pub fn run(args: StatsArgs, machine: bool) -> Result<Output> {
    if !args.delimiter.is_ascii() {
        bail!("delimiter must be a single ASCII character");
    }
    let items = read_survey(open(&args.survey)?, args.delimiter as u8)
        .with_context(|| format!("reading {}", args.survey.display()))?;

    let mut t = Table::new(["item", "n", "mean", "median", "sd", "w", "p", "r", "method"]);
    for item in &items {
        let d = descriptive_stats(item);
        let mut row = vec![
            item.item_label().to_string(),
            d.count.to_string(),
            num(d.mean, machine),
            num(d.median, machine),
            num(d.std_dev, machine),
        ];
        match wilcoxon_signed_rank(item, args.mu0, args.alternative) {
            Ok(w) => row.extend([
                num(w.w, machine),
                if machine { format!("{}", w.p) } else { format!("{:.4}", w.p) },
                num(w.r, machine),
                format!("{:?}", w.method).to_lowercase(),
            ]),
            Err(AnalyticsError::AllDifferencesZero(_)) => {
                row.extend(["-".into(), "-".into(), "-".into(), "no test".into()]);
            }
            Err(e) => return Err(e).with_context(|| format!("item `{}`", item.item_label())),
        }
        t.push(row);
    }

    let mut out = Output::default();
    out.section(
        &format!("signed-rank test against mu0 = {} ({})", args.mu0, args.alternative),
        &t,
        machine,
    );
    Ok(out)
}
