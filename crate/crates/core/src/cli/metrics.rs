use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use serde_json::{json, Value};

use crate::corpus::split_sentences;
use crate::metrics::report::{fmt4, Table};
use crate::metrics::{
    contamination_report, document_utilization, estimate_cost, kl_divergence, CostEstimate, CostParams, LarReport,
    MetricError, RougeReport, KL_EPSILON,
};

use super::{emit, read_text, write_file, CliError, ExitCode, Format};

#[derive(Debug, Clone, Subcommand)]
pub enum MetricsCommand {
    /// Length adherence rate for one pair of lengths or a CSV of pairs.
    Lar(LarArgs),
    /// ROUGE-1/2/L and their geometric mean.
    Rouge(RougeArgs),
    /// Share of generated n-grams found in the reference.
    Contamination(ContaminationArgs),
    /// Which parts of the source a summary draws on, with KL divergence.
    Utilization(UtilizationArgs),
    /// Token-cost estimate for the three stages.
    Cost(CostArgs),
}

#[derive(Debug, Clone, Args)]
pub struct LarArgs {
    #[arg(long, requires = "target", conflicts_with = "pairs")]
    pub generated_len: Option<u64>,
    #[arg(long)]
    pub target: Option<u64>,
    /// CSV file with one `generated,target` pair per line.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RougeArgs {
    #[arg(long)]
    pub generated: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ContaminationArgs {
    /// Generated text; repeat to pool several documents.
    #[arg(long, required = true)]
    pub generated: Vec<PathBuf>,
    /// Reference text, paired with --generated in order.
    #[arg(long, required = true)]
    pub reference: Vec<PathBuf>,
    /// n or an inclusive range such as 4..8.
    #[arg(long, default_value = "4..8", value_parser = parse_ngram_range)]
    pub n: RangeInclusive<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct UtilizationArgs {
    #[arg(long)]
    pub summary: PathBuf,
    #[arg(long)]
    pub source: PathBuf,
    /// A reference summary; its histogram is the KL baseline.
    #[arg(long)]
    pub reference_summary: Option<PathBuf>,
    #[arg(long, default_value_t = crate::metrics::DEFAULT_BINS)]
    pub bins: usize,
    /// Also write the histogram(s) as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CostArgs {
    /// Input tokens.
    #[arg(long)]
    pub n: u64,
    /// Chunk sizes c1,c2,c3.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub c: Vec<u64>,
    /// Compression ratios a1,a2,a3.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub a: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn parse_ngram_range(s: &str) -> Result<RangeInclusive<usize>, String> {
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| format!("invalid n {t:?}"))
    };
    let range = match s.split_once("..") {
        Some((lo, hi)) => parse(lo)?..=parse(hi.trim_start_matches('='))?,
        None => {
            let n = parse(s)?;
            n..=n
        }
    };
    if range.is_empty() {
        return Err(format!("empty range {s:?}"));
    }
    Ok(range)
}

fn metric_error(e: MetricError) -> CliError {
    CliError::input(e.to_string())
}

/// Parses `generated,target` lines. Blank lines and `#` comments are
/// skipped; errors carry the file and line.
pub fn parse_pairs(path: &Path, text: &str) -> Result<Vec<(u64, u64)>, CliError> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = || format!("{}:{}", path.display(), i + 1);
        let (g, t) = line
            .split_once(',')
            .ok_or_else(|| CliError::input(format!("{}: expected \"generated,target\", got {line:?}", at())))?;
        let num = |v: &str| {
            v.trim()
                .parse::<u64>()
                .map_err(|_| CliError::input(format!("{}: {:?} is not a word count", at(), v.trim())))
        };
        let (g, t) = (num(g)?, num(t)?);
        if t == 0 {
            return Err(CliError::input(format!("{}: target length must be at least 1", at())));
        }
        pairs.push((g, t));
    }
    if pairs.is_empty() {
        return Err(CliError::input(format!("{}: no pairs", path.display())));
    }
    Ok(pairs)
}

fn lar_report(args: &LarArgs) -> Result<(Value, Table), CliError> {
    let pairs = match (&args.pairs, args.generated_len, args.target) {
        (Some(path), _, _) => parse_pairs(path, &read_text(path)?)?,
        (None, Some(g), Some(t)) => vec![(g, t)],
        _ => return Err(CliError::config("give --generated-len and --target, or --pairs")),
    };
    let reports = pairs
        .iter()
        .map(|&(g, t)| LarReport::new(g, t))
        .collect::<Result<Vec<_>, _>>()
        .map_err(metric_error)?;
    let mut table = Table::new(["generated_len", "target_len", "lar"]);
    for r in &reports {
        table.push([r.generated_len.to_string(), r.target_len.to_string(), format!("{:.6}", r.lar)]);
    }
    let json = if reports.len() == 1 {
        serde_json::to_value(reports[0]).expect("json")
    } else {
        let mean = reports.iter().map(|r| r.lar).sum::<f64>() / reports.len() as f64;
        table.push(["mean".to_string(), String::new(), format!("{mean:.6}")]);
        json!({ "pairs": reports, "mean_lar": mean })
    };
    Ok((json, table))
}

fn rouge_report(args: &RougeArgs) -> Result<(Value, Table), CliError> {
    let r = RougeReport::compute(&read_text(&args.generated)?, &read_text(&args.reference)?);
    let mut table = Table::new(["metric", "precision", "recall", "f1"]);
    for (name, s) in [("rouge_1", r.rouge_1), ("rouge_2", r.rouge_2), ("rouge_l", r.rouge_l)] {
        table.push([name.to_string(), fmt4(s.precision), fmt4(s.recall), fmt4(s.f1)]);
    }
    table.push(["geometric_mean".to_string(), String::new(), String::new(), fmt4(r.geometric_mean)]);
    Ok((serde_json::to_value(r).expect("json"), table))
}

fn contamination(args: &ContaminationArgs) -> Result<(Value, Table), CliError> {
    if args.generated.len() != args.reference.len() {
        return Err(CliError::config(format!(
            "{} --generated files but {} --reference files",
            args.generated.len(),
            args.reference.len()
        )));
    }
    let texts = args
        .generated
        .iter()
        .zip(&args.reference)
        .map(|(g, r)| Ok((read_text(g)?, read_text(r)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = contamination_report(texts.iter().map(|(g, r)| (g.as_str(), r.as_str())), args.n.clone());
    let mut table = Table::new(["n", "matched", "total", "overlap_%"]);
    let mut rows = Vec::new();
    for (n, c) in &report.counts {
        table.push([n.to_string(), c.matched.to_string(), c.total.to_string(), fmt4(c.percentage())]);
        rows.push(json!({ "n": n, "matched": c.matched, "total": c.total, "overlap_percent": c.percentage() }));
    }
    Ok((json!({ "per_n": rows }), table))
}

fn utilization(args: &UtilizationArgs) -> Result<(Value, Table), CliError> {
    let source = read_text(&args.source)?;
    let histogram = |path: &Path| {
        let text = read_text(path)?;
        let sentences: Vec<String> = split_sentences(&text).into_iter().map(|s| s.text).collect();
        document_utilization(&sentences, &source, args.bins)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    };
    let summary = histogram(&args.summary)?;
    let reference = args.reference_summary.as_deref().map(histogram).transpose()?;
    let kl = reference
        .as_ref()
        .map(|r| kl_divergence(&summary.bins, &r.bins, KL_EPSILON))
        .transpose()
        .map_err(metric_error)?;

    let mut headers = vec!["bin", "summary"];
    if reference.is_some() {
        headers.push("reference");
    }
    let mut table = Table::new(headers);
    for b in 0..args.bins {
        let mut row = vec![b.to_string(), fmt4(summary.bins[b])];
        if let Some(r) = &reference {
            row.push(fmt4(r.bins[b]));
        }
        table.push(row);
    }
    if let Some(kl) = kl {
        table.push(["kl_divergence".to_string(), format!("{kl:.6}")]);
    }
    if let Some(path) = &args.csv {
        let mut csv = Table::new(table.headers.clone());
        for row in table.rows.iter().take(args.bins) {
            csv.push(row.clone());
        }
        write_file(path, &csv.to_csv())?;
    }
    let json = json!({
        "summary": summary,
        "reference": reference,
        "kl_divergence": kl,
    });
    Ok((json, table))
}

fn cost(args: &CostArgs) -> Result<(Value, Table), CliError> {
    let three = |v: usize, name: &str| {
        if v == 3 {
            Ok(())
        } else {
            Err(CliError::config(format!("--{name} needs exactly three values, got {v}")))
        }
    };
    three(args.c.len(), "c")?;
    three(args.a.len(), "a")?;
    let params = CostParams {
        n: args.n,
        c: [args.c[0], args.c[1], args.c[2]],
        a: [args.a[0], args.a[1], args.a[2]],
    };
    let est: CostEstimate = estimate_cost(&params).map_err(|e| CliError::config(e.to_string()))?;
    let mut table = Table::new(["stage", "encoded_tokens", "decoded_tokens"]);
    for (i, (e, d)) in est.stages_f64().iter().enumerate() {
        table.push([(i + 1).to_string(), format!("{e:.2}"), format!("{d:.2}")]);
    }
    table.push(["total".to_string(), format!("{:.2}", est.total_f64()), String::new()]);
    Ok((est.to_json(&params), table))
}

pub fn cmd_metrics(cmd: &MetricsCommand, format: Format, out: &mut dyn Write) -> Result<ExitCode, CliError> {
    let ((json, table), out_dir) = match cmd {
        MetricsCommand::Lar(a) => (lar_report(a)?, &a.out),
        MetricsCommand::Rouge(a) => (rouge_report(a)?, &a.out),
        MetricsCommand::Contamination(a) => (contamination(a)?, &a.out),
        MetricsCommand::Utilization(a) => (utilization(a)?, &a.out),
        MetricsCommand::Cost(a) => (cost(a)?, &a.out),
    };
    let json_text = serde_json::to_string_pretty(&json).expect("json") + "\n";
    let table_text = table.render();
    if let Some(dir) = out_dir {
        write_file(&dir.join("report.json"), &json_text)?;
        write_file(&dir.join("report.txt"), &table_text)?;
    }
    emit(out, if format == Format::Json { &json_text } else { &table_text })?;
    Ok(ExitCode::Ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ngram_ranges() {
        assert_eq!(parse_ngram_range("4..8").unwrap(), 4..=8);
        assert_eq!(parse_ngram_range("4..=8").unwrap(), 4..=8);
        assert_eq!(parse_ngram_range("5").unwrap(), 5..=5);
        assert!(parse_ngram_range("8..4").is_err());
        assert!(parse_ngram_range("0..4").is_err());
    }

    #[test]
    fn pair_errors_name_the_line() {
        let p = Path::new("pairs.csv");
        assert_eq!(parse_pairs(p, "# g,t\n891,900\n\n670, 600\n").unwrap(), [(891, 900), (670, 600)]);
        let err = parse_pairs(p, "891,900\n12;4\n").unwrap_err();
        assert!(err.message.starts_with("pairs.csv:2:"), "{}", err.message);
        let err = parse_pairs(p, "1,2\n3,4\n5,x\n").unwrap_err();
        assert!(err.message.starts_with("pairs.csv:3:"), "{}", err.message);
        assert!(parse_pairs(p, "5,0").is_err());
    }
}
