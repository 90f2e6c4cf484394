use std::fmt::Write;

use super::format::{exact, fixed2, probability, threshold};
use super::{CellResult, OutputFormat, SweepResult};
use crate::algorithms::AlgorithmKind;
use crate::analytic::AnalyticError;

pub const TABLE_HEADER: &str =
    "param,first_cov,first_ops,first_occ,thr_cov,thr_ops,thr_occ,prob,smp_cov,smp_ops,smp_occ";

pub const STATS_HEADER: &str = "algorithm,param,seeds,coverage_mean,coverage_std,ops_mean,ops_std,occ_mean,occ_std,\
analytic_coverage,analytic_ops,analytic_occ,analytic_status";

const PLOT_HEADER: &str = "algorithm,param,coverage,ops_reduction,occ_reduction";

/// Renders a sweep. Coverage is printed in percent everywhere.
pub fn emit_table(result: &SweepResult, format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => table(result, Style::Csv),
        OutputFormat::Markdown => table(result, Style::Markdown),
        OutputFormat::Plot => plot(result),
        OutputFormat::Stats => stats(result),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Style {
    Csv,
    Markdown,
}

fn has(result: &SweepResult, kind: AlgorithmKind) -> bool {
    result.cells.iter().any(|c| c.algorithm == kind)
}

fn metric_cells(cell: Option<&CellResult>) -> [String; 3] {
    match cell {
        Some(c) => [fixed2(100.0 * c.mean.coverage), fixed2(c.mean.ops), fixed2(c.mean.occ)],
        None => Default::default(),
    }
}

fn table(result: &SweepResult, style: Style) -> String {
    let thresholds_used = has(result, AlgorithmKind::First) || has(result, AlgorithmKind::Threshold);
    let probabilities_used = has(result, AlgorithmKind::Sampling);
    let rows = if thresholds_used { result.thresholds.len() } else { 0 }.max(if probabilities_used {
        result.probabilities.len()
    } else {
        0
    });

    let mut out = String::new();
    match style {
        Style::Csv => {
            out.push_str(TABLE_HEADER);
            out.push('\n');
        }
        Style::Markdown => {
            let unit = result.axis.unit();
            let _ = writeln!(
                out,
                "Model `{}`, decision by {}, {} flows per run, seeds {}.\n",
                result.model,
                result.axis,
                result.flows_per_run,
                result.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
            );
            let _ = writeln!(
                out,
                "| Threshold ({unit}) | First coverage [%] | First ops reduction | First occ. reduction \
                 | Threshold coverage [%] | Threshold ops reduction | Threshold occ. reduction \
                 | Sampling prob. | Sampling coverage [%] | Sampling ops reduction | Sampling occ. reduction |"
            );
            out.push_str(&"|---:".repeat(11));
            out.push_str("|\n");
        }
    }
    for i in 0..rows {
        let param = match result.thresholds.get(i) {
            Some(&t) if thresholds_used => threshold(t),
            _ => String::new(),
        };
        let prob = match result.probabilities.get(i) {
            Some(&p) if probabilities_used => probability(p),
            _ => String::new(),
        };
        let mut fields = vec![param];
        fields.extend(metric_cells(result.cell(AlgorithmKind::First, i)));
        fields.extend(metric_cells(result.cell(AlgorithmKind::Threshold, i)));
        fields.push(prob);
        fields.extend(metric_cells(result.cell(AlgorithmKind::Sampling, i)));
        match style {
            Style::Csv => {
                out.push_str(&fields.join(","));
                out.push('\n');
            }
            Style::Markdown => {
                let _ = writeln!(out, "| {} |", fields.join(" | "));
            }
        }
    }
    out
}

fn param_text(c: &CellResult) -> String {
    match c.algorithm {
        AlgorithmKind::Sampling => exact(c.param),
        _ => threshold(c.param),
    }
}

fn plot(result: &SweepResult) -> String {
    let mut out = String::from(PLOT_HEADER);
    out.push('\n');
    for c in &result.cells {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6}",
            c.algorithm,
            param_text(c),
            100.0 * c.mean.coverage,
            c.mean.ops,
            c.mean.occ
        );
    }
    out
}

fn stats(result: &SweepResult) -> String {
    let mut out = String::from(STATS_HEADER);
    out.push('\n');
    for c in &result.cells {
        let (analytic, status) = match &c.analytic {
            None => ([String::new(), String::new(), String::new()], String::new()),
            Some(Ok(a)) => (
                [exact(100.0 * a.coverage), exact(a.ops_reduction), exact(a.occ_reduction)],
                if a.flagged() { "flagged".to_string() } else { "ok".to_string() },
            ),
            Some(Err(AnalyticError::Degenerate { .. })) => {
                (["0".to_string(), "inf".to_string(), "inf".to_string()], "degenerate".to_string())
            }
            Some(Err(e)) => ([String::new(), String::new(), String::new()], format!("\"{e}\"")),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            c.algorithm,
            param_text(c),
            c.runs.len(),
            exact(100.0 * c.mean.coverage),
            exact(100.0 * c.std.coverage),
            exact(c.mean.ops),
            exact(c.std.ops),
            exact(c.mean.occ),
            exact(c.std.occ),
            analytic.join(","),
            status
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::FlowRecord;
    use crate::model::{parse_model, Axis};
    use crate::sweep::{run_sweep, SweepSpec};

    fn two_flows(algorithms: Vec<AlgorithmKind>) -> SweepResult {
        let model = parse_model(include_str!("../../../../models/toy_twopoint.json")).unwrap();
        let spec = SweepSpec {
            algorithms,
            thresholds: vec![0.0, 1.0, 4.0],
            probabilities: vec![1.0],
            seeds: vec![1],
            flows: Some(vec![FlowRecord::new(1, 100), FlowRecord::new(10, 1000)]),
            analytic: false,
            ..SweepSpec::new(model, Axis::Length)
        };
        run_sweep(&spec).unwrap()
    }

    #[test]
    fn csv_rows_pad_the_shorter_series() {
        let r = two_flows(AlgorithmKind::ALL.to_vec());
        let csv = emit_table(&r, OutputFormat::Csv);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], TABLE_HEADER);
        assert_eq!(lines[1], "0,100.00,1.00,1.00,100.00,1.00,1.00,1.00,100.00,1.00,1.00");
        assert_eq!(lines[2], "1,90.91,2.00,2.00,81.82,2.00,2.22,,,,");
        assert_eq!(lines.len(), 4);
        assert!(lines.iter().all(|l| l.split(',').count() == 11));
    }

    #[test]
    fn absent_algorithms_leave_blank_columns() {
        let r = two_flows(vec![AlgorithmKind::Sampling]);
        let csv = emit_table(&r, OutputFormat::Csv);
        assert_eq!(csv.lines().nth(1).unwrap(), ",,,,,,,1.00,100.00,1.00,1.00");
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn markdown_has_one_row_per_parameter() {
        let r = two_flows(AlgorithmKind::ALL.to_vec());
        let md = emit_table(&r, OutputFormat::Markdown);
        let rows: Vec<_> = md.lines().filter(|l| l.starts_with('|')).collect();
        assert_eq!(rows.len(), 2 + 3);
        assert!(rows[0].contains("Threshold (packets)"));
        assert!(rows.iter().all(|l| l.matches('|').count() == 12));
    }

    #[test]
    fn plot_and_stats_have_one_line_per_cell() {
        let r = two_flows(AlgorithmKind::ALL.to_vec());
        let plot = emit_table(&r, OutputFormat::Plot);
        assert_eq!(plot.lines().count(), 1 + r.cells.len());
        assert!(plot.contains("threshold,4,"));
        let stats = emit_table(&r, OutputFormat::Stats);
        assert_eq!(stats.lines().next().unwrap(), STATS_HEADER);
        let cols = STATS_HEADER.split(',').count();
        assert!(stats.lines().all(|l| l.split(',').count() == cols));
    }
}
