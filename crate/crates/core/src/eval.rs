//! Accuracy, prediction diagrams over parameter grids, qualitative
//! verdicts and the cross-system summary table.

use std::fmt::{self, Write as _};
use std::path::Path;

use thiserror::Error;

use crate::datagen::{ClassLabel, Dataset};
use crate::nn::{predict, NetworkParams, NnError};
use crate::preprocess::PipelineKind;
use crate::systems::{reference_fold, SystemError, SystemKind, SystemParams};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {preds} predictions for {truth} labels")]
    LengthMismatch { preds: usize, truth: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("no test trajectories of class {0}")]
    MissingClass(ClassLabel),
    #[error("summary table is incomplete: {0}")]
    Incomplete(String),
    #[error("dataset holds {found} samples, expected {expected}")]
    WrongSystem {
        expected: SystemKind,
        found: SystemKind,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn accuracy(preds: &[ClassLabel], truth: &[ClassLabel]) -> Result<f64, EvalError> {
    if preds.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            truth: truth.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = preds.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / preds.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagramRecord {
    pub param: f64,
    pub truth: ClassLabel,
    pub pred: ClassLabel,
    pub probs: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDiagram {
    pub system: SystemKind,
    pub coord_pair: usize,
    pub records: Vec<DiagramRecord>,
    pub fold_value: f64,
}

/// `[true][predicted]` counts.
pub type Confusion = [[usize; 3]; 3];

impl PredictionDiagram {
    pub fn confusion(&self) -> Confusion {
        let mut c = [[0; 3]; 3];
        for r in &self.records {
            c[r.truth.index()][r.pred.index()] += 1;
        }
        c
    }

    pub fn accuracy(&self) -> Result<f64, EvalError> {
        let preds: Vec<_> = self.records.iter().map(|r| r.pred).collect();
        let truth: Vec<_> = self.records.iter().map(|r| r.truth).collect();
        accuracy(&preds, &truth)
    }
}

/// Classifies every sample of a test grid for `system`.
pub fn build_diagram(
    params: &NetworkParams<f32>,
    system: &SystemParams,
    test_ds: &Dataset,
) -> Result<PredictionDiagram, EvalError> {
    if test_ds.is_empty() {
        return Err(EvalError::Empty);
    }
    let kind = system.kind();
    let fold_value = reference_fold(system)?;
    let mut records = Vec::with_capacity(test_ds.len());
    for s in &test_ds.samples {
        if s.system != kind {
            return Err(EvalError::WrongSystem {
                expected: kind,
                found: s.system,
            });
        }
        let (pred, p) = predict(params, &s.channel)?;
        records.push(DiagramRecord {
            param: s.param,
            truth: s.label,
            pred,
            probs: [p[0], p[1], p[2]],
        });
    }
    Ok(PredictionDiagram {
        system: kind,
        coord_pair: test_ds.pipeline.coord_pair,
        records,
        fold_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Verdict {
    Good,
    Inaccurate,
    NoClose,
    Wrong,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Good => "good",
            Verdict::Inaccurate => "inaccurate",
            Verdict::NoClose => "no close",
            Verdict::Wrong => "wrong",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerdictThresholds {
    /// Largest tolerated share of far runs called after, or after runs called far.
    pub max_cross_error: f64,
    pub min_close_recall: f64,
    pub min_accuracy: f64,
}

impl Default for VerdictThresholds {
    fn default() -> Self {
        Self {
            max_cross_error: 0.2,
            min_close_recall: 0.1,
            min_accuracy: 0.9,
        }
    }
}

/// Verdict from a `[true][predicted]` confusion matrix.
pub fn verdict_from_confusion(c: &Confusion, th: &VerdictThresholds) -> Result<Verdict, EvalError> {
    let support: Vec<usize> = c.iter().map(|row| row.iter().sum()).collect();
    for l in ClassLabel::ALL {
        if support[l.index()] == 0 {
            return Err(EvalError::MissingClass(l));
        }
    }
    let (far, close, after) = (
        ClassLabel::Far.index(),
        ClassLabel::Close.index(),
        ClassLabel::After.index(),
    );
    let far_as_after = c[far][after] as f64 / support[far] as f64;
    let after_as_far = c[after][far] as f64 / support[after] as f64;
    if far_as_after.max(after_as_far) > th.max_cross_error {
        return Ok(Verdict::Wrong);
    }
    if (c[close][close] as f64 / support[close] as f64) < th.min_close_recall {
        return Ok(Verdict::NoClose);
    }
    let total: usize = support.iter().sum();
    let hits: usize = (0..3).map(|i| c[i][i]).sum();
    if (hits as f64 / total as f64) < th.min_accuracy {
        return Ok(Verdict::Inaccurate);
    }
    Ok(Verdict::Good)
}

pub fn classify_verdict(
    diagram: &PredictionDiagram,
    th: &VerdictThresholds,
) -> Result<Verdict, EvalError> {
    verdict_from_confusion(&diagram.confusion(), th)
}

/// Verdict of a system judged on several coordinates: the worst one.
pub fn combined_verdict(
    diagrams: &[PredictionDiagram],
    th: &VerdictThresholds,
) -> Result<Verdict, EvalError> {
    let mut worst = None;
    for d in diagrams {
        let v = classify_verdict(d, th)?;
        worst = Some(worst.map_or(v, |w: Verdict| w.max(v)));
    }
    worst.ok_or(EvalError::Empty)
}

/// Systems in summary-table column order.
pub const EXTRAPOLATION_SYSTEMS: [SystemKind; 3] = [
    SystemKind::MassOnBelt,
    SystemKind::VdpDuffing,
    SystemKind::PitchPlunge,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellResult {
    /// Accuracy on the nonlinear-damping extrapolation grid.
    Accuracy(f64),
    Verdict(Verdict),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableCell {
    pub pipeline: PipelineKind,
    pub system: SystemKind,
    pub result: CellResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub pipeline: PipelineKind,
    pub nld_accuracy: f64,
    pub verdicts: [Verdict; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

/// Assembles one row per pipeline from the evaluated cells. Every pipeline
/// needs an accuracy for the nonlinear-damping grid and a verdict for each
/// extrapolation system.
pub fn summary_table(cells: &[TableCell]) -> Result<SummaryTable, EvalError> {
    let mut rows = Vec::new();
    for pipeline in PipelineKind::ALL {
        let find = |system: SystemKind| {
            cells
                .iter()
                .rev()
                .find(|c| c.pipeline == pipeline && c.system == system)
                .map(|c| c.result)
        };
        let missing =
            |system: SystemKind| EvalError::Incomplete(format!("{} on {system}", pipeline.label()));
        let nld_accuracy = match find(SystemKind::NonlinearDamping) {
            Some(CellResult::Accuracy(a)) => a,
            _ => return Err(missing(SystemKind::NonlinearDamping)),
        };
        let mut verdicts = [Verdict::Good; 3];
        for (v, system) in verdicts.iter_mut().zip(EXTRAPOLATION_SYSTEMS) {
            *v = match find(system) {
                Some(CellResult::Verdict(x)) => x,
                _ => return Err(missing(system)),
            };
        }
        rows.push(SummaryRow {
            pipeline,
            nld_accuracy,
            verdicts,
        });
    }
    Ok(SummaryTable { rows })
}

const TABLE_HEADER: [&str; 5] = [
    "Normalization",
    "Nonlinear damping (c1=0.1)",
    "Mass on moving belt",
    "Van der Pol-Duffing",
    "Pitch and plunge",
];

impl SummaryTable {
    fn cells(&self) -> Vec<[String; 5]> {
        self.rows
            .iter()
            .map(|r| {
                [
                    r.pipeline.label().to_string(),
                    format!("{:.1}%", 100.0 * r.nld_accuracy),
                    r.verdicts[0].to_string(),
                    r.verdicts[1].to_string(),
                    r.verdicts[2].to_string(),
                ]
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("normalization,nld_accuracy,mass_on_belt,vdp_duffing,pitch_plunge\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.4},{},{},{}",
                r.pipeline.label(),
                r.nld_accuracy,
                r.verdicts[0],
                r.verdicts[1],
                r.verdicts[2]
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let body = self.cells();
        let mut width = TABLE_HEADER.map(str::len);
        for row in &body {
            for (w, cell) in width.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, (c, w)) in cells.iter().zip(width).enumerate() {
                if i > 0 {
                    s.push_str(" | ");
                }
                let _ = write!(s, "{c:<w$}");
            }
            s.trim_end().to_string() + "\n"
        };
        let header: Vec<String> = TABLE_HEADER.iter().map(|s| s.to_string()).collect();
        let mut out = line(&header);
        let rule: Vec<String> = width.iter().map(|&w| "-".repeat(w)).collect();
        out.push_str(&line(&rule).replace(" | ", "-+-"));
        for row in &body {
            out.push_str(&line(row));
        }
        out
    }
}

/// Diagram as CSV: parameter, true_label, pred_label, p_far, p_close, p_after.
pub fn write_diagram_csv(diagram: &PredictionDiagram, path: &Path) -> Result<(), EvalError> {
    let mut out = String::from("parameter,true_label,pred_label,p_far,p_close,p_after\n");
    for r in &diagram.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.param, r.truth, r.pred, r.probs[0], r.probs[1], r.probs[2]
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub const SVG_WIDTH: f64 = 640.0;
pub const SVG_HEIGHT: f64 = 240.0;
pub const SVG_MARGIN: f64 = 48.0;

fn class_color(label: ClassLabel) -> &'static str {
    match label {
        ClassLabel::Far => "#2ca02c",
        ClassLabel::Close => "#d62728",
        ClassLabel::After => "#1f77b4",
    }
}

/// Parameter range drawn on the horizontal axis: the records and the fold.
pub fn svg_axis_range(diagram: &PredictionDiagram) -> (f64, f64) {
    let (mut lo, mut hi) = (diagram.fold_value, diagram.fold_value);
    for r in &diagram.records {
        lo = lo.min(r.param);
        hi = hi.max(r.param);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Horizontal pixel position of a parameter value.
pub fn svg_x(param: f64, range: (f64, f64)) -> f64 {
    SVG_MARGIN + (param - range.0) / (range.1 - range.0) * (SVG_WIDTH - 2.0 * SVG_MARGIN)
}

/// Scatter of predicted class against the parameter, one marker per record,
/// with a dashed vertical line at the fold.
pub fn emit_scatter_svg(diagram: &PredictionDiagram, path: &Path) -> Result<(), EvalError> {
    std::fs::write(path, render_scatter_svg(diagram)?)?;
    Ok(())
}

pub fn render_scatter_svg(diagram: &PredictionDiagram) -> Result<String, EvalError> {
    if diagram.records.is_empty() {
        return Err(EvalError::Empty);
    }
    let range = svg_axis_range(diagram);
    let plot_h = SVG_HEIGHT - 2.0 * SVG_MARGIN;
    let row_y = |l: ClassLabel| SVG_MARGIN + plot_h * (2 - l.index()) as f64 / 2.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for l in ClassLabel::ALL {
        let _ = writeln!(
            s,
            r#"<text x="4" y="{:.2}" font-size="11" font-family="sans-serif">{}</text>"#,
            row_y(l) + 4.0,
            l
        );
    }
    let names = diagram.system.coord_names();
    let coord = names.get(diagram.coord_pair).copied().unwrap_or("?");
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" font-family="sans-serif" text-anchor="middle">{} ({}), coordinate {}</text>"#,
        SVG_WIDTH / 2.0,
        SVG_HEIGHT - 10.0,
        diagram.system.param_name(),
        diagram.system,
        coord
    );
    for (v, anchor) in [(range.0, "start"), (range.1, "end")] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" font-family="sans-serif" text-anchor="{anchor}">{v:.4}</text>"#,
            svg_x(v, range),
            SVG_HEIGHT - SVG_MARGIN + 18.0
        );
    }
    let fx = svg_x(diagram.fold_value, range);
    let _ = writeln!(
        s,
        r#"<line class="fold" x1="{fx:.2}" y1="{:.2}" x2="{fx:.2}" y2="{:.2}" stroke="black" stroke-dasharray="4 3"/>"#,
        SVG_MARGIN - 12.0,
        SVG_HEIGHT - SVG_MARGIN + 8.0
    );
    for r in &diagram.records {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" fill-opacity="0.6"/>"#,
            svg_x(r.param, range),
            row_y(r.pred),
            class_color(r.pred)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
