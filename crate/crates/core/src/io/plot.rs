//! Columnar series for redrawing the comparison figures elsewhere.
//!
//! Output is long-form CSV: a `series` column naming the trace (and arm),
//! followed by the numeric columns of the chosen kind.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::SimTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    /// Tool position and contact force magnitude against time.
    ForceProfile,
    /// End-effector path of every arm.
    Path3d,
}

impl PlotKind {
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            PlotKind::ForceProfile => &["t", "x", "y", "z", "force"],
            PlotKind::Path3d => &["t", "x", "y", "z"],
        }
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "force-profile" => Ok(PlotKind::ForceProfile),
            "path3d" => Ok(PlotKind::Path3d),
            other => Err(Error::UnknownPlotKind(other.to_string())),
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlotKind::ForceProfile => "force-profile",
            PlotKind::Path3d => "path3d",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub name: String,
    /// One entry per row, laid out as `kind.columns()`.
    pub rows: Vec<Vec<f64>>,
}

impl PlotSeries {
    pub fn column(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub kind: PlotKind,
    pub series: Vec<PlotSeries>,
}

pub fn export_plotdata(traces: &[SimTrace], kind: PlotKind) -> Result<PlotData> {
    if traces.is_empty() {
        return Err(Error::TraceFormat("no traces to export".into()));
    }
    let mut series = Vec::new();
    for tr in traces {
        if tr.is_empty() {
            return Err(Error::TraceFormat(format!("trace '{}' is empty", tr.label)));
        }
        match kind {
            PlotKind::ForceProfile => {
                let rows = tr
                    .rows
                    .iter()
                    .map(|r| {
                        let a = &r.arms[0];
                        let f =
                            (a.contact[0].powi(2) + a.contact[1].powi(2) + a.contact[2].powi(2))
                                .sqrt();
                        vec![r.t, a.x[0], a.x[1], a.x[2], f]
                    })
                    .collect();
                series.push(PlotSeries {
                    name: tr.label.clone(),
                    rows,
                });
            }
            PlotKind::Path3d => {
                for arm in 0..tr.arm_dofs.len() {
                    let rows = tr
                        .rows
                        .iter()
                        .map(|r| {
                            let x = &r.arms[arm].x;
                            vec![r.t, x[0], x[1], x[2]]
                        })
                        .collect();
                    series.push(PlotSeries {
                        name: format!("{}/arm{arm}", tr.label),
                        rows,
                    });
                }
            }
        }
    }
    Ok(PlotData { kind, series })
}

pub fn write_plotdata(data: &PlotData, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["series"];
    header.extend_from_slice(data.kind.columns());
    w.write_record(&header)?;
    for s in &data.series {
        for row in &s.rows {
            let mut rec = vec![s.name.clone()];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse_and_print() {
        for k in [PlotKind::ForceProfile, PlotKind::Path3d] {
            assert_eq!(k.to_string().parse::<PlotKind>().unwrap(), k);
        }
        assert!(matches!(
            "histogram".parse::<PlotKind>(),
            Err(Error::UnknownPlotKind(_))
        ));
    }

    #[test]
    fn empty_trace_is_an_error() {
        let tr = SimTrace::new("empty", 1e-3, vec![3], &[]);
        assert!(export_plotdata(&[tr], PlotKind::Path3d).is_err());
        assert!(export_plotdata(&[], PlotKind::ForceProfile).is_err());
    }
}
