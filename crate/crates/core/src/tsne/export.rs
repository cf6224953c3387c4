use super::{TsneError, TsneLayout};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutFormat {
    Csv,
    Json,
}

impl LayoutFormat {
    /// Guesses from the file extension; anything but `.json` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => LayoutFormat::Json,
            _ => LayoutFormat::Csv,
        }
    }
}

/// One exported point; also the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutRow {
    pub x: f64,
    pub y: f64,
    pub label: String,
    pub item_id: String,
}

impl TsneLayout {
    pub fn rows(&self) -> Vec<LayoutRow> {
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| LayoutRow {
                x: p[0],
                y: p[1],
                label: self.labels.get(i).cloned().unwrap_or_default(),
                item_id: self.item_ids.get(i).cloned().unwrap_or_default(),
            })
            .collect()
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> TsneError {
    TsneError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes `x,y,label,item_id` CSV (with header) or a JSON array of the same
/// fields. Coordinates keep full precision.
pub fn export_layout(layout: &TsneLayout, path: impl AsRef<Path>, format: LayoutFormat) -> Result<(), TsneError> {
    let path = path.as_ref();
    let rows = layout.rows();
    match format {
        LayoutFormat::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
            if rows.is_empty() {
                w.write_record(["x", "y", "label", "item_id"]).map_err(|e| io_err(path, e))?;
            }
            for r in &rows {
                w.serialize(r).map_err(|e| io_err(path, e))?;
            }
            w.flush().map_err(|e| io_err(path, e))
        }
        LayoutFormat::Json => {
            let text = serde_json::to_string_pretty(&rows).map_err(|e| io_err(path, e))?;
            std::fs::write(path, text).map_err(|e| io_err(path, e))
        }
    }
}

pub fn read_layout(path: impl AsRef<Path>, format: LayoutFormat) -> Result<Vec<LayoutRow>, TsneError> {
    let path = path.as_ref();
    match format {
        LayoutFormat::Csv => {
            let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
            r.deserialize()
                .collect::<Result<Vec<LayoutRow>, _>>()
                .map_err(|e| io_err(path, e))
        }
        LayoutFormat::Json => {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            serde_json::from_str(&text).map_err(|e| io_err(path, e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(n: usize) -> TsneLayout {
        TsneLayout {
            points: (0..n).map(|i| [i as f64 * 0.1234567891, -(i as f64) / 3.0]).collect(),
            labels: vec![String::new(); n],
            item_ids: (0..n).map(|i| format!("q{i}")).collect(),
            kl_trace: vec![],
            perplexity: 30.0,
        }
    }

    #[test]
    fn csv_round_trip_with_empty_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("layout.csv");
        let l = layout(130);
        export_layout(&l, &path, LayoutFormat::Csv).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next(), Some("x,y,label,item_id"));
        assert_eq!(text.lines().count(), 131);
        let back = read_layout(&path, LayoutFormat::Csv).unwrap();
        for (a, b) in back.iter().zip(l.rows()) {
            assert!((a.x - b.x).abs() < 1e-6 && (a.y - b.y).abs() < 1e-6);
            assert_eq!(a.label, "");
            assert_eq!(a.item_id, b.item_id);
        }
    }

    #[test]
    fn json_round_trip_with_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("layout.json");
        let mut l = layout(50);
        l = l.with_labels((0..50).map(|i| if i < 20 { "zh" } else { "en" }));
        export_layout(&l, &path, LayoutFormat::from_path(&path)).unwrap();
        let back = read_layout(&path, LayoutFormat::Json).unwrap();
        assert_eq!(back, l.rows());
    }

    #[test]
    fn empty_layout_still_has_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        export_layout(&layout(0), &path, LayoutFormat::Csv).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().trim(), "x,y,label,item_id");
    }

    #[test]
    fn unwritable_path_is_io_error() {
        assert!(matches!(
            export_layout(&layout(1), "/nonexistent/dir/x.csv", LayoutFormat::Csv),
            Err(TsneError::Io { .. })
        ));
    }
}
