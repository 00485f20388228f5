//! CSV input: `parent_income,child_income[,group]` with a header row.

use std::path::Path;

use urmc::{Error, Result, Sample};

const PARENT: &str = "parent_income";
const CHILD: &str = "child_income";
const GROUP: &str = "group";

pub fn read_sample(path: &Path) -> Result<Sample> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    parse_sample(file)
}

pub fn parse_sample<R: std::io::Read>(reader: R) -> Result<Sample> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Input(format!("line 1: {e}")))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let parent_col = find(PARENT).ok_or_else(|| Error::Input(format!("line 1: header lacks column '{PARENT}'")))?;
    let child_col = find(CHILD).ok_or_else(|| Error::Input(format!("line 1: header lacks column '{CHILD}'")))?;
    let group_col = find(GROUP);

    let mut parent = Vec::new();
    let mut child = Vec::new();
    let mut groups = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Input(format!("line {line}: {e}"))
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let number = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Input(format!("line {line}, column {name}: '{raw}' is not a finite number"))),
            }
        };
        parent.push(number(parent_col, PARENT)?);
        child.push(number(child_col, CHILD)?);
        if let Some(col) = group_col {
            let label = record.get(col).unwrap_or("");
            if label.is_empty() {
                return Err(Error::Input(format!("line {line}, column {GROUP}: missing group label")));
            }
            groups.push(label.to_string());
        }
    }
    if parent.is_empty() {
        return Err(Error::Input("no data rows".into()));
    }
    match group_col {
        Some(_) => Sample::with_groups(parent, child, &groups),
        None => Sample::new(parent, child),
    }
}
