use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{ClickDataset, LabelSpace, QueryRecord};
use crate::error::{Error, Result};

/// One parsed `<text> TAB <cat>:<pv>,...` line with raw category names.
pub(crate) struct RawLine<'a, T> {
    pub text: &'a str,
    pub pairs: Vec<(&'a str, T)>,
}

/// Yields `(line_number, content)` for non-comment, non-blank lines.
pub(crate) fn data_lines(src: &str) -> impl Iterator<Item = (usize, &str)> {
    src.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty())
}

pub(crate) fn parse_line<'a, T>(
    line_no: usize,
    line: &'a str,
    parse_pv: impl Fn(&str) -> std::result::Result<T, String>,
) -> Result<RawLine<'a, T>> {
    let err = |msg: String| Error::Parse { line: line_no, msg };
    let (text, rest) = line
        .split_once('\t')
        .ok_or_else(|| err("expected `<query> TAB <cat>:<pv>[,...]`".to_string()))?;
    if rest.contains('\t') {
        return Err(err("unexpected extra TAB".to_string()));
    }
    let mut pairs = Vec::new();
    for item in rest.split(',') {
        let (cat, pv) = item
            .split_once(':')
            .ok_or_else(|| err(format!("malformed pair {item:?}")))?;
        if cat.is_empty() {
            return Err(err("empty category identifier".to_string()));
        }
        if pairs.iter().any(|(c, _)| *c == cat) {
            return Err(err(format!("duplicate category `{cat}`")));
        }
        pairs.push((cat, parse_pv(pv.trim()).map_err(err)?));
    }
    Ok(RawLine { text, pairs })
}

fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if s.starts_with('-') {
        return Err(format!("negative PV {s}"));
    }
    s.parse::<u64>().map_err(|_| format!("invalid PV {s:?}"))
}

/// Resolves category names against a fixed label space, or grows one in
/// first-appearance order.
pub(crate) struct LabelResolver {
    fixed: bool,
    names: Vec<String>,
    index: std::collections::HashMap<String, usize>,
}

impl LabelResolver {
    pub fn new(fixed: Option<&LabelSpace>) -> Self {
        match fixed {
            Some(ls) => Self {
                fixed: true,
                names: ls.categories().to_vec(),
                index: ls
                    .categories()
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (c.clone(), i))
                    .collect(),
            },
            None => Self {
                fixed: false,
                names: Vec::new(),
                index: Default::default(),
            },
        }
    }

    pub fn resolve(&mut self, line: usize, cat: &str) -> Result<usize> {
        if let Some(&j) = self.index.get(cat) {
            return Ok(j);
        }
        if self.fixed {
            return Err(Error::UnknownCategory {
                line,
                category: cat.to_string(),
            });
        }
        let j = self.names.len();
        self.names.push(cat.to_string());
        self.index.insert(cat.to_string(), j);
        Ok(j)
    }

    pub fn finish(self) -> Result<LabelSpace> {
        LabelSpace::new(self.names)
    }
}

/// Parses dataset text; query ids are record positions.
pub fn parse_dataset(src: &str, label_space: Option<&LabelSpace>) -> Result<ClickDataset> {
    let mut resolver = LabelResolver::new(label_space);
    let mut records = Vec::new();
    for (line_no, line) in data_lines(src) {
        let raw = parse_line(line_no, line, parse_count)?;
        let mut pv = BTreeMap::new();
        for (cat, v) in raw.pairs {
            pv.insert(resolver.resolve(line_no, cat)?, v);
        }
        records.push(QueryRecord::new(records.len() as u64, raw.text, pv));
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    ClickDataset::new(resolver.finish()?, records)
}

pub fn load_dataset(path: &Path, label_space: Option<&LabelSpace>) -> Result<ClickDataset> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&src, label_space)
}

pub(crate) fn check_text_for_line(text: &str) -> Result<()> {
    if text.contains(['\t', '\n', '\r']) || text.starts_with('#') {
        return Err(Error::invalid(format!(
            "query text {text:?} cannot be stored in the line format"
        )));
    }
    Ok(())
}

pub fn write_dataset(ds: &ClickDataset) -> Result<String> {
    let ls = ds.label_space();
    let mut out = String::new();
    for r in ds.records() {
        check_text_for_line(&r.text)?;
        if r.pv.is_empty() {
            return Err(Error::invalid(format!("record {} has no labels", r.query_id)));
        }
        out.push_str(&r.text);
        out.push('\t');
        for (i, (&j, &v)) in r.pv.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}:{}", ls.name(j), v);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn save_dataset(ds: &ClickDataset, path: &Path) -> Result<()> {
    let text = write_dataset(ds)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_label_space(path: &Path) -> Result<LabelSpace> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cats = src
        .lines()
        .map(str::trim_end)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    LabelSpace::new(cats)
}

pub fn save_label_space(ls: &LabelSpace, path: &Path) -> Result<()> {
    let mut out = ls.categories().join("\n");
    out.push('\n');
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_line() {
        let ds = parse_dataset("red dress\t12:40,37:3\n", None).unwrap();
        let r = &ds.records()[0];
        assert_eq!(r.text, "red dress");
        let ls = ds.label_space();
        let got: Vec<(&str, u64)> = r.pv.iter().map(|(&j, &v)| (ls.name(j), v)).collect();
        assert_eq!(got, vec![("12", 40), ("37", 3)]);
    }

    #[test]
    fn zero_pv_pair_is_kept() {
        let ds = parse_dataset("iphone 13\t5:0", None).unwrap();
        let r = &ds.records()[0];
        assert_eq!(r.pv.len(), 1);
        assert_eq!(r.total_pv(), 0);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse_dataset("", None), Err(Error::EmptyDataset)));
        assert!(matches!(
            parse_dataset("# only a comment\n", None),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let src = "# header\nok\ta:1\nbroken line\n";
        match parse_dataset(src, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            parse_dataset("q\ta:-3", None),
            Err(Error::Parse { line: 1, ref msg }) if msg.contains("negative")
        ));
        assert!(parse_dataset("q\ta:1,a:2", None).is_err());
        assert!(parse_dataset("q\ta", None).is_err());
        assert!(parse_dataset("q\ta:1.5", None).is_err());
    }

    #[test]
    fn fixed_label_space_rejects_unknown() {
        let ls = LabelSpace::new(vec!["a".into(), "b".into()]).unwrap();
        let ds = parse_dataset("x\tb:2,a:1", Some(&ls)).unwrap();
        assert_eq!(ds.records()[0].pv, BTreeMap::from([(0, 1), (1, 2)]));
        assert!(matches!(
            parse_dataset("x\tb:2\ny\tz:1", Some(&ls)),
            Err(Error::UnknownCategory { line: 2, .. })
        ));
    }

    #[test]
    fn single_record_round_trip() {
        let ds = parse_dataset("q\tonly:7", None).unwrap();
        let text = write_dataset(&ds).unwrap();
        assert_eq!(text, "q\tonly:7\n");
        assert_eq!(parse_dataset(&text, None).unwrap(), ds);
    }
}
