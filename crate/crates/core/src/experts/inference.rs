//! Batch inference file: `<query_text> TAB <cat>:<score>[,<cat>:<score>]*`
//! with six-decimal scores. A query with no predicted category has nothing
//! after the TAB.

use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::LabelSpace;
use crate::error::{Error, Result};
use crate::student::Prediction;

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceLine {
    pub text: String,
    pub predictions: Vec<(usize, f64)>,
}

pub fn write_inference<S: AsRef<str>>(
    texts: &[S],
    predictions: &[Vec<Prediction>],
    label_space: &LabelSpace,
) -> Result<String> {
    if texts.len() != predictions.len() {
        return Err(Error::invalid("texts and predictions differ in length"));
    }
    let mut out = String::new();
    for (text, preds) in texts.iter().zip(predictions) {
        crate::corpus::check_text_for_line(text.as_ref())?;
        out.push_str(text.as_ref());
        out.push('\t');
        for (i, p) in preds.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}:{:.6}", label_space.name(p.label), p.score);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_inference(src: &str, label_space: &LabelSpace) -> Result<Vec<InferenceLine>> {
    let mut lines = Vec::new();
    for (i, line) in src.lines().enumerate() {
        let line_no = i + 1;
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let (text, rest) = line
            .split_once('\t')
            .ok_or_else(|| err("expected `<query> TAB <cat>:<score>,...`".to_string()))?;
        let mut predictions = Vec::new();
        if !rest.is_empty() {
            for item in rest.split(',') {
                let (cat, score) = item
                    .split_once(':')
                    .ok_or_else(|| err(format!("malformed pair {item:?}")))?;
                let j = label_space.index_of(cat).ok_or_else(|| Error::UnknownCategory {
                    line: line_no,
                    category: cat.to_string(),
                })?;
                let s: f64 = score
                    .parse()
                    .map_err(|_| err(format!("invalid score {score:?}")))?;
                if !(0.0..=1.0).contains(&s) {
                    return Err(err(format!("score {s} outside [0, 1]")));
                }
                predictions.push((j, s));
            }
        }
        lines.push(InferenceLine {
            text: text.to_string(),
            predictions,
        });
    }
    Ok(lines)
}

pub fn save_inference<S: AsRef<str>>(
    path: &Path,
    texts: &[S],
    predictions: &[Vec<Prediction>],
    label_space: &LabelSpace,
) -> Result<()> {
    let text = write_inference(texts, predictions, label_space)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_inference(path: &Path, label_space: &LabelSpace) -> Result<Vec<InferenceLine>> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_inference(&src, label_space)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_and_parse() {
        let ls = LabelSpace::new(vec!["a".into(), "b".into()]).unwrap();
        let preds = vec![
            vec![
                Prediction { label: 1, score: 0.875 },
                Prediction { label: 0, score: 0.5 },
            ],
            vec![],
        ];
        let text = write_inference(&["red dress", "nothing"], &preds, &ls).unwrap();
        assert_eq!(text, "red dress\tb:0.875000,a:0.500000\nnothing\t\n");
        let parsed = parse_inference(&text, &ls).unwrap();
        assert_eq!(parsed[0].predictions, vec![(1, 0.875), (0, 0.5)]);
        assert!(parsed[1].predictions.is_empty());
        assert!(parse_inference("q\tz:0.5\n", &ls).is_err());
        assert!(parse_inference("q\ta:1.5\n", &ls).is_err());
    }
}
