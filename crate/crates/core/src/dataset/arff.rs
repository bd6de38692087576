//! ARFF data plus Mulan XML label header.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{FeatureKind, MultiLabelDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum AttrType {
    Numeric,
    Nominal(Vec<String>),
}

#[derive(Debug, Clone)]
struct Attribute {
    name: String,
    kind: AttrType,
}

fn malformed(line: usize, message: impl Into<String>) -> Error {
    Error::MalformedArff {
        line,
        message: message.into(),
    }
}

/// Reads a Mulan dataset: ARFF data and the XML document naming its labels.
///
/// Label columns follow the XML order; all remaining attributes become
/// features in declaration order.
pub fn load_mulan<A: Read, X: Read>(mut arff: A, mut xml: X) -> Result<MultiLabelDataset> {
    let mut arff_text = String::new();
    arff.read_to_string(&mut arff_text)?;
    let mut xml_text = String::new();
    xml.read_to_string(&mut xml_text)?;
    let label_names = parse_label_xml(&xml_text)?;
    parse_arff(&arff_text, &label_names)
}

pub fn load_mulan_files(
    arff: impl AsRef<Path>,
    xml: impl AsRef<Path>,
) -> Result<MultiLabelDataset> {
    let a = std::fs::File::open(arff)?;
    let x = std::fs::File::open(xml)?;
    load_mulan(std::io::BufReader::new(a), std::io::BufReader::new(x))
}

fn parse_label_xml(text: &str) -> Result<Vec<String>> {
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::MalformedXml(e.to_string()))?;
    let mut names = Vec::new();
    for node in doc.descendants().filter(|n| n.is_element()) {
        if node.tag_name().name() != "label" {
            continue;
        }
        let name = node
            .attribute("name")
            .ok_or_else(|| Error::MalformedXml("<label> element without a name".into()))?;
        if names.iter().any(|n| n == name) {
            return Err(Error::MalformedXml(format!("label `{name}` listed twice")));
        }
        names.push(name.to_string());
    }
    if names.is_empty() {
        return Err(Error::MalformedXml("no <label> elements found".into()));
    }
    Ok(names)
}

/// Splits on `sep` outside single or double quotes.
fn split_top_level(s: &str, sep: char) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut quote: Option<char> = None;
    let mut escaped = false;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match (quote, ch) {
            (Some(_), '\\') => escaped = true,
            (Some(q), c) if c == q => quote = None,
            (None, '\'' | '"') => quote = Some(ch),
            (None, c) if c == sep => {
                parts.push(&s[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

fn unquote(s: &str) -> String {
    let s = s.trim();
    let bytes = s.as_bytes();
    if s.len() >= 2 && (bytes[0] == b'\'' || bytes[0] == b'"') && bytes[s.len() - 1] == bytes[0] {
        let inner = &s[1..s.len() - 1];
        let mut out = String::with_capacity(inner.len());
        let mut chars = inner.chars();
        while let Some(c) = chars.next() {
            if c == '\\' {
                if let Some(next) = chars.next() {
                    out.push(next);
                }
            } else {
                out.push(c);
            }
        }
        out
    } else {
        s.to_string()
    }
}

/// Splits the leading attribute name (possibly quoted) from the remainder.
fn take_name(s: &str, line: usize) -> Result<(String, &str)> {
    let s = s.trim_start();
    let first = s
        .chars()
        .next()
        .ok_or_else(|| malformed(line, "attribute without a name"))?;
    if first == '\'' || first == '"' {
        let mut escaped = false;
        for (i, ch) in s.char_indices().skip(1) {
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == first {
                return Ok((unquote(&s[..=i]), &s[i + 1..]));
            }
        }
        Err(malformed(line, "unterminated quoted attribute name"))
    } else {
        let end = s.find(char::is_whitespace).unwrap_or(s.len());
        Ok((s[..end].to_string(), &s[end..]))
    }
}

fn parse_attribute(rest: &str, line: usize) -> Result<Attribute> {
    let (name, rest) = take_name(rest, line)?;
    let ty = rest.trim();
    if let Some(body) = ty.strip_prefix('{') {
        let body = body
            .strip_suffix('}')
            .ok_or_else(|| malformed(line, format!("unterminated nominal type for `{name}`")))?;
        let categories: Vec<String> = split_top_level(body, ',')
            .into_iter()
            .map(unquote)
            .collect();
        if categories.iter().any(|c| c.is_empty()) {
            return Err(malformed(line, format!("empty category in `{name}`")));
        }
        return Ok(Attribute {
            name,
            kind: AttrType::Nominal(categories),
        });
    }
    match ty.to_ascii_lowercase().as_str() {
        "numeric" | "real" | "integer" => Ok(Attribute {
            name,
            kind: AttrType::Numeric,
        }),
        other => Err(malformed(
            line,
            format!("unsupported attribute type `{other}` for `{name}`"),
        )),
    }
}

/// Where an ARFF attribute lands in the dataset.
#[derive(Clone, Copy)]
enum Slot {
    Feature(usize),
    Label(usize),
}

struct Layout<'a> {
    attrs: &'a [Attribute],
    slots: Vec<Slot>,
    label_names: &'a [String],
    category_index: Vec<HashMap<String, usize>>,
}

impl Layout<'_> {
    fn decode(&self, attr: usize, raw: &str, line: usize) -> Result<f64> {
        let raw = raw.trim();
        if raw == "?" {
            return Err(malformed(line, "missing values ('?') are not supported"));
        }
        match &self.attrs[attr].kind {
            AttrType::Numeric => raw
                .parse::<f64>()
                .map_err(|_| malformed(line, format!("`{raw}` is not a number"))),
            AttrType::Nominal(_) => {
                let v = unquote(raw);
                let name = &self.attrs[attr].name;
                match (self.category_index[attr].get(&v), self.slots[attr]) {
                    (Some(&i), _) => Ok(i as f64),
                    (None, Slot::Label(_)) => Err(Error::NonBinaryLabel {
                        label: name.clone(),
                        value: v,
                        line,
                    }),
                    (None, Slot::Feature(_)) => Err(malformed(
                        line,
                        format!("`{v}` is not a category of `{name}`"),
                    )),
                }
            }
        }
    }

    /// Maps a decoded attribute value to a label bit.
    fn label_bit(&self, attr: usize, code: f64, line: usize) -> Result<u8> {
        let text = match &self.attrs[attr].kind {
            AttrType::Nominal(cats) => cats[code as usize].clone(),
            AttrType::Numeric => code.to_string(),
        };
        match text.as_str() {
            "0" => Ok(0),
            "1" => Ok(1),
            _ => Err(Error::NonBinaryLabel {
                label: self.attrs[attr].name.clone(),
                value: text,
                line,
            }),
        }
    }

    fn store(
        &self,
        attr: usize,
        code: f64,
        line: usize,
        features: &mut [f64],
        labels: &mut [u8],
    ) -> Result<()> {
        match self.slots[attr] {
            Slot::Feature(c) => features[c] = code,
            Slot::Label(c) => labels[c] = self.label_bit(attr, code, line)?,
        }
        Ok(())
    }
}

fn parse_arff(text: &str, label_names: &[String]) -> Result<MultiLabelDataset> {
    let mut relation = String::from("dataset");
    let mut attrs: Vec<Attribute> = Vec::new();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut saw_data = false;

    for (no, raw) in lines.by_ref() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        if lower.starts_with("@relation") {
            relation = unquote(line["@relation".len()..].trim());
        } else if lower.starts_with("@attribute") {
            attrs.push(parse_attribute(&line["@attribute".len()..], no)?);
        } else if lower.starts_with("@data") {
            saw_data = true;
            break;
        } else {
            return Err(malformed(no, format!("unexpected header line `{line}`")));
        }
    }
    if !saw_data {
        return Err(malformed(text.lines().count(), "missing @data section"));
    }

    let by_name: HashMap<&str, usize> = attrs
        .iter()
        .enumerate()
        .map(|(i, a)| (a.name.as_str(), i))
        .collect();
    let mut slots: Vec<Option<Slot>> = vec![None; attrs.len()];
    for (j, name) in label_names.iter().enumerate() {
        let &i = by_name
            .get(name.as_str())
            .ok_or_else(|| Error::MissingLabelAttribute(name.clone()))?;
        slots[i] = Some(Slot::Label(j));
    }
    let mut feature_names = Vec::new();
    let mut feature_kinds = Vec::new();
    for (i, attr) in attrs.iter().enumerate() {
        if slots[i].is_none() {
            slots[i] = Some(Slot::Feature(feature_names.len()));
            feature_names.push(attr.name.clone());
            feature_kinds.push(match &attr.kind {
                AttrType::Numeric => FeatureKind::Numeric,
                AttrType::Nominal(c) => FeatureKind::Nominal(c.clone()),
            });
        }
    }
    let layout = Layout {
        attrs: &attrs,
        slots: slots
            .into_iter()
            .map(|s| s.expect("every attribute assigned"))
            .collect(),
        label_names,
        category_index: attrs
            .iter()
            .map(|a| match &a.kind {
                AttrType::Nominal(c) => c.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect(),
                AttrType::Numeric => HashMap::new(),
            })
            .collect(),
    };

    let d = feature_names.len();
    let q = layout.label_names.len();
    let mut feature_data: Vec<f64> = Vec::new();
    let mut label_data: Vec<u8> = Vec::new();
    let mut n = 0usize;
    let mut row_f = vec![0.0; d];
    let mut row_l = vec![0u8; q];

    for (no, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if let Some(body) = line.strip_prefix('{') {
            let body = body
                .strip_suffix('}')
                .ok_or_else(|| malformed(no, "unterminated sparse row"))?;
            // absent entries take value 0 (first category for nominal attributes)
            row_f.iter_mut().for_each(|v| *v = 0.0);
            for (attr, slot) in layout.slots.iter().enumerate() {
                if let Slot::Label(c) = *slot {
                    row_l[c] = layout.label_bit(attr, 0.0, no)?;
                }
            }
            if !body.trim().is_empty() {
                for entry in split_top_level(body, ',') {
                    let entry = entry.trim();
                    let (idx, value) = entry
                        .split_once(char::is_whitespace)
                        .ok_or_else(|| malformed(no, format!("bad sparse entry `{entry}`")))?;
                    let attr: usize = idx
                        .parse()
                        .map_err(|_| malformed(no, format!("bad sparse index `{idx}`")))?;
                    if attr >= attrs.len() {
                        return Err(malformed(no, format!("sparse index {attr} out of range")));
                    }
                    let code = layout.decode(attr, value, no)?;
                    layout.store(attr, code, no, &mut row_f, &mut row_l)?;
                }
            }
        } else {
            let fields = split_top_level(line, ',');
            if fields.len() != attrs.len() {
                return Err(malformed(
                    no,
                    format!(
                        "row has {} values, header declares {}",
                        fields.len(),
                        attrs.len()
                    ),
                ));
            }
            for (attr, value) in fields.iter().enumerate() {
                let code = layout.decode(attr, value, no)?;
                layout.store(attr, code, no, &mut row_f, &mut row_l)?;
            }
        }
        feature_data.extend_from_slice(&row_f);
        label_data.extend_from_slice(&row_l);
        n += 1;
    }
    if n == 0 {
        return Err(malformed(text.lines().count(), "no data rows"));
    }

    let features =
        Array2::from_shape_vec((n, d), feature_data).map_err(|e| Error::Data(e.to_string()))?;
    let labels =
        Array2::from_shape_vec((n, q), label_data).map_err(|e| Error::Data(e.to_string()))?;
    let mut ds = MultiLabelDataset::new(
        features,
        labels,
        feature_names,
        feature_kinds,
        label_names.to_vec(),
    )?;
    ds.relation = relation;
    Ok(ds)
}

fn quote_if_needed(s: &str) -> String {
    let plain = !s.is_empty()
        && s.chars()
            .all(|c| !c.is_whitespace() && !matches!(c, ',' | '\'' | '"' | '{' | '}' | '%' | '\\'));
    if plain {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
    }
}

/// Writes the dataset as dense ARFF: features first, then labels as `{0,1}` nominals.
pub fn write_arff<W: Write>(ds: &MultiLabelDataset, mut out: W) -> Result<()> {
    writeln!(out, "@relation {}", quote_if_needed(&ds.relation))?;
    writeln!(out)?;
    for (name, kind) in ds.feature_names.iter().zip(&ds.feature_kinds) {
        match kind {
            FeatureKind::Numeric => writeln!(out, "@attribute {} numeric", quote_if_needed(name))?,
            FeatureKind::Nominal(cats) => {
                let cats: Vec<String> = cats.iter().map(|c| quote_if_needed(c)).collect();
                writeln!(
                    out,
                    "@attribute {} {{{}}}",
                    quote_if_needed(name),
                    cats.join(",")
                )?
            }
        }
    }
    for name in &ds.label_names {
        writeln!(out, "@attribute {} {{0,1}}", quote_if_needed(name))?;
    }
    writeln!(out)?;
    writeln!(out, "@data")?;
    for (frow, lrow) in ds.features.rows().into_iter().zip(ds.labels.rows()) {
        let mut fields: Vec<String> = Vec::with_capacity(frow.len() + lrow.len());
        for (v, kind) in frow.iter().zip(&ds.feature_kinds) {
            fields.push(match kind {
                FeatureKind::Numeric => format!("{v}"),
                FeatureKind::Nominal(cats) => quote_if_needed(&cats[*v as usize]),
            });
        }
        fields.extend(lrow.iter().map(|b| b.to_string()));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('"', "&quot;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn write_label_xml<W: Write>(ds: &MultiLabelDataset, mut out: W) -> Result<()> {
    writeln!(out, r#"<?xml version="1.0" encoding="utf-8"?>"#)?;
    writeln!(
        out,
        r#"<labels xmlns="http://mulan.sourceforge.net/labels">"#
    )?;
    for name in &ds.label_names {
        writeln!(out, r#"  <label name="{}"></label>"#, xml_escape(name))?;
    }
    writeln!(out, "</labels>")?;
    Ok(())
}
