//! Typed answer matchers. Numbers are compared as exact rationals parsed
//! from their decimal text, so tolerance boundaries are exact.

use chrono::{NaiveDate, NaiveTime};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde_json::Value;

use super::template::{AnswerField, FieldType, Matcher};
use super::TaskError;

pub const DATE_FORMAT: &str = "%Y-%m-%d";
pub const TIME_FORMAT: &str = "%H:%M";

/// Parses `[-+]digits[.digits][e[-+]digits]` exactly.
pub fn parse_decimal(text: &str) -> Option<BigRational> {
    let t = text.trim();
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().ok()?),
        None => (t, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let whole: BigInt = format!("0{int}{frac}").parse().ok()?;
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    let mut r = BigRational::from_integer(whole);
    if scale >= 0 {
        r *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        r /= BigRational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if neg { -r } else { r })
}

pub fn number_of(v: &Value) -> Option<BigRational> {
    match v {
        Value::Number(n) => parse_decimal(&n.to_string()),
        _ => None,
    }
}

fn text_of<'a>(v: &'a Value, field: &str) -> Result<&'a str, TaskError> {
    v.as_str().ok_or_else(|| TaskError::TypeMismatch { field: field.to_string(), got: v.to_string() })
}

fn scalar_match(f: &AnswerField, submitted: &Value, gold: &Value, items_are_text: bool) -> Result<bool, TaskError> {
    let mismatch = || TaskError::TypeMismatch { field: f.field_id.clone(), got: submitted.to_string() };
    match f.matcher {
        Matcher::Exact => {
            let s = text_of(submitted, &f.field_id)?.trim();
            Ok(match gold.as_str() {
                Some(g) => s == g.trim(),
                None => s == gold.to_string().as_str(),
            })
        }
        Matcher::Number => {
            let s = if items_are_text {
                parse_decimal(text_of(submitted, &f.field_id)?).ok_or_else(mismatch)?
            } else {
                number_of(submitted).ok_or_else(mismatch)?
            };
            let g = number_of(gold).or_else(|| gold.as_str().and_then(parse_decimal)).ok_or_else(mismatch)?;
            let tol = f.tolerance.as_ref().and_then(|t| parse_decimal(&t.to_string())).unwrap_or_else(BigRational::zero);
            Ok((s - g).abs() <= tol)
        }
        Matcher::Date => {
            let s = NaiveDate::parse_from_str(text_of(submitted, &f.field_id)?.trim(), DATE_FORMAT).map_err(|_| mismatch())?;
            Ok(gold.as_str().and_then(|g| NaiveDate::parse_from_str(g, DATE_FORMAT).ok()) == Some(s))
        }
        Matcher::Time => {
            let s = NaiveTime::parse_from_str(text_of(submitted, &f.field_id)?.trim(), TIME_FORMAT).map_err(|_| mismatch())?;
            Ok(gold.as_str().and_then(|g| NaiveTime::parse_from_str(g, TIME_FORMAT).ok()) == Some(s))
        }
        Matcher::Duration => {
            let s: u64 = text_of(submitted, &f.field_id)?.trim().parse().map_err(|_| mismatch())?;
            let g = gold.as_u64().or_else(|| gold.as_str().and_then(|g| g.trim().parse().ok()));
            Ok(g == Some(s))
        }
    }
}

/// Compares a submitted value with the field's gold value. A submission of
/// the wrong JSON type is a [`TaskError::TypeMismatch`]; callers that judge
/// treat it as a non-match.
pub fn match_field(f: &AnswerField, submitted: &Value) -> Result<bool, TaskError> {
    match f.field_type {
        FieldType::Choice => {
            let s = text_of(submitted, &f.field_id)?;
            Ok(gold_str(&f.gold) == Some(s))
        }
        FieldType::Number | FieldType::Text => scalar_match(f, submitted, &f.gold, false),
        FieldType::Repeatable => {
            let items = submitted
                .as_array()
                .ok_or_else(|| TaskError::TypeMismatch { field: f.field_id.clone(), got: submitted.to_string() })?;
            let gold = f.gold.as_array().cloned().unwrap_or_else(|| vec![f.gold.clone()]);
            if items.len() != gold.len() {
                return Ok(false);
            }
            let mut adj = vec![Vec::new(); items.len()];
            for (i, s) in items.iter().enumerate() {
                for (j, g) in gold.iter().enumerate() {
                    if scalar_match(f, s, g, true).unwrap_or(false) {
                        adj[i].push(j);
                    }
                }
            }
            Ok(perfect_matching(&adj, gold.len()))
        }
    }
}

fn gold_str(v: &Value) -> Option<&str> {
    v.as_str()
}

/// Kuhn's augmenting-path bipartite matching.
fn perfect_matching(adj: &[Vec<usize>], right: usize) -> bool {
    fn augment(u: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &v in &adj[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            if owner[v].is_none_or(|w| augment(w, adj, seen, owner)) {
                owner[v] = Some(u);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; right];
    (0..adj.len()).all(|u| augment(u, adj, &mut vec![false; right], &mut owner))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn field(ty: FieldType, m: Matcher, gold: Value, tol: Option<f64>) -> AnswerField {
        AnswerField {
            field_id: "f".into(),
            field_type: ty,
            matcher: m,
            gold,
            tolerance: tol.and_then(serde_json::Number::from_f64),
            hint: String::new(),
            choices: vec!["a".into(), "b".into()],
        }
    }

    #[test]
    fn decimals_parse_exactly() {
        let r = |n: i64, d: i64| BigRational::new(n.into(), d.into());
        assert_eq!(parse_decimal("34.3"), Some(r(343, 10)));
        assert_eq!(parse_decimal("-0.5"), Some(r(-1, 2)));
        assert_eq!(parse_decimal("1e-3"), Some(r(1, 1000)));
        assert_eq!(parse_decimal(".5"), Some(r(1, 2)));
        for bad in ["", "34°C", "1.2.3", "e5", "--1"] {
            assert_eq!(parse_decimal(bad), None, "{bad}");
        }
    }

    #[test]
    fn text_matchers() {
        let f = field(FieldType::Text, Matcher::Date, json!("2024-03-09"), None);
        assert!(match_field(&f, &json!(" 2024-03-09 ")).unwrap());
        assert!(match_field(&f, &json!("tomorrow")).is_err());
        let f = field(FieldType::Text, Matcher::Time, json!("07:05"), None);
        assert!(match_field(&f, &json!("07:05")).unwrap());
        assert!(!match_field(&f, &json!("7:06")).unwrap());
        let f = field(FieldType::Text, Matcher::Duration, json!(90), None);
        assert!(match_field(&f, &json!("90")).unwrap());
        let f = field(FieldType::Text, Matcher::Exact, json!("Ada"), None);
        assert!(match_field(&f, &json!("  Ada ")).unwrap());
        assert!(!match_field(&f, &json!("ada")).unwrap());
    }

    #[test]
    fn choice_and_repeatable() {
        let f = field(FieldType::Choice, Matcher::Exact, json!("b"), None);
        assert!(match_field(&f, &json!("b")).unwrap());
        assert!(!match_field(&f, &json!("a")).unwrap());
        let f = field(FieldType::Repeatable, Matcher::Exact, json!(["x", "y", "x"]), None);
        assert!(match_field(&f, &json!(["x", "x", "y"])).unwrap());
        assert!(!match_field(&f, &json!(["x", "y", "y"])).unwrap());
        assert!(!match_field(&f, &json!(["x", "y"])).unwrap());
    }
}
