//! Text grammars for measures, radius laws, witnesses and lists.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::BoxRegion;
use crate::liploss::LipschitzWitness;
use crate::measure::{MeasureSpec, RadiusSpec};

fn num<T: FromStr>(key: &str, text: &str) -> Result<T> {
    text.trim()
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse '{text}' as a number")))
}

fn nums(key: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',').map(|t| num(key, t)).collect()
}

/// Comma-separated list, e.g. `4,8,16`.
pub fn parse_list<T: FromStr>(key: &str, text: &str) -> Result<Vec<T>> {
    if text.trim().is_empty() {
        return Err(Error::config(format!("{key}: empty list")));
    }
    text.split(',').map(|t| num(key, t)).collect()
}

/// `uniform:LO:HI[:D]`, `atoms:x@w,...`, `gaussian:M:SD`,
/// `truncated-gaussian:M:SD:LO:HI`, `product:D:w1,...` (on [0, 1]^D, every
/// marginal a step density with the given bin weights).
pub fn parse_measure(key: &str, text: &str) -> Result<MeasureSpec> {
    let parts: Vec<&str> = text.trim().split(':').collect();
    let wrap = |e: Error| Error::config(format!("{key}: {e}"));
    match (parts[0], parts.len()) {
        ("uniform", 3) => MeasureSpec::uniform(num(key, parts[1])?, num(key, parts[2])?).map_err(wrap),
        ("uniform", 4) => {
            let d: usize = num(key, parts[3])?;
            if d == 0 {
                return Err(Error::config(format!("{key}: dimension must be at least 1")));
            }
            let (lo, hi): (f64, f64) = (num(key, parts[1])?, num(key, parts[2])?);
            let domain = BoxRegion::new(vec![lo; d], vec![hi; d]).map_err(wrap)?;
            MeasureSpec::uniform_box(domain).map_err(wrap)
        }
        ("atoms", 2) => {
            let atoms = parts[1]
                .split(',')
                .map(|a| {
                    let (x, w) = a
                        .split_once('@')
                        .ok_or_else(|| Error::config(format!("{key}: atom '{a}' must be written x@w")))?;
                    Ok((num(key, x)?, num(key, w)?))
                })
                .collect::<Result<Vec<_>>>()?;
            MeasureSpec::atoms(atoms).map_err(wrap)
        }
        ("gaussian", 3) => MeasureSpec::gaussian(num(key, parts[1])?, num(key, parts[2])?).map_err(wrap),
        ("truncated-gaussian", 5) => MeasureSpec::truncated_gaussian(
            num(key, parts[1])?,
            num(key, parts[2])?,
            num(key, parts[3])?,
            num(key, parts[4])?,
        )
        .map_err(wrap),
        ("product", 3) => {
            let d: usize = num(key, parts[1])?;
            if d == 0 {
                return Err(Error::config(format!("{key}: dimension must be at least 1")));
            }
            let w = nums(key, parts[2])?;
            MeasureSpec::product_density(BoxRegion::unit(d), vec![w; d]).map_err(wrap)
        }
        _ => Err(Error::config(format!(
            "{key}: unrecognized measure '{text}' (expected uniform:LO:HI[:D], atoms:x@w,..., gaussian:M:SD, \
             truncated-gaussian:M:SD:LO:HI or product:D:w1,...)"
        ))),
    }
}

/// `uniform:MAX`, `exponential:RATE` or `geometric:R0:RATIO:P`.
pub fn parse_radii(key: &str, text: &str) -> Result<RadiusSpec> {
    let parts: Vec<&str> = text.trim().split(':').collect();
    let r = match (parts[0], parts.len()) {
        ("uniform", 2) => RadiusSpec::Uniform { max: num(key, parts[1])? },
        ("exponential", 2) => RadiusSpec::Exponential { rate: num(key, parts[1])? },
        ("geometric", 4) => RadiusSpec::Geometric {
            r0: num(key, parts[1])?,
            ratio: num(key, parts[2])?,
            p: num(key, parts[3])?,
        },
        _ => {
            return Err(Error::config(format!(
                "{key}: unrecognized radius law '{text}' (expected uniform:MAX, exponential:RATE or geometric:R0:RATIO:P)"
            )))
        }
    };
    r.validate().map_err(|e| Error::config(format!("{key}: {e}")))?;
    Ok(r)
}

/// `coordinate:I`, `linear:a1,...[@OFFSET]`, `distance:p1,...`,
/// `constant:C` or `table:k1@v1,k2@v2,...`.
pub fn parse_witness(key: &str, text: &str) -> Result<LipschitzWitness> {
    let (kind, rest) = text.trim().split_once(':').unwrap_or((text.trim(), ""));
    match kind {
        "coordinate" => Ok(LipschitzWitness::CoordinateProjection(num(key, rest)?)),
        "constant" => Ok(LipschitzWitness::Constant(num(key, rest)?)),
        "linear" => {
            let (dir, offset) = match rest.split_once('@') {
                Some((d, o)) => (d, num(key, o)?),
                None => (rest, 0.0),
            };
            Ok(LipschitzWitness::Linear { direction: nums(key, dir)?, offset })
        }
        "distance" => Ok(LipschitzWitness::DistanceToPoint(nums(key, rest)?)),
        "table" => {
            let (knots, values) = rest
                .split(',')
                .map(|kv| {
                    let (k, v) = kv
                        .split_once('@')
                        .ok_or_else(|| Error::config(format!("{key}: table entry '{kv}' must be written knot@value")))?;
                    Ok((num::<f64>(key, k)?, num::<f64>(key, v)?))
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip();
            LipschitzWitness::table(knots, values).map_err(|e| Error::config(format!("{key}: {e}")))
        }
        _ => Err(Error::config(format!(
            "{key}: unrecognized witness '{text}' (expected coordinate:I, linear:a1,..., distance:p1,..., constant:C or table:k@v,...)"
        ))),
    }
}

pub fn parse_bool(key: &str, text: &str) -> Result<bool> {
    match text.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(Error::config(format!("{key}: expected true or false, got '{other}'"))),
    }
}
