//! Prior files: CSV with a `name` column and either `zeta,xi` or
//! `alpha,beta` per row. A file may carry all four columns as long as each
//! row fills exactly one pair.

use std::path::Path;

use anyhow::{bail, Context, Result};

use stabsel_core::bayes::PriorEntry;

pub fn read_prior_file(path: &Path) -> Result<Vec<PriorEntry>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read prior file {}", path.display()))?;
    parse_priors(&text).with_context(|| format!("invalid prior file {}", path.display()))
}

pub fn parse_priors(text: &str) -> Result<Vec<PriorEntry>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let Some(name_col) = col("name") else {
        bail!("missing 'name' column");
    };
    let elicited = col("zeta").zip(col("xi"));
    let shapes = col("alpha").zip(col("beta"));
    if elicited.is_none() && shapes.is_none() {
        bail!("expected columns zeta,xi or alpha,beta");
    }

    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let cell = |c: usize| record.get(c).filter(|s| !s.is_empty());
        let number = |c: usize| -> Result<Option<f64>> {
            cell(c)
                .map(|s| s.parse::<f64>().with_context(|| format!("line {line}: '{s}' is not a number")))
                .transpose()
        };
        let pair = |cols: Option<(usize, usize)>| -> Result<Option<(f64, f64)>> {
            match cols {
                None => Ok(None),
                Some((a, b)) => match (number(a)?, number(b)?) {
                    (Some(a), Some(b)) => Ok(Some((a, b))),
                    (None, None) => Ok(None),
                    _ => bail!("line {line}: incomplete pair"),
                },
            }
        };
        let name = cell(name_col)
            .with_context(|| format!("line {line}: empty name"))?
            .to_string();
        entries.push(match (pair(elicited)?, pair(shapes)?) {
            (Some((zeta, xi)), None) => PriorEntry::Elicited { name, zeta, xi },
            (None, Some((alpha, beta))) => PriorEntry::Shapes { name, alpha, beta },
            (Some(_), Some(_)) => bail!("line {line}: give zeta,xi or alpha,beta, not both"),
            (None, None) => bail!("line {line}: no prior values for '{name}'"),
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elicited_file() {
        let e = parse_priors("name,zeta,xi\nx1,0.5,0.7\nx2, 0.25 ,0.1\n").unwrap();
        assert_eq!(e[0], PriorEntry::Elicited { name: "x1".into(), zeta: 0.5, xi: 0.7 });
        assert_eq!(e[1], PriorEntry::Elicited { name: "x2".into(), zeta: 0.25, xi: 0.1 });
    }

    #[test]
    fn mixed_rows() {
        let e = parse_priors("name,zeta,xi,alpha,beta\na,0.5,0.7,,\nb,,,2,3\n").unwrap();
        assert!(matches!(e[0], PriorEntry::Elicited { .. }));
        assert_eq!(e[1], PriorEntry::Shapes { name: "b".into(), alpha: 2.0, beta: 3.0 });
    }

    #[test]
    fn malformed() {
        assert!(parse_priors("zeta,xi\n0.5,0.7\n").is_err());
        assert!(parse_priors("name,foo\nx,1\n").is_err());
        assert!(parse_priors("name,zeta,xi,alpha,beta\na,0.5,0.7,2,3\n").is_err());
        assert!(parse_priors("name,zeta,xi\na,0.5,\n").is_err());
        assert!(parse_priors("name,zeta,xi\na,half,0.7\n").is_err());
    }
}
