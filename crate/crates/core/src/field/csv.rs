//! Plain-text field format:
//!
//! ```text
//! # d=2 lo=-1,-1 hi=1,1 n=8,8
//! 0.5
//! ...
//! ```
//!
//! One value per line after the header, row-major with axis 0 slowest.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{BoxDomain, GridSpec, ScalarField};
use crate::error::{Error, Result};

pub fn load_field_csv(path: impl AsRef<Path>) -> Result<ScalarField> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_field_csv(file)
}

pub fn save_field_csv(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_field_csv(&mut w, field).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_field_csv<W: Write>(w: &mut W, field: &ScalarField) -> std::io::Result<()> {
    let join = |v: &[f64]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    let n = field
        .grid()
        .n()
        .iter()
        .map(|k| k.to_string())
        .collect::<Vec<_>>()
        .join(",");
    writeln!(
        w,
        "# d={} lo={} hi={} n={}",
        field.dim(),
        join(field.domain().lo()),
        join(field.domain().hi()),
        n
    )?;
    // f64 Display is the shortest string that parses back to the same bits
    for v in field.values() {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

pub fn read_field_csv<R: Read>(r: R) -> Result<ScalarField> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines().enumerate();

    let header = loop {
        match lines.next() {
            Some((i, line)) => {
                let line = line.map_err(|e| Error::Parse {
                    line: i + 1,
                    msg: e.to_string(),
                })?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(Error::MalformedHeader("empty file".into())),
        }
    };
    let (domain, grid) = parse_header(&header)?;

    let mut values = Vec::with_capacity(grid.len());
    for (i, line) in lines {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t.parse().map_err(|_| Error::Parse {
            line: i + 1,
            msg: format!("not a number: `{t}`"),
        })?;
        if !v.is_finite() {
            return Err(Error::NonFinite(values.len()));
        }
        values.push(v);
    }
    if values.len() != grid.len() {
        return Err(Error::CountMismatch {
            expected: grid.len(),
            got: values.len(),
        });
    }
    ScalarField::new(domain, grid, values)
}

fn parse_header(line: &str) -> Result<(BoxDomain, GridSpec)> {
    let body = line
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::MalformedHeader("header must start with `#`".into()))?;

    let mut d = None;
    let mut lo = None;
    let mut hi = None;
    let mut n = None;
    for tok in body.split_whitespace() {
        let (key, val) = tok
            .split_once('=')
            .ok_or_else(|| Error::MalformedHeader(format!("expected key=value, got `{tok}`")))?;
        match key {
            "d" => {
                d = Some(val.parse::<usize>().map_err(|_| {
                    Error::MalformedHeader(format!("bad dimension `{val}`"))
                })?)
            }
            "lo" => lo = Some(parse_list::<f64>(key, val)?),
            "hi" => hi = Some(parse_list::<f64>(key, val)?),
            "n" => n = Some(parse_list::<usize>(key, val)?),
            other => return Err(Error::MalformedHeader(format!("unknown key `{other}`"))),
        }
    }
    let missing = |k: &str| Error::MalformedHeader(format!("missing `{k}`"));
    let d = d.ok_or_else(|| missing("d"))?;
    let lo = lo.ok_or_else(|| missing("lo"))?;
    let hi = hi.ok_or_else(|| missing("hi"))?;
    let n = n.ok_or_else(|| missing("n"))?;
    if lo.len() != d || hi.len() != d || n.len() != d {
        return Err(Error::MalformedHeader(format!(
            "d={d} but lo/hi/n have {}/{}/{} entries",
            lo.len(),
            hi.len(),
            n.len()
        )));
    }
    Ok((BoxDomain::new(lo, hi)?, GridSpec::new(n)?))
}

fn parse_list<T: std::str::FromStr>(key: &str, val: &str) -> Result<Vec<T>> {
    val.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| Error::MalformedHeader(format!("bad `{key}` entry `{s}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{catalog, sample_field};

    #[test]
    fn reads_declared_geometry() {
        let text = "# d=1 lo=-1 hi=1 n=4\n0.28125\n0.03125\n0.03125\n0.28125\n";
        let field = read_field_csv(text.as_bytes()).unwrap();
        let f = catalog("quadratic1d").unwrap();
        let expected = sample_field(&f, f.domain(), &GridSpec::new(vec![4]).unwrap()).unwrap();
        assert_eq!(field, expected);
    }

    #[test]
    fn count_mismatch() {
        let text = "# d=1 lo=-1 hi=1 n=4\n1\n2\n3\n";
        assert!(matches!(
            read_field_csv(text.as_bytes()),
            Err(Error::CountMismatch { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn malformed_headers() {
        for text in [
            "d=1 lo=-1 hi=1 n=4\n1\n",
            "# d=1 lo=-1 hi=1\n1\n",
            "# d=2 lo=-1 hi=1 n=4\n1\n",
            "# d=1 lo=x hi=1 n=4\n1\n",
            "# d=1 lo=-1 hi=1 n=4 extra=3\n1\n",
            "",
        ] {
            assert!(
                matches!(read_field_csv(text.as_bytes()), Err(Error::MalformedHeader(_))),
                "{text:?}"
            );
        }
    }

    #[test]
    fn non_finite_entry() {
        let text = "# d=1 lo=0 hi=1 n=2\n1\ninf\n";
        assert!(matches!(read_field_csv(text.as_bytes()), Err(Error::NonFinite(1))));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for name in ["cosine1d", "sinusoid2d", "quadratic3d"] {
            let f = catalog(name).unwrap();
            let grid = GridSpec::uniform(f.dim(), 12).unwrap();
            let field = sample_field(&f, f.domain(), &grid).unwrap();
            let mut buf = Vec::new();
            write_field_csv(&mut buf, &field).unwrap();
            let back = read_field_csv(buf.as_slice()).unwrap();
            assert_eq!(back.domain(), field.domain());
            assert_eq!(back.grid(), field.grid());
            let same = back
                .values()
                .iter()
                .zip(field.values())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same, "{name}");
        }
    }
}
