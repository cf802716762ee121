use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

/// Reading fails outright above this share of malformed rows.
pub const MAX_MALFORMED_FRACTION: f64 = 0.10;

/// One user: id, home location, and all of their text concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct UserRecord {
    pub id: String,
    pub location: GeoPoint,
    pub text: String,
}

impl UserRecord {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.id.contains(['\t', '\n', '\r']) {
            return Err(Error::Domain(format!("invalid user id '{}'", self.id)));
        }
        if self.text.contains(['\n', '\r']) {
            return Err(Error::Domain(format!("text of user '{}' contains a line break", self.id)));
        }
        self.location.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MalformedRow {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub records: Vec<UserRecord>,
    pub malformed: Vec<MalformedRow>,
}

fn parse_row(line: &str) -> std::result::Result<UserRecord, String> {
    let mut f = line.splitn(4, '\t');
    let (id, lat, lon) = (f.next().unwrap_or(""), f.next(), f.next());
    let text = f.next();
    let (Some(lat), Some(lon), Some(text)) = (lat, lon, text) else {
        return Err("expected 4 tab-separated fields".into());
    };
    if id.is_empty() {
        return Err("empty user id".into());
    }
    let lat: f64 = lat.trim().parse().map_err(|_| format!("bad latitude '{lat}'"))?;
    let lon: f64 = lon.trim().parse().map_err(|_| format!("bad longitude '{lon}'"))?;
    let location = GeoPoint::new(lat, lon).map_err(|e| e.to_string())?;
    Ok(UserRecord { id: id.to_string(), location, text: text.to_string() })
}

/// Parses corpus TSV text; `source` names the input in diagnostics.
pub fn parse_corpus(content: &str, source: &Path) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    let mut rows = 0usize;
    for (n, line) in content.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        rows += 1;
        match parse_row(line) {
            Ok(r) => corpus.records.push(r),
            Err(reason) => {
                log::warn!("{}:{}: skipping malformed row: {reason}", source.display(), n + 1);
                corpus.malformed.push(MalformedRow { line: n + 1, reason });
            }
        }
    }
    if rows == 0 {
        log::warn!("{} contains no rows", source.display());
    }
    if rows > 0 && corpus.malformed.len() as f64 > MAX_MALFORMED_FRACTION * rows as f64 {
        return Err(Error::Corpus {
            path: source.to_path_buf(),
            message: format!("{} of {rows} rows are malformed (first at line {})", corpus.malformed.len(), corpus.malformed[0].line),
        });
    }
    Ok(corpus)
}

/// Reads `user_id<TAB>lat<TAB>lon<TAB>text` rows.
pub fn read_corpus(path: &Path) -> Result<Corpus> {
    let content = fs::read_to_string(path).map_err(|e| Error::Corpus { path: path.to_path_buf(), message: e.to_string() })?;
    parse_corpus(&content, path)
}

pub fn format_corpus(records: &[UserRecord]) -> Result<String> {
    let mut s = String::new();
    for r in records {
        r.validate()?;
        s.push_str(&format!("{}\t{}\t{}\t{}\n", r.id, r.location.lat, r.location.lon, r.text));
    }
    Ok(s)
}

pub fn write_corpus(path: &Path, records: &[UserRecord]) -> Result<()> {
    let s = format_corpus(records)?;
    let mut f = fs::File::create(path)?;
    f.write_all(s.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_well_formed_rows() {
        let c = parse_corpus("a\t1.5\t2\thello world\nb\t-3\t4\t\nc\t0\t0\tx\ty\n", Path::new("t")).unwrap();
        assert_eq!(c.records.len(), 3);
        assert_eq!(c.records[2].text, "x\ty");
        assert!(c.malformed.is_empty());
    }

    #[test]
    fn out_of_range_latitude_is_reported() {
        let mut s = String::from("bad\t91.0\t0\ttext\n");
        for i in 0..10 {
            s.push_str(&format!("u{i}\t1\t1\tt\n"));
        }
        let c = parse_corpus(&s, Path::new("t")).unwrap();
        assert_eq!(c.records.len(), 10);
        assert_eq!(c.malformed.len(), 1);
        assert_eq!(c.malformed[0].line, 1);
    }

    #[test]
    fn too_many_malformed_rows_is_fatal() {
        let s = "a\tx\t0\tt\nb\t1\t1\tt\nc\t2\t2\tt\n";
        assert!(matches!(parse_corpus(s, Path::new("t")), Err(Error::Corpus { .. })));
    }

    #[test]
    fn empty_file_gives_empty_corpus() {
        assert!(parse_corpus("", Path::new("t")).unwrap().records.is_empty());
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(read_corpus(Path::new("/nonexistent/corpus.tsv")).is_err());
    }

    fn arb_record() -> impl Strategy<Value = UserRecord> {
        ("[a-z0-9_]{1,8}", -90.0f64..=90.0, -180.0f64..=180.0, "[a-z #@!.,\t]{0,30}")
            .prop_map(|(id, lat, lon, text)| UserRecord { id, location: GeoPoint { lat, lon }, text })
    }

    proptest! {
        #[test]
        fn write_then_read_is_identity(records in prop::collection::vec(arb_record(), 0..20)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("c.tsv");
            write_corpus(&p, &records).unwrap();
            let back = read_corpus(&p).unwrap();
            prop_assert_eq!(back.records, records);
        }
    }
}
