use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{validate_series, BlogPost, FeatureRow, PriceBar};
use crate::error::{Error, Result};

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

fn read_records<T, R>(reader: R, expect_header: &[&str], check: impl Fn(&T) -> Result<()>) -> Result<Vec<T>>
where
    T: DeserializeOwned,
    R: Read,
{
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(expect_header.iter().copied()) {
        return Err(Error::Format {
            line: 1,
            msg: format!(
                "expected header `{}`, got `{}`",
                expect_header.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let item: T = rec.deserialize(Some(&header)).map_err(|e| Error::Format { line, msg: e.to_string() })?;
        check(&item).map_err(|e| Error::Format { line, msg: e.to_string() })?;
        out.push(item);
    }
    Ok(out)
}

fn write_records<T: Serialize, W: Write>(writer: W, header: &[&str], items: &[T]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record(header)?;
    for item in items {
        wtr.serialize(item)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

const PRICE_HEADER: [&str; 5] = ["date", "open", "high", "low", "close"];
const POST_HEADER: [&str; 5] = ["date", "text", "thumbs", "comments", "forwards"];
const ROW_HEADER: [&str; 8] = ["sentiment", "thumbs", "comments", "forwards", "high", "low", "open", "label"];

pub fn read_prices(path: &Path) -> Result<Vec<PriceBar>> {
    let bars = read_records(open(path)?, &PRICE_HEADER, PriceBar::validate)?;
    validate_series(&bars)?;
    Ok(bars)
}

pub fn write_prices(path: &Path, bars: &[PriceBar]) -> Result<()> {
    write_records(create(path)?, &PRICE_HEADER, bars)
}

pub fn read_posts(path: &Path) -> Result<Vec<BlogPost>> {
    read_records(open(path)?, &POST_HEADER, BlogPost::validate)
}

pub fn write_posts(path: &Path, posts: &[BlogPost]) -> Result<()> {
    write_records(create(path)?, &POST_HEADER, posts)
}

pub fn read_rows(path: &Path) -> Result<Vec<FeatureRow>> {
    read_records(open(path)?, &ROW_HEADER, FeatureRow::validate)
}

pub fn write_rows(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    write_records(create(path)?, &ROW_HEADER, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn posts_with_quoted_text_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("posts.csv");
        let posts = vec![BlogPost {
            date: "2019-01-02".parse().unwrap(),
            text: "buy low, sell \"high\"!".into(),
            thumbs: 3,
            comments: 0,
            forwards: 9,
        }];
        write_posts(&path, &posts).unwrap();
        let raw = std::fs::read_to_string(&path).unwrap();
        assert!(raw.starts_with("date,text,thumbs,comments,forwards\n"));
        assert_eq!(read_posts(&path).unwrap(), posts);
    }

    #[test]
    fn rows_header_is_table_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        let row = FeatureRow {
            sentiment: 0.877553,
            thumbs: 31,
            comments: 14,
            forwards: 10,
            high: 3066.186,
            low: 2989.352,
            open: 2989.352,
            label: 1,
        };
        write_rows(&path, &[row]).unwrap();
        let raw = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            raw,
            "sentiment,thumbs,comments,forwards,high,low,open,label\n0.877553,31,14,10,3066.186,2989.352,2989.352,1\n"
        );
        assert_eq!(read_rows(&path).unwrap(), vec![row]);
    }

    #[test]
    fn bad_bar_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prices.csv");
        std::fs::write(&path, "date,open,high,low,close\n2019-01-02,10,11,9,10\n2019-01-03,10,9,11,10\n").unwrap();
        match read_prices(&path) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, "date,open,high\n").unwrap();
        assert!(matches!(read_prices(&path), Err(Error::Format { line: 1, .. })));
    }

    #[test]
    fn negative_counts_and_blank_text_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("posts.csv");
        std::fs::write(&path, "date,text,thumbs,comments,forwards\n2019-01-02,ok,1,-2,3\n").unwrap();
        assert!(matches!(read_posts(&path), Err(Error::Format { line: 2, .. })));
        std::fs::write(&path, "date,text,thumbs,comments,forwards\n2019-01-02,\"  \",1,2,3\n").unwrap();
        assert!(matches!(read_posts(&path), Err(Error::Format { line: 2, .. })));
    }
}
