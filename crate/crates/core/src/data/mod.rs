//! Example files, temporal blocks and rolling train/validation/test windows.
//!
//! Text format, one example per line:
//!
//! ```text
//! label [weight=w] [cost=c] [reward=v] field:value:1 field:value:1 ...
//! ```
//!
//! `label` is `0` or `1`. `value` is an unsigned 64-bit token; anything that
//! does not parse as one is hashed to a token. The trailing `:1` is the
//! feature value, which is always 1 for categorical data. Gzip input is
//! detected from its magic bytes.

mod synth;

use std::fs::File;
use std::hash::Hasher;
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::ops::Range;
use std::path::Path;

use flate2::read::MultiGzDecoder;
use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FeatureVector;

pub use synth::{gen_synthetic, gen_synthetic_with_truth, PlantedFfm, SynthSpec};

fn value_token(text: &str) -> u64 {
    text.parse::<u64>().unwrap_or_else(|_| {
        let mut h = FnvHasher::default();
        h.write(text.as_bytes());
        h.finish()
    })
}

fn parse_number(key: &str, text: &str, line: usize) -> Result<f64> {
    text.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("bad {key} value {text:?}"),
    })
}

/// Parses one line; `line` is the 1-based line number used in errors.
pub fn parse_line(text: &str, num_fields: usize, line: usize) -> Result<FeatureVector> {
    let err = |message: String| Error::Parse { line, message };
    let mut tokens = text.split_ascii_whitespace();
    let label = match tokens.next() {
        Some("1") => true,
        Some("0") => false,
        Some(other) => return Err(err(format!("label must be 0 or 1, got {other:?}"))),
        None => return Err(err("empty line".into())),
    };
    let mut weight = None;
    let mut cost = None;
    let mut reward = None;
    let mut slots = Vec::new();
    for tok in tokens {
        if let Some((key, val)) = tok.split_once('=') {
            let v = parse_number(key, val, line)?;
            let slot = match key {
                "weight" => &mut weight,
                "cost" => &mut cost,
                "reward" => &mut reward,
                _ => return Err(err(format!("unknown attribute {key:?}"))),
            };
            *slot = Some(v);
            continue;
        }
        let mut parts = tok.splitn(3, ':');
        let (Some(f), Some(v), Some(x)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err(format!("feature {tok:?} is not field:value:1")));
        };
        let field: u32 = f.parse().map_err(|_| err(format!("bad field index {f:?}")))?;
        if field as usize >= num_fields {
            return Err(err(format!("field {field} out of range (F = {num_fields})")));
        }
        if x.parse::<f64>().ok() != Some(1.0) {
            return Err(err(format!("feature value must be 1, got {x:?}")));
        }
        slots.push((field, value_token(v)));
    }
    let mut fv = FeatureVector::new(label, slots).map_err(|e| err(e.to_string()))?;
    if let Some(w) = weight {
        fv = fv.with_weight(w).map_err(|e| err(e.to_string()))?;
    }
    if let Some(c) = cost {
        fv = fv.with_cost(c).map_err(|e| err(e.to_string()))?;
    }
    if let Some(r) = reward {
        fv = fv.with_reward(r).map_err(|e| err(e.to_string()))?;
    }
    Ok(fv)
}

/// Writes one example in the text format, without the newline.
pub fn format_example(x: &FeatureVector, out: &mut impl Write) -> io::Result<()> {
    write!(out, "{}", if x.label { 1 } else { 0 })?;
    if x.weight != 1.0 {
        write!(out, " weight={}", x.weight)?;
    }
    if let Some(c) = x.cost {
        write!(out, " cost={c}")?;
    }
    if let Some(r) = x.reward {
        write!(out, " reward={r}")?;
    }
    for s in &x.slots {
        write!(out, " {}:{}:1", s.field, s.value)?;
    }
    Ok(())
}

pub fn write_examples<'a>(
    out: &mut impl Write,
    examples: impl IntoIterator<Item = &'a FeatureVector>,
) -> io::Result<()> {
    for x in examples {
        format_example(x, out)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Streaming parser over any buffered reader. Blank lines are skipped.
pub struct ExampleReader<R> {
    reader: R,
    num_fields: usize,
    line: usize,
    offset: u64,
    buf: String,
}

impl<R: BufRead> ExampleReader<R> {
    pub fn new(reader: R, num_fields: usize) -> Self {
        ExampleReader {
            reader,
            num_fields,
            line: 0,
            offset: 0,
            buf: String::new(),
        }
    }

    /// Next example together with the byte offset of its line in the
    /// (decompressed) stream.
    pub fn next_with_offset(&mut self) -> Option<Result<(FeatureVector, u64)>> {
        loop {
            self.buf.clear();
            let start = self.offset;
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(n) => {
                    self.line += 1;
                    self.offset += n as u64;
                    if self.buf.trim().is_empty() {
                        continue;
                    }
                    return Some(parse_line(&self.buf, self.num_fields, self.line).map(|x| (x, start)));
                }
                Err(e) => return Some(Err(e.into())),
            }
        }
    }
}

impl<R: BufRead> Iterator for ExampleReader<R> {
    type Item = Result<FeatureVector>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_with_offset().map(|r| r.map(|(x, _)| x))
    }
}

pub fn parse_examples<R: BufRead>(reader: R, num_fields: usize) -> ExampleReader<R> {
    ExampleReader::new(reader, num_fields)
}

/// Opens a file for reading, transparently decompressing gzip.
pub fn open_text(path: impl AsRef<Path>) -> Result<Box<dyn BufRead>> {
    let mut file = File::open(path)?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic)?;
    file.seek(SeekFrom::Start(0))?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

pub fn read_examples(path: impl AsRef<Path>, num_fields: usize) -> Result<Vec<FeatureVector>> {
    parse_examples(open_text(path)?, num_fields).collect()
}

pub fn read_examples_with_offsets(
    path: impl AsRef<Path>,
    num_fields: usize,
) -> Result<Vec<(FeatureVector, u64)>> {
    let mut reader = parse_examples(open_text(path)?, num_fields);
    let mut out = Vec::new();
    while let Some(item) = reader.next_with_offset() {
        out.push(item?);
    }
    Ok(out)
}

/// One contiguous slice of the example sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub block_id: usize,
    /// Index of the first example of the block.
    #[serde(skip)]
    pub start: usize,
    /// Byte offset of the block's first line in the decompressed source, when known.
    pub byte_offset: Option<u64>,
    pub count: usize,
}

/// Temporally ordered examples cut into contiguous, non-overlapping blocks.
#[derive(Debug, Clone)]
pub struct BlockedDataset {
    examples: Vec<FeatureVector>,
    blocks: Vec<Block>,
    num_fields: usize,
}

/// Sizes of an even, order-preserving split: the first `n % blocks` blocks get one extra.
pub fn block_sizes(n: usize, n_blocks: usize) -> Vec<usize> {
    let (q, r) = (n / n_blocks, n % n_blocks);
    (0..n_blocks).map(|i| q + usize::from(i < r)).collect()
}

impl BlockedDataset {
    pub fn split_blocks(examples: Vec<FeatureVector>, n_blocks: usize, num_fields: usize) -> Result<Self> {
        Self::split_with_offsets(examples, None, n_blocks, num_fields)
    }

    /// Like [`BlockedDataset::split_blocks`], recording each block's byte offset.
    pub fn split_with_offsets(
        examples: Vec<FeatureVector>,
        offsets: Option<&[u64]>,
        n_blocks: usize,
        num_fields: usize,
    ) -> Result<Self> {
        if n_blocks < 1 {
            return Err(Error::config("n_blocks must be at least 1"));
        }
        if n_blocks > examples.len() {
            return Err(Error::config(format!(
                "cannot cut {} examples into {n_blocks} blocks",
                examples.len()
            )));
        }
        for x in &examples {
            x.validate(num_fields)?;
        }
        let mut start = 0;
        let blocks = block_sizes(examples.len(), n_blocks)
            .into_iter()
            .enumerate()
            .map(|(block_id, count)| {
                let b = Block {
                    block_id,
                    start,
                    byte_offset: offsets.map(|o| o[start]),
                    count,
                };
                start += count;
                b
            })
            .collect();
        Ok(BlockedDataset {
            examples,
            blocks,
            num_fields,
        })
    }

    /// Rebuilds the blocks from an index sidecar over the same examples.
    pub fn from_index(examples: Vec<FeatureVector>, index: &[Block], num_fields: usize) -> Result<Self> {
        let mut start = 0;
        let mut blocks = Vec::with_capacity(index.len());
        for (i, b) in index.iter().enumerate() {
            if b.block_id != i {
                return Err(Error::Format(format!("block ids must be 0..n in order, found {} at {i}", b.block_id)));
            }
            blocks.push(Block { start, ..*b });
            start += b.count;
        }
        if start != examples.len() {
            return Err(Error::Format(format!(
                "index covers {start} examples but the data has {}",
                examples.len()
            )));
        }
        for x in &examples {
            x.validate(num_fields)?;
        }
        Ok(BlockedDataset {
            examples,
            blocks,
            num_fields,
        })
    }

    pub fn num_fields(&self) -> usize {
        self.num_fields
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn examples(&self) -> &[FeatureVector] {
        &self.examples
    }

    pub fn block(&self, i: usize) -> &[FeatureVector] {
        self.range(i..i + 1)
    }

    /// Examples of the contiguous block range `blocks`.
    pub fn range(&self, blocks: Range<usize>) -> &[FeatureVector] {
        if blocks.is_empty() {
            return &[];
        }
        let first = &self.blocks[blocks.start];
        let last = &self.blocks[blocks.end - 1];
        &self.examples[first.start..last.start + last.count]
    }

    pub fn write_index(&self, path: impl AsRef<Path>) -> Result<()> {
        write_block_index(path, &self.blocks)
    }
}

/// Writes the `block_id,byte_offset,count` sidecar.
pub fn write_block_index(path: impl AsRef<Path>, blocks: &[Block]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for b in blocks {
        w.serialize(b)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_block_index(path: impl AsRef<Path>) -> Result<Vec<Block>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    let mut start = 0;
    for row in r.deserialize() {
        let mut b: Block = row?;
        b.start = start;
        start += b.count;
        out.push(b);
    }
    Ok(out)
}

/// Reads just one block of a plain-text file by seeking to its byte offset.
/// Gzip sources are decompressed and skipped through instead.
pub fn read_block(path: impl AsRef<Path>, block: &Block, num_fields: usize) -> Result<Vec<FeatureVector>> {
    let offset = block
        .byte_offset
        .ok_or_else(|| Error::Format(format!("block {} has no byte offset", block.block_id)))?;
    let mut reader = open_text(path)?;
    io::copy(&mut (&mut reader).take(offset), &mut io::sink())?;
    let parsed: Result<Vec<_>> = parse_examples(reader, num_fields).take(block.count).collect();
    let parsed = parsed?;
    if parsed.len() != block.count {
        return Err(Error::Format(format!(
            "block {} expects {} examples, file has {}",
            block.block_id,
            block.count,
            parsed.len()
        )));
    }
    Ok(parsed)
}

/// Window sizes, in blocks, of one progressive-validation step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollingWindow {
    pub train_blocks: usize,
    pub val_blocks: usize,
    pub test_blocks: usize,
    pub step: usize,
}

impl RollingWindow {
    pub fn new(train_blocks: usize) -> Self {
        RollingWindow {
            train_blocks,
            val_blocks: 1,
            test_blocks: 1,
            step: 1,
        }
    }

    pub fn size(&self) -> usize {
        self.train_blocks + self.val_blocks + self.test_blocks
    }

    fn validate(&self) -> Result<()> {
        if self.train_blocks < 1 || self.val_blocks < 1 || self.test_blocks < 1 || self.step < 1 {
            return Err(Error::config("window sizes and step must all be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RollingStep {
    pub index: usize,
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// All steps of a rolling experiment over `n_blocks` blocks.
///
/// Step `t` starts at block `t * step`; training blocks come first, then
/// validation, then test.
pub fn rolling_steps(n_blocks: usize, window: RollingWindow) -> Result<Vec<RollingStep>> {
    window.validate()?;
    if n_blocks < window.size() {
        return Err(Error::InsufficientBlocks {
            needed: window.size(),
            available: n_blocks,
        });
    }
    let count = (n_blocks - window.size()) / window.step + 1;
    Ok((0..count)
        .map(|index| {
            let s = index * window.step;
            let v = s + window.train_blocks;
            let t = v + window.val_blocks;
            RollingStep {
                index,
                train: s..v,
                val: v..t,
                test: t..t + window.test_blocks,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_the_basic_line() {
        let x = parse_line("1 0:12:1 1:7:1", 2, 1).unwrap();
        assert!(x.label);
        assert_eq!(x.weight, 1.0);
        assert_eq!(x.slots.len(), 2);
        assert_eq!((x.slots[0].field, x.slots[0].value), (0, 12));
        assert_eq!((x.slots[1].field, x.slots[1].value), (1, 7));
    }

    #[test]
    fn parses_attributes() {
        let x = parse_line("0 weight=2.5 cost=0.3 reward=4 2:9:1", 3, 1).unwrap();
        assert!(!x.label);
        assert_eq!(x.weight, 2.5);
        assert_eq!(x.cost, Some(0.3));
        assert_eq!(x.reward, Some(4.0));
    }

    #[test]
    fn string_tokens_are_hashed_stably() {
        let a = parse_line("1 0:68fd1e64:1", 1, 1).unwrap();
        let b = parse_line("1 0:68fd1e64:1", 1, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.slots[0].value, parse_line("1 0:68fd1e65:1", 1, 1).unwrap().slots[0].value);
    }

    #[test]
    fn malformed_lines_report_their_number() {
        let text = "1 0:1:1\n0 1:2:1\n2 0:3:1\n";
        let res: Result<Vec<_>> = parse_examples(text.as_bytes(), 2).collect();
        match res {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_features() {
        for bad in ["1 5:1:1", "1 0:1", "1 0:1:0.5", "1 x:1:1", "1 0:1:1 0:2:1", "1 weight=-1 0:1:1", "1 foo=2"] {
            assert!(parse_line(bad, 3, 7).is_err(), "{bad}");
        }
    }

    #[test]
    fn empty_input_is_empty() {
        assert_eq!(parse_examples(&b""[..], 4).count(), 0);
        assert_eq!(parse_examples(&b"\n\n"[..], 4).count(), 0);
    }

    #[test]
    fn even_split() {
        let xs: Vec<_> = (0..90_000u64).map(|i| FeatureVector::new(i % 2 == 0, [(0, i)]).unwrap()).collect();
        let b = BlockedDataset::split_blocks(xs, 90, 1).unwrap();
        assert_eq!(b.n_blocks(), 90);
        assert!(b.blocks().iter().all(|b| b.count == 1000));
    }

    #[test]
    fn remainder_goes_to_leading_blocks() {
        assert_eq!(block_sizes(10, 3), vec![4, 3, 3]);
        let xs: Vec<_> = (0..10u64).map(|i| FeatureVector::new(true, [(0, i)]).unwrap()).collect();
        assert!(BlockedDataset::split_blocks(xs.clone(), 0, 1).is_err());
        assert!(BlockedDataset::split_blocks(xs, 11, 1).is_err());
    }

    #[test]
    fn ninety_block_step_arithmetic() {
        let steps = rolling_steps(90, RollingWindow::new(44)).unwrap();
        assert_eq!(steps.len(), 45);
        assert_eq!(steps[0].test, 45..46);
        assert_eq!(steps[0].train, 0..44);
        assert_eq!(steps.last().unwrap().test, 89..90);
    }

    #[test]
    fn minimal_window_has_one_step() {
        assert_eq!(rolling_steps(3, RollingWindow::new(1)).unwrap().len(), 1);
        assert!(matches!(
            rolling_steps(2, RollingWindow::new(1)),
            Err(Error::InsufficientBlocks { needed: 3, available: 2 })
        ));
    }

    #[test]
    fn online_window_tiles_without_overlap() {
        let steps = rolling_steps(10, RollingWindow::new(1)).unwrap();
        for (t, s) in steps.iter().enumerate() {
            assert_eq!(s.train, t..t + 1);
            assert_eq!(s.val, t + 1..t + 2);
            assert_eq!(s.test, t + 2..t + 3);
        }
        for w in steps.windows(2) {
            assert_eq!(w[1].train, w[0].val);
            assert_eq!(w[1].val, w[0].test);
        }
    }

    proptest! {
        #[test]
        fn split_is_a_lossless_partition(n in 1usize..500, blocks in 1usize..50) {
            prop_assume!(blocks <= n);
            let xs: Vec<_> = (0..n as u64).map(|i| FeatureVector::new(i % 3 == 0, [(0, i)]).unwrap()).collect();
            let b = BlockedDataset::split_blocks(xs.clone(), blocks, 1).unwrap();
            let joined: Vec<_> = (0..b.n_blocks()).flat_map(|i| b.block(i).to_vec()).collect();
            prop_assert_eq!(&joined, &xs);
            let sizes: Vec<_> = b.blocks().iter().map(|b| b.count).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            prop_assert_eq!(b.range(0..b.n_blocks()), &xs[..]);
        }

        #[test]
        fn rolling_windows_are_disjoint(n in 3usize..120, tr in 1usize..40, va in 1usize..3, te in 1usize..3, step in 1usize..4) {
            let w = RollingWindow { train_blocks: tr, val_blocks: va, test_blocks: te, step };
            match rolling_steps(n, w) {
                Ok(steps) => {
                    prop_assert_eq!(steps.len(), (n - w.size()) / step + 1);
                    if step == 1 {
                        prop_assert_eq!(steps.len(), n - w.size() + 1);
                    }
                    for s in &steps {
                        prop_assert_eq!(s.train.end, s.val.start);
                        prop_assert_eq!(s.val.end, s.test.start);
                        prop_assert!(s.test.end <= n);
                    }
                    for p in steps.windows(2) {
                        prop_assert_eq!(p[1].train.start, p[0].train.start + step);
                    }
                }
                Err(_) => prop_assert!(n < w.size()),
            }
        }
    }
}
