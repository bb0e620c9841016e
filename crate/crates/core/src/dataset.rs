//! Challenge-response pair datasets.
//!
//! Canonical on-disk form (`puf-crp v1`):
//!
//! ```text
//! # puf-crp v1
//! # challenge_bits=64 response_bits=64
//! # meta generator=multibit
//! # meta puf_seed=42
//! challenge_hex,response_hex
//! 09283C630815977C,FF00FF0000FF00FF
//! ```
//!
//! Hex words are uppercase and zero-padded, MSB first. A looser import mode
//! reads rows shaped like `64h9283c630815977c  FF00FF0000FF00FF` without any
//! header, rejecting malformed rows individually.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::bits::{Challenge, Response};
use crate::error::{Error, Result};
use crate::puf::{ArbiterChain, DelayParams, MultiBitPuf, Puf};
use crate::seed;

pub const FORMAT_TAG: &str = "# puf-crp v1";
pub const COLUMN_HEADER: &str = "challenge_hex,response_hex";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Crp {
    pub challenge: Challenge,
    pub response: Response,
}

/// Ordered `key=value` annotations carried in the file header.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metadata(Vec<(String, String)>);

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    /// Set `key`, replacing an existing value in place.
    pub fn insert(&mut self, key: impl Into<String>, value: impl ToString) -> Result<()> {
        let key = key.into();
        let value = value.to_string();
        if key.is_empty() || key.contains(|c: char| c == '=' || c.is_whitespace()) {
            return Err(Error::invalid_input(format!("bad metadata key {key:?}")));
        }
        if value.contains(['\n', '\r']) {
            return Err(Error::invalid_input(format!(
                "metadata value for {key} spans lines"
            )));
        }
        match self.0.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.0.push((key, value)),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrpDataset {
    challenge_width: usize,
    response_width: usize,
    pairs: Vec<Crp>,
    metadata: Metadata,
}

impl CrpDataset {
    pub fn new(challenge_width: usize, response_width: usize) -> Result<Self> {
        if challenge_width == 0 || response_width == 0 {
            return Err(Error::invalid_parameter(
                "dataset widths must be at least 1",
            ));
        }
        Ok(CrpDataset {
            challenge_width,
            response_width,
            pairs: Vec::new(),
            metadata: Metadata::new(),
        })
    }

    pub fn with_metadata(mut self, metadata: Metadata) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn push(&mut self, crp: Crp) -> Result<()> {
        Error::check_width(self.challenge_width, crp.challenge.width())?;
        Error::check_width(self.response_width, crp.response.width())?;
        self.pairs.push(crp);
        Ok(())
    }

    pub fn challenge_width(&self) -> usize {
        self.challenge_width
    }

    pub fn response_width(&self) -> usize {
        self.response_width
    }

    pub fn pairs(&self) -> &[Crp] {
        &self.pairs
    }

    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut Metadata {
        &mut self.metadata
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// First `count` pairs (all of them if fewer), same widths and metadata.
    pub fn prefix(&self, count: usize) -> CrpDataset {
        CrpDataset {
            pairs: self.pairs[..count.min(self.pairs.len())].to_vec(),
            ..self.shell()
        }
    }

    /// Pairs at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> CrpDataset {
        CrpDataset {
            pairs: indices.iter().map(|&i| self.pairs[i].clone()).collect(),
            ..self.shell()
        }
    }

    fn shell(&self) -> CrpDataset {
        CrpDataset {
            challenge_width: self.challenge_width,
            response_width: self.response_width,
            pairs: Vec::new(),
            metadata: self.metadata.clone(),
        }
    }

    /// Render the `puf-crp v1` text form.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(64 + self.pairs.len() * 40);
        out.push_str(FORMAT_TAG);
        out.push('\n');
        let _ = writeln!(
            out,
            "# challenge_bits={} response_bits={}",
            self.challenge_width, self.response_width
        );
        for (k, v) in self.metadata.iter() {
            let _ = writeln!(out, "# meta {k}={v}");
        }
        out.push_str(COLUMN_HEADER);
        out.push('\n');
        for crp in &self.pairs {
            let _ = writeln!(out, "{},{}", crp.challenge.to_hex(), crp.response.to_hex());
        }
        out
    }

    /// Parse the `puf-crp v1` text form. Errors carry 1-based line numbers.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

        match lines.next() {
            Some((_, l)) if l.trim_end() == FORMAT_TAG => {}
            Some((n, l)) => {
                return Err(Error::parse(
                    n,
                    format!("expected {FORMAT_TAG:?}, found {:?}", l.trim_end()),
                ))
            }
            None => return Err(Error::parse(1, "empty file, missing format header")),
        }

        let (line_no, widths) = lines
            .next()
            .ok_or_else(|| Error::parse(2, "missing width header"))?;
        let (cw, rw) = parse_width_header(widths).map_err(|m| Error::parse(line_no, m))?;
        let mut ds = CrpDataset::new(cw, rw).map_err(|e| Error::parse(line_no, e.to_string()))?;

        let mut seen_columns = false;
        for (n, raw) in lines {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if !seen_columns {
                if let Some(rest) = line.strip_prefix("# meta ") {
                    let (k, v) = rest
                        .split_once('=')
                        .ok_or_else(|| Error::parse(n, "metadata line lacks '='"))?;
                    ds.metadata
                        .insert(k.trim(), v.trim())
                        .map_err(|e| Error::parse(n, e.to_string()))?;
                    continue;
                }
                if line == COLUMN_HEADER {
                    seen_columns = true;
                    continue;
                }
                return Err(Error::parse(
                    n,
                    format!("expected metadata or {COLUMN_HEADER:?}, found {line:?}"),
                ));
            }
            if line == COLUMN_HEADER {
                return Err(Error::parse(n, "duplicate column header"));
            }
            let crp = parse_row(line, ',', cw, rw).map_err(|m| Error::parse(n, m))?;
            ds.pairs.push(crp);
        }
        if !seen_columns {
            return Err(Error::parse(
                text.lines().count().max(1),
                format!("missing column header {COLUMN_HEADER:?}"),
            ));
        }
        Ok(ds)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }
}

fn parse_width_header(line: &str) -> std::result::Result<(usize, usize), String> {
    let body = line
        .trim()
        .strip_prefix('#')
        .ok_or("expected '# challenge_bits=<n> response_bits=<m>'")?;
    let mut cw = None;
    let mut rw = None;
    for field in body.split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| format!("malformed width field {field:?}"))?;
        let v: usize = v
            .parse()
            .map_err(|_| format!("width {v:?} is not a non-negative integer"))?;
        match k {
            "challenge_bits" if cw.is_none() => cw = Some(v),
            "response_bits" if rw.is_none() => rw = Some(v),
            _ => return Err(format!("unexpected width field {k:?}")),
        }
    }
    match (cw, rw) {
        (Some(c), Some(r)) => Ok((c, r)),
        _ => Err("width header needs challenge_bits and response_bits".into()),
    }
}

fn parse_row(line: &str, sep: char, cw: usize, rw: usize) -> std::result::Result<Crp, String> {
    let mut cols = line.split(sep).map(str::trim).filter(|s| !s.is_empty());
    let (Some(c), Some(r), None) = (cols.next(), cols.next(), cols.next()) else {
        return Err(format!("expected two columns, found {line:?}"));
    };
    let challenge = Challenge::parse_hex(c, cw).map_err(|e| format!("challenge: {e}"))?;
    let response = Response::parse_hex(r, rw).map_err(|e| format!("response: {e}"))?;
    Ok(Crp {
        challenge,
        response,
    })
}

/// A row skipped by [`import_table_rows`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowRejection {
    /// 1-based line number in the imported text.
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for RowRejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Import headerless rows of `challenge response` words (whitespace or
/// comma separated, Verilog size prefixes allowed). Blank lines and `#`
/// comments are ignored. Malformed rows are skipped and reported; the
/// returned dataset holds only the rows that parsed completely.
pub fn import_table_rows(
    text: &str,
    challenge_width: usize,
    response_width: usize,
) -> Result<(CrpDataset, Vec<RowRejection>)> {
    let mut ds = CrpDataset::new(challenge_width, response_width)?;
    ds.metadata.insert("source", "table-import")?;
    let mut rejected = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let normalized = line.replace(|c: char| c == ',' || c.is_whitespace(), " ");
        match parse_row(&normalized, ' ', challenge_width, response_width) {
            Ok(crp) => ds.pairs.push(crp),
            Err(message) => rejected.push(RowRejection {
                line: i + 1,
                message,
            }),
        }
    }
    Ok((ds, rejected))
}

/// Which simulated device a dataset came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PufKind {
    /// Classical single-output chain with `stages` stages.
    Classical { stages: usize },
    /// `width` parallel chains of `width` stages.
    MultiBit { width: usize },
}

/// Everything needed to regenerate a simulated dataset bit-exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationSpec {
    pub kind: PufKind,
    pub params: DelayParams,
    pub puf_seed: u64,
    pub noise_sigma: f64,
    pub challenge_seed: u64,
    pub noise_seed: Option<u64>,
    pub count: usize,
}

/// A simulated device, either topology.
#[derive(Debug, Clone, PartialEq)]
pub enum SimulatedPuf {
    Classical(ArbiterChain),
    MultiBit(MultiBitPuf),
}

impl Puf for SimulatedPuf {
    fn challenge_width(&self) -> usize {
        match self {
            SimulatedPuf::Classical(p) => p.challenge_width(),
            SimulatedPuf::MultiBit(p) => p.challenge_width(),
        }
    }

    fn response_width(&self) -> usize {
        match self {
            SimulatedPuf::Classical(p) => p.response_width(),
            SimulatedPuf::MultiBit(p) => p.response_width(),
        }
    }

    fn noise_sigma(&self) -> f64 {
        match self {
            SimulatedPuf::Classical(p) => p.noise_sigma(),
            SimulatedPuf::MultiBit(p) => p.noise_sigma(),
        }
    }

    fn respond(&self, challenge: &Challenge, noise_seed: Option<u64>) -> Result<Response> {
        match self {
            SimulatedPuf::Classical(p) => p.respond(challenge, noise_seed),
            SimulatedPuf::MultiBit(p) => p.respond(challenge, noise_seed),
        }
    }
}

impl SimulationSpec {
    pub fn build_puf(&self) -> Result<SimulatedPuf> {
        Ok(match self.kind {
            PufKind::Classical { stages } => SimulatedPuf::Classical(
                ArbiterChain::sample(stages, self.params, self.puf_seed)?
                    .with_noise_sigma(self.noise_sigma)?,
            ),
            PufKind::MultiBit { width } => SimulatedPuf::MultiBit(
                MultiBitPuf::sample(width, self.params, self.puf_seed)?
                    .with_noise_sigma(self.noise_sigma)?,
            ),
        })
    }

    /// Build the device and sample `count` CRPs, recording this spec in the
    /// dataset metadata.
    pub fn generate(&self) -> Result<CrpDataset> {
        let puf = self.build_puf()?;
        let mut ds = generate_dataset(&puf, self.count, self.challenge_seed, self.noise_seed)?;
        ds.metadata = self.to_metadata()?;
        Ok(ds)
    }

    pub fn to_metadata(&self) -> Result<Metadata> {
        let mut m = Metadata::new();
        match self.kind {
            PufKind::Classical { stages } => {
                m.insert("generator", "classical")?;
                m.insert("stages", stages)?;
                m.insert("chains", 1)?;
            }
            PufKind::MultiBit { width } => {
                m.insert("generator", "multibit")?;
                m.insert("stages", width)?;
                m.insert("chains", width)?;
            }
        }
        m.insert("delay_mean", self.params.mean)?;
        m.insert("delay_sigma", self.params.sigma)?;
        m.insert("puf_seed", self.puf_seed)?;
        m.insert("noise_sigma", self.noise_sigma)?;
        m.insert("challenge_seed", self.challenge_seed)?;
        if let Some(s) = self.noise_seed {
            m.insert("noise_seed", s)?;
        }
        m.insert("count", self.count)?;
        Ok(m)
    }

    pub fn from_metadata(meta: &Metadata) -> Result<Self> {
        fn field<T: std::str::FromStr>(meta: &Metadata, key: &str) -> Result<T> {
            let raw = meta
                .get(key)
                .ok_or_else(|| Error::invalid_input(format!("metadata lacks {key}")))?;
            raw.parse()
                .map_err(|_| Error::invalid_input(format!("metadata {key}={raw:?} is invalid")))
        }
        let stages: usize = field(meta, "stages")?;
        let kind = match meta.get("generator") {
            Some("classical") => PufKind::Classical { stages },
            Some("multibit") => PufKind::MultiBit { width: stages },
            other => {
                return Err(Error::invalid_input(format!(
                    "metadata generator {other:?} is not a simulated device"
                )))
            }
        };
        let noise_seed = match meta.get("noise_seed") {
            Some(_) => Some(field(meta, "noise_seed")?),
            None => None,
        };
        Ok(SimulationSpec {
            kind,
            params: DelayParams::new(field(meta, "delay_mean")?, field(meta, "delay_sigma")?)?,
            puf_seed: field(meta, "puf_seed")?,
            noise_sigma: field(meta, "noise_sigma")?,
            challenge_seed: field(meta, "challenge_seed")?,
            noise_seed,
            count: field(meta, "count")?,
        })
    }
}

/// Challenge number `index` of the stream seeded by `challenge_seed`.
pub fn indexed_challenge(width: usize, challenge_seed: u64, index: u64) -> Challenge {
    Challenge::random(width, &mut seed::stream_rng(challenge_seed, index))
}

/// Sample `count` uniformly random challenges (with replacement) and record
/// the device's responses. Output order follows the challenge index, so
/// the result does not depend on how the work is scheduled.
pub fn generate_dataset<P: Puf + Sync>(
    puf: &P,
    count: usize,
    challenge_seed: u64,
    noise_seed: Option<u64>,
) -> Result<CrpDataset> {
    if count == 0 {
        return Err(Error::invalid_parameter("CRP count must be at least 1"));
    }
    let (cw, rw) = (puf.challenge_width(), puf.response_width());
    let pairs = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let challenge = indexed_challenge(cw, challenge_seed, i);
            let response = puf.respond(&challenge, noise_seed.map(|s| seed::derive_seed(s, i)))?;
            Ok(Crp {
                challenge,
                response,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ds = CrpDataset::new(cw, rw)?;
    ds.pairs = pairs;
    ds.metadata.insert("generator", "custom")?;
    ds.metadata.insert("challenge_seed", challenge_seed)?;
    if let Some(s) = noise_seed {
        ds.metadata.insert("noise_seed", s)?;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(kind: PufKind, count: usize) -> SimulationSpec {
        SimulationSpec {
            kind,
            params: DelayParams::default(),
            puf_seed: 42,
            noise_sigma: 0.0,
            challenge_seed: 7,
            noise_seed: None,
            count,
        }
    }

    #[test]
    fn text_round_trip() {
        let ds = small_spec(PufKind::MultiBit { width: 8 }, 50)
            .generate()
            .unwrap();
        let text = ds.to_text();
        assert!(text.starts_with("# puf-crp v1\n# challenge_bits=8 response_bits=8\n"));
        assert_eq!(CrpDataset::from_text(&text).unwrap(), ds);
    }

    #[test]
    fn bad_hex_reports_its_line() {
        let text = "# puf-crp v1\n# challenge_bits=8 response_bits=1\n# meta a=b\n\
                    challenge_hex,response_hex\nAA,1\nBB,0\nZZ,1\n";
        let err = CrpDataset::from_text(text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 7, .. }), "{err}");
        assert!(err.to_string().starts_with("line 7:"));
    }

    #[test]
    fn header_errors() {
        let cases = [
            ("", 1),
            ("# puf-crp v2\n", 1),
            ("# puf-crp v1\n", 2),
            ("# puf-crp v1\n# challenge_bits=8\n", 2),
            ("# puf-crp v1\n# challenge_bits=0 response_bits=1\n", 2),
            (
                "# puf-crp v1\n# challenge_bits=8 response_bits=1\nAA,1\n",
                3,
            ),
            (
                "# puf-crp v1\n# challenge_bits=8 response_bits=1\n# meta x\n",
                3,
            ),
            (
                "# puf-crp v1\n# challenge_bits=8 response_bits=1\nchallenge_hex,response_hex\n\
                 AA,1\nchallenge_hex,response_hex\n",
                5,
            ),
            (
                "# puf-crp v1\n# challenge_bits=8 response_bits=1\nchallenge_hex,response_hex\n\
                 AAA,1\n",
                4,
            ),
            (
                "# puf-crp v1\n# challenge_bits=8 response_bits=1\nchallenge_hex,response_hex\n\
                 AA,1,0\n",
                4,
            ),
        ];
        for (text, line) in cases {
            match CrpDataset::from_text(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn header_only_dataset_is_empty() {
        let ds = CrpDataset::from_text(
            "# puf-crp v1\n# challenge_bits=8 response_bits=1\nchallenge_hex,response_hex\n",
        )
        .unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn push_checks_widths() {
        let mut ds = CrpDataset::new(4, 1).unwrap();
        let bad = Crp {
            challenge: Challenge::from_u64(1, 5),
            response: Response::from_u64(1, 1),
        };
        assert!(ds.push(bad).is_err());
        assert!(ds.is_empty());
    }

    #[test]
    fn generation_is_deterministic_and_regenerable() {
        let spec = SimulationSpec {
            noise_sigma: 0.3,
            noise_seed: Some(5),
            ..small_spec(PufKind::Classical { stages: 16 }, 200)
        };
        let a = spec.generate().unwrap();
        let b = spec.generate().unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let back = SimulationSpec::from_metadata(a.metadata()).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.generate().unwrap(), a);
    }

    #[test]
    fn single_pair_single_bit() {
        let ds = small_spec(PufKind::MultiBit { width: 1 }, 1)
            .generate()
            .unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!((ds.challenge_width(), ds.response_width()), (1, 1));
        assert!(small_spec(PufKind::MultiBit { width: 1 }, 0)
            .generate()
            .is_err());
    }

    #[test]
    fn responses_match_the_device() {
        let spec = small_spec(PufKind::MultiBit { width: 12 }, 100);
        let puf = spec.build_puf().unwrap();
        for crp in spec.generate().unwrap().pairs() {
            assert_eq!(puf.respond(&crp.challenge, None).unwrap(), crp.response);
        }
    }

    #[test]
    fn metadata_keys_validated() {
        let mut m = Metadata::new();
        assert!(m.insert("a b", 1).is_err());
        assert!(m.insert("a=b", 1).is_err());
        assert!(m.insert("k", "x\ny").is_err());
        m.insert("k", 1).unwrap();
        m.insert("k", 2).unwrap();
        assert_eq!(m.get("k"), Some("2"));
        assert_eq!(m.iter().count(), 1);
    }

    #[test]
    fn prefix_and_select() {
        let ds = small_spec(PufKind::MultiBit { width: 4 }, 10)
            .generate()
            .unwrap();
        assert_eq!(ds.prefix(3).pairs(), &ds.pairs()[..3]);
        assert_eq!(ds.prefix(100).len(), 10);
        let picked = ds.select(&[9, 0]);
        assert_eq!(picked.pairs()[0], ds.pairs()[9]);
        assert_eq!(picked.metadata(), ds.metadata());
    }
}
