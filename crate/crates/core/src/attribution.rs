//! Client address attribution by longest-prefix match over an
//! IP-to-ASN snapshot table.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ingest::MeasurementRecord;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AttributionError {
    #[error("malformed CIDR {0:?}")]
    MalformedCidr(String),
    #[error("row {row}: duplicate CIDR {cidr}")]
    DuplicateCidr { row: usize, cidr: Ipv4Cidr },
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },
}

/// An IPv4 network in CIDR notation. Host bits must be zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ipv4Cidr {
    network: u32,
    len: u8,
}

fn mask(len: u8) -> u32 {
    if len == 0 {
        0
    } else {
        u32::MAX << (32 - len as u32)
    }
}

impl Ipv4Cidr {
    pub fn new(addr: Ipv4Addr, len: u8) -> Result<Self, AttributionError> {
        let network = u32::from(addr);
        if len > 32 || network & !mask(len) != 0 {
            return Err(AttributionError::MalformedCidr(format!("{addr}/{len}")));
        }
        Ok(Self { network, len })
    }

    pub fn network(&self) -> Ipv4Addr {
        Ipv4Addr::from(self.network)
    }

    pub fn prefix_len(&self) -> u8 {
        self.len
    }

    pub fn contains(&self, addr: Ipv4Addr) -> bool {
        u32::from(addr) & mask(self.len) == self.network
    }

    /// Number of addresses covered.
    pub fn size(&self) -> u64 {
        1u64 << (32 - self.len as u32)
    }

    /// The `i`-th address of the block (wrapping inside it).
    pub fn nth(&self, i: u64) -> Ipv4Addr {
        Ipv4Addr::from(self.network.wrapping_add((i % self.size()) as u32))
    }
}

impl fmt::Display for Ipv4Cidr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.network(), self.len)
    }
}

impl FromStr for Ipv4Cidr {
    type Err = AttributionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AttributionError::MalformedCidr(s.to_string());
        let (addr, len) = s.trim().split_once('/').ok_or_else(bad)?;
        let addr: Ipv4Addr = addr.parse().map_err(|_| bad())?;
        let len: u8 = len.parse().map_err(|_| bad())?;
        Self::new(addr, len).map_err(|_| bad())
    }
}

impl Serialize for Ipv4Cidr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Ipv4Cidr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Result of a successful lookup.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Attribution {
    pub prefix: Ipv4Cidr,
    pub asn: u32,
    pub owner: String,
    pub country: String,
}

#[derive(Debug, Deserialize)]
struct Row {
    cidr: String,
    asn: String,
    owner: String,
    country: String,
}

/// Immutable prefix table with a per-length exact-match index.
#[derive(Debug, Clone, Default)]
pub struct PrefixTable {
    entries: Vec<Attribution>,
    // index[len] maps masked network -> entry position
    index: Vec<HashMap<u32, usize>>,
}

impl PrefixTable {
    pub fn new() -> Self {
        Self { entries: Vec::new(), index: vec![HashMap::new(); 33] }
    }

    pub fn from_entries(entries: impl IntoIterator<Item = Attribution>) -> Result<Self, AttributionError> {
        let mut t = Self::new();
        for (i, e) in entries.into_iter().enumerate() {
            t.insert(i + 1, e)?;
        }
        Ok(t)
    }

    fn insert(&mut self, row: usize, e: Attribution) -> Result<(), AttributionError> {
        let slot = &mut self.index[e.prefix.len as usize];
        if slot.contains_key(&e.prefix.network) {
            return Err(AttributionError::DuplicateCidr { row, cidr: e.prefix });
        }
        slot.insert(e.prefix.network, self.entries.len());
        self.entries.push(e);
        Ok(())
    }

    pub fn entries(&self) -> &[Attribution] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Most specific entry containing `addr`.
    pub fn lookup(&self, addr: Ipv4Addr) -> Option<&Attribution> {
        if self.entries.is_empty() {
            return None;
        }
        let a = u32::from(addr);
        (0..=32u8).rev().find_map(|len| {
            self.index[len as usize]
                .get(&(a & mask(len)))
                .map(|&i| &self.entries[i])
        })
    }

    /// Writes the table as CSV (`cidr,asn,owner,country`) in insertion order.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["cidr", "asn", "owner", "country"]).expect("in-memory write");
        for e in &self.entries {
            w.write_record([e.prefix.to_string(), e.asn.to_string(), e.owner.clone(), e.country.clone()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

/// Reads a `cidr,asn,owner,country` CSV with a header row.
pub fn load_prefix_table<R: Read>(input: R) -> Result<PrefixTable, AttributionError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut table = PrefixTable::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| AttributionError::MalformedRow { row: row_no, message: e.to_string() })?;
        let prefix: Ipv4Cidr = row.cidr.parse()?;
        let asn = row
            .asn
            .trim_start_matches("AS")
            .parse::<u32>()
            .map_err(|e| AttributionError::MalformedRow { row: row_no, message: format!("asn {:?}: {e}", row.asn) })?;
        table.insert(row_no, Attribution { prefix, asn, owner: row.owner, country: row.country })?;
    }
    Ok(table)
}

/// Output of [`filter_country`].
#[derive(Debug, Clone, Default)]
pub struct CountryFilter<'a> {
    pub kept: Vec<(&'a MeasurementRecord, Attribution)>,
    pub misses: usize,
    pub other_country: usize,
}

/// Keeps records attributed to `country`. Misses are dropped and counted.
pub fn filter_country<'a, I>(records: I, table: &PrefixTable, country: &str) -> CountryFilter<'a>
where
    I: IntoIterator<Item = &'a MeasurementRecord>,
{
    let mut out = CountryFilter::default();
    for r in records {
        match table.lookup(r.client_addr) {
            None => out.misses += 1,
            Some(a) if a.country == country => out.kept.push((r, a.clone())),
            Some(_) => out.other_country += 1,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::tests::sample;

    fn attr(cidr: &str, asn: u32) -> Attribution {
        Attribution { prefix: cidr.parse().unwrap(), asn, owner: format!("AS{asn}"), country: "IR".into() }
    }

    #[test]
    fn cidr_parsing() {
        let c: Ipv4Cidr = "213.233.160.0/19".parse().unwrap();
        assert_eq!(c.prefix_len(), 19);
        assert!(c.contains("213.233.161.5".parse().unwrap()));
        assert!(!c.contains("213.233.192.1".parse().unwrap()));
        assert!("213.233.161.0/19".parse::<Ipv4Cidr>().is_err());
        assert!("1.2.3.4/33".parse::<Ipv4Cidr>().is_err());
        assert!("1.2.3/8".parse::<Ipv4Cidr>().is_err());
        assert!("0.0.0.0/0".parse::<Ipv4Cidr>().unwrap().contains(Ipv4Addr::new(9, 9, 9, 9)));
    }

    #[test]
    fn load_single_row() {
        let csv = "cidr,asn,owner,country\n213.233.160.0/19,12660,Sharif University of Technology,IR\n";
        let t = load_prefix_table(csv.as_bytes()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.entries()[0].asn, 12660);
        assert_eq!(t.entries()[0].owner, "Sharif University of Technology");
    }

    #[test]
    fn duplicate_rejected() {
        let csv = "cidr,asn,owner,country\n91.98.0.0/15,16322,A,IR\n91.98.0.0/15,16322,B,IR\n";
        assert!(matches!(load_prefix_table(csv.as_bytes()), Err(AttributionError::DuplicateCidr { row: 2, .. })));
    }

    #[test]
    fn malformed_rows_rejected() {
        let csv = "cidr,asn,owner,country\n91.98.0.1/15,16322,A,IR\n";
        assert!(matches!(load_prefix_table(csv.as_bytes()), Err(AttributionError::MalformedCidr(_))));
        let csv = "cidr,asn,owner,country\n91.98.0.0/15,x,A,IR\n";
        assert!(matches!(load_prefix_table(csv.as_bytes()), Err(AttributionError::MalformedRow { row: 1, .. })));
    }

    #[test]
    fn empty_table_misses() {
        let t = load_prefix_table("cidr,asn,owner,country\n".as_bytes()).unwrap();
        assert!(t.is_empty());
        assert!(t.lookup(Ipv4Addr::new(1, 1, 1, 1)).is_none());
        let t = load_prefix_table("".as_bytes()).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn longest_match() {
        let t = PrefixTable::from_entries([attr("213.233.160.0/19", 12660), attr("0.0.0.0/0", 0)]).unwrap();
        assert_eq!(t.lookup("213.233.161.5".parse().unwrap()).unwrap().asn, 12660);
        assert_eq!(t.lookup("8.8.8.8".parse().unwrap()).unwrap().asn, 0);

        let t = PrefixTable::from_entries([attr("91.98.0.0/15", 1), attr("91.98.0.0/16", 2)]).unwrap();
        let hit = t.lookup("91.98.5.5".parse().unwrap()).unwrap();
        assert_eq!((hit.asn, hit.prefix.prefix_len()), (2, 16));
        assert_eq!(t.lookup("91.99.5.5".parse().unwrap()).unwrap().asn, 1);
        assert!(t.lookup("10.0.0.1".parse().unwrap()).is_none());
    }

    #[test]
    fn csv_roundtrip_with_commas() {
        let t = PrefixTable::from_entries([Attribution {
            prefix: "213.233.160.0/19".parse().unwrap(),
            asn: 12660,
            owner: "SHARIF-EDU-NET Sharif University of Technology, Tehran,Iran".into(),
            country: "IR".into(),
        }])
        .unwrap();
        let back = load_prefix_table(t.to_csv().as_bytes()).unwrap();
        assert_eq!(back.entries(), t.entries());
    }

    #[test]
    fn country_filter_counts_misses() {
        let t = PrefixTable::from_entries([
            attr("213.233.160.0/19", 12660),
            Attribution { country: "AE".into(), ..attr("5.0.0.0/8", 1) },
        ])
        .unwrap();
        let ir = sample();
        let miss = MeasurementRecord { client_addr: Ipv4Addr::new(10, 0, 0, 1), ..sample() };
        let ae = MeasurementRecord { client_addr: Ipv4Addr::new(5, 1, 1, 1), ..sample() };
        let recs = [ir.clone(), ir.clone(), ir, miss, ae];
        let f = filter_country(recs.iter(), &t, "IR");
        assert_eq!((f.kept.len(), f.misses, f.other_country), (3, 1, 1));
        let f = filter_country(std::iter::empty(), &t, "IR");
        assert!(f.kept.is_empty());
    }
}
