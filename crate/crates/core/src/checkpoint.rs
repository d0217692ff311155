//! Self-describing checkpoint files: a plain-text `key=value` header, a blank
//! line, then one or more binary parameter containers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use stcnn_tensor::ParameterStore;

use crate::{Error, Result};

const MAGIC_LINE: &str = "stcnn-checkpoint 1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub header: Vec<(String, String)>,
    /// Named containers; the first is conventionally `params`.
    pub stores: Vec<(String, ParameterStore)>,
}

impl Checkpoint {
    pub fn new(header: Vec<(String, String)>) -> Self {
        Self {
            header,
            stores: Vec::new(),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Checkpoint(format!("header lacks {key:?}")))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.require(key)?;
        v.parse()
            .map_err(|_| Error::Checkpoint(format!("{key}={v:?} does not parse")))
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.header.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.header.push((key, value)),
        }
    }

    pub fn store(&self, name: &str) -> Option<&ParameterStore> {
        self.stores.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn take_store(&mut self, name: &str) -> Option<ParameterStore> {
        let i = self.stores.iter().position(|(n, _)| n == name)?;
        Some(self.stores.remove(i).1)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{MAGIC_LINE}")?;
        for (k, v) in &self.header {
            if k.contains(['=', '\n']) || v.contains('\n') || k == "stores" {
                return Err(Error::Checkpoint(format!("unrepresentable header entry {k:?}")));
            }
            writeln!(w, "{k}={v}")?;
        }
        let names: Vec<&str> = self.stores.iter().map(|(n, _)| n.as_str()).collect();
        writeln!(w, "stores={}", names.join(","))?;
        writeln!(w)?;
        for (_, s) in &self.stores {
            s.write_to(w)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl BufRead) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != MAGIC_LINE {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let mut header = Vec::new();
        let mut names = Vec::new();
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(Error::Checkpoint("header is not terminated".into()));
            }
            let text = line.trim_end_matches(['\n', '\r']);
            if text.is_empty() {
                break;
            }
            let (k, v) = text
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("bad header line {text:?}")))?;
            if k == "stores" {
                names = v.split(',').filter(|n| !n.is_empty()).map(String::from).collect();
            } else {
                header.push((k.to_string(), v.to_string()));
            }
        }
        let mut stores = Vec::new();
        for n in names {
            stores.push((n, ParameterStore::read_from(r)?));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Checkpoint("trailing bytes after the last container".into()));
        }
        Ok(Self { header, stores })
    }

    /// Writes to a temporary sibling first, then renames.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("partial");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            self.write_to(&mut w)?;
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}
