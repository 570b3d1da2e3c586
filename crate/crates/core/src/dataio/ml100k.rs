use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ItemId, Observation, ObservationSet, UserId};

/// A MovieLens-100K style rating file with ids remapped to dense indices.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingDataset {
    pub observations: ObservationSet,
    pub ids: IdMapping,
}

/// Raw ids in index order: `users[k]` is the raw id of `UserId(k)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IdMapping {
    pub users: Vec<u64>,
    pub items: Vec<u64>,
}

pub fn load_ml100k(path: impl AsRef<Path>) -> Result<RatingDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    parse_ml100k(file, &path.display().to_string())
}

/// Parses `user \t item \t rating \t timestamp` lines. Raw ids are mapped
/// to indices in ascending raw-id order.
pub fn parse_ml100k(reader: impl Read, label: &str) -> Result<RatingDataset> {
    let err = |line: usize, msg: String| Error::Parse {
        path: label.to_string(),
        line,
        msg,
    };
    let mut raw = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = n + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(err(lineno, format!("expected 4 tab-separated fields, got {}", fields.len())));
        }
        let user: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| err(lineno, format!("bad user id '{}'", fields[0])))?;
        let item: u64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| err(lineno, format!("bad item id '{}'", fields[1])))?;
        let rating: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| err(lineno, format!("bad rating '{}'", fields[2])))?;
        if !(1.0..=5.0).contains(&rating) {
            return Err(err(lineno, format!("rating {rating} outside [1, 5]")));
        }
        fields[3]
            .trim()
            .parse::<u64>()
            .map_err(|_| err(lineno, format!("bad timestamp '{}'", fields[3])))?;
        raw.push((lineno, user, item, rating));
    }
    if raw.is_empty() {
        return Err(Error::Empty("rating file has no ratings"));
    }
    let dense = |ids: &mut dyn Iterator<Item = u64>| -> BTreeMap<u64, u32> {
        let mut m: BTreeMap<u64, u32> = ids.map(|id| (id, 0)).collect();
        for (k, v) in m.values_mut().enumerate() {
            *v = k as u32;
        }
        m
    };
    let users = dense(&mut raw.iter().map(|r| r.1));
    let items = dense(&mut raw.iter().map(|r| r.2));
    let mut obs = ObservationSet::new(users.len(), items.len());
    for &(lineno, u, i, r) in &raw {
        let o = Observation::new(UserId(users[&u]), ItemId(items[&i]), r, 0);
        obs.insert(o).map_err(|e| match e {
            Error::Duplicate { .. } => err(lineno, format!("duplicate rating for user {u}, item {i}")),
            other => other,
        })?;
    }
    Ok(RatingDataset {
        observations: obs,
        ids: IdMapping {
            users: users.into_keys().collect(),
            items: items.into_keys().collect(),
        },
    })
}
