use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Mutex, RwLock};

use num_bigint::BigInt;
use num_rational::BigRational;

use super::{
    cbar, cbar_box, check_weights, join, prefactor, scale, squared_weight, CoeffError, CoeffKey,
};

const HEADER: &str = "SDEMATH-COEFF v1";

/// Exact coefficients keyed by [`CoeffKey`], optionally backed by a text file.
///
/// Reads take a shared lock; generation and insertion are serialized behind a
/// single writer lock.
#[derive(Debug)]
pub struct CoeffStore {
    path: Option<PathBuf>,
    map: RwLock<BTreeMap<CoeffKey, BigRational>>,
    dirty: AtomicBool,
    writer: Mutex<()>,
    generate: AtomicBool,
    progress: AtomicBool,
    shells: Mutex<HashMap<Vec<u8>, Vec<BigRational>>>,
}

/// Scaled coefficients of one weight tuple over the box `{0..q}^k` for a fixed Δ.
/// Entry `(j1..jk)` sits at `Σ j_i (q+1)^(i-1)`.
#[derive(Clone, Debug)]
pub struct ScaledTable {
    pub weights: Vec<u8>,
    pub q: usize,
    pub values: Vec<f64>,
}

impl ScaledTable {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn get(&self, j: &[usize]) -> f64 {
        let side = self.q + 1;
        let mut idx = 0;
        for &ji in j.iter().rev() {
            idx = idx * side + ji;
        }
        self.values[idx]
    }
}

impl Default for CoeffStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl CoeffStore {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            map: RwLock::new(BTreeMap::new()),
            dirty: AtomicBool::new(false),
            writer: Mutex::new(()),
            generate: AtomicBool::new(true),
            progress: AtomicBool::new(false),
            shells: Mutex::new(HashMap::new()),
        }
    }

    /// Opens a file-backed store, loading the file when it exists.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CoeffError> {
        let path = path.as_ref().to_path_buf();
        let map = if path.exists() {
            load(&path)?
        } else {
            BTreeMap::new()
        };
        Ok(Self {
            path: Some(path),
            map: RwLock::new(map),
            ..Self::in_memory()
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Enables or disables computing coefficients that are not stored yet.
    pub fn set_generation(&self, on: bool) {
        self.generate.store(on, Ordering::Relaxed);
    }

    pub fn generation_enabled(&self) -> bool {
        self.generate.load(Ordering::Relaxed)
    }

    /// Reports on-demand generation on stderr.
    pub fn set_progress(&self, on: bool) {
        self.progress.store(on, Ordering::Relaxed);
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_dirty(&self) -> bool {
        self.dirty.load(Ordering::Relaxed)
    }

    pub fn contains(&self, key: &CoeffKey) -> bool {
        self.map.read().expect("store lock").contains_key(key)
    }

    /// Returns the stored value, computing and caching it on a miss.
    pub fn get(&self, key: &CoeffKey) -> Result<BigRational, CoeffError> {
        if let Some(v) = self.map.read().expect("store lock").get(key) {
            return Ok(v.clone());
        }
        if !self.generation_enabled() {
            return Err(CoeffError::Missing(key.clone()));
        }
        let v = cbar(key)?;
        self.put(key.clone(), v.clone())?;
        Ok(v)
    }

    /// Inserts a value; re-inserting a different value for a stored key is an error.
    pub fn put(&self, key: CoeffKey, value: BigRational) -> Result<(), CoeffError> {
        let _w = self.writer.lock().expect("writer lock");
        let mut map = self.map.write().expect("store lock");
        match map.get(&key) {
            Some(old) if *old != value => Err(CoeffError::Conflict(key)),
            Some(_) => Ok(()),
            None => {
                map.insert(key, value);
                self.dirty.store(true, Ordering::Relaxed);
                Ok(())
            }
        }
    }

    fn box_complete(&self, weights: &[u8], jmax: &[usize]) -> bool {
        let map = self.map.read().expect("store lock");
        let mut idx = vec![0usize; jmax.len()];
        loop {
            let key = CoeffKey {
                weights: weights.to_vec(),
                indices: idx.iter().map(|&j| j as u16).collect(),
            };
            if !map.contains_key(&key) {
                return false;
            }
            if !advance(&mut idx, jmax) {
                return true;
            }
        }
    }

    /// Fills the box `j_i ∈ 0..=jmax[i]` and flushes a file-backed store.
    /// Returns the number of entries in the box.
    pub fn generate_range(&self, weights: &[u8], jmax: &[usize]) -> Result<usize, CoeffError> {
        check_weights(weights)?;
        let count = jmax.iter().map(|&j| j + 1).product();
        if self.box_complete(weights, jmax) {
            return Ok(count);
        }
        if self.progress.load(Ordering::Relaxed) {
            eprintln!(
                "generating coefficients ({}) up to degrees ({}), {count} entries",
                join(weights),
                join(jmax)
            );
        }
        {
            let _w = self.writer.lock().expect("writer lock");
            let mut fresh = Vec::with_capacity(count);
            cbar_box(weights, jmax, |j, v| {
                fresh.push((
                    CoeffKey {
                        weights: weights.to_vec(),
                        indices: j.to_vec(),
                    },
                    v,
                ))
            })?;
            let mut map = self.map.write().expect("store lock");
            for (key, v) in fresh {
                match map.get(&key) {
                    Some(old) if *old != v => return Err(CoeffError::Conflict(key)),
                    Some(_) => {}
                    None => {
                        map.insert(key, v);
                        self.dirty.store(true, Ordering::Relaxed);
                    }
                }
            }
        }
        self.flush()?;
        Ok(count)
    }

    /// Makes sure the cube `{0..q}^k` is present, generating it when allowed.
    pub fn ensure_cube(&self, weights: &[u8], q: usize) -> Result<(), CoeffError> {
        let jmax = vec![q; weights.len()];
        if self.box_complete(weights, &jmax) {
            return Ok(());
        }
        if !self.generation_enabled() {
            let missing = first_missing(&self.map.read().expect("store lock"), weights, &jmax);
            return Err(CoeffError::Missing(missing));
        }
        self.generate_range(weights, &jmax).map(|_| ())
    }

    /// Exact values of the cube `{0..q}^k`, in the order of [`ScaledTable`].
    pub fn cube(
        &self,
        weights: &[u8],
        q: usize,
    ) -> Result<Vec<(CoeffKey, BigRational)>, CoeffError> {
        self.ensure_cube(weights, q)?;
        let jmax = vec![q; weights.len()];
        let map = self.map.read().expect("store lock");
        let mut out = Vec::with_capacity((q + 1).pow(weights.len() as u32));
        let mut idx = vec![0usize; weights.len()];
        loop {
            let key = CoeffKey {
                weights: weights.to_vec(),
                indices: idx.iter().map(|&j| j as u16).collect(),
            };
            let v = map
                .get(&key)
                .cloned()
                .ok_or_else(|| CoeffError::Missing(key.clone()))?;
            out.push((key, v));
            if !advance(&mut idx, &jmax) {
                return Ok(out);
            }
        }
    }

    /// Δ-scaled coefficients of the cube `{0..q}^k`.
    pub fn scaled_table(
        &self,
        weights: &[u8],
        q: usize,
        delta: f64,
    ) -> Result<ScaledTable, CoeffError> {
        let values = self
            .cube(weights, q)?
            .iter()
            .map(|(key, v)| scale(key, v, delta))
            .collect();
        Ok(ScaledTable {
            weights: weights.to_vec(),
            q,
            values,
        })
    }

    /// Writes the store to its file if it changed.
    pub fn flush(&self) -> Result<(), CoeffError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        if !self.is_dirty() {
            return Ok(());
        }
        let _w = self.writer.lock().expect("writer lock");
        let map = self.map.read().expect("store lock");
        save(path, &map)?;
        self.dirty.store(false, Ordering::Relaxed);
        Ok(())
    }

    /// Exact Parseval shell sums `s_0..s_q`, where `s_n` adds
    /// [`squared_weight`] over the keys whose largest degree is `n`. The
    /// partial sum over the cube `{0..q}^k` is `s_0 + .. + s_q`.
    pub fn parseval_shells(
        &self,
        weights: &[u8],
        q: usize,
    ) -> Result<Vec<BigRational>, CoeffError> {
        if let Some(s) = self.shells.lock().expect("shell lock").get(weights) {
            if s.len() > q {
                return Ok(s[..=q].to_vec());
            }
        }
        let mut sums = vec![BigRational::from_integer(BigInt::from(0)); q + 1];
        for (key, v) in self.cube(weights, q)? {
            let n = *key.indices.iter().max().expect("nonempty key") as usize;
            sums[n] += squared_weight(&key, &v);
        }
        let mut cache = self.shells.lock().expect("shell lock");
        let entry = cache.entry(weights.to_vec()).or_default();
        if entry.len() < sums.len() {
            *entry = sums.clone();
        }
        Ok(sums)
    }

    /// All stored keys of one weight tuple.
    pub fn keys_for(&self, weights: &[u8]) -> Vec<CoeffKey> {
        self.map
            .read()
            .expect("store lock")
            .keys()
            .filter(|k| k.weights == weights)
            .cloned()
            .collect()
    }

    /// Scaled value of a single coefficient.
    pub fn scaled(&self, key: &CoeffKey, delta: f64) -> Result<f64, CoeffError> {
        Ok(scale(key, &self.get(key)?, delta))
    }

    /// `Π sqrt(2j+1) / 2^(k+Σl)` for a key, re-exported for callers holding a store.
    pub fn prefactor(key: &CoeffKey) -> f64 {
        prefactor(key)
    }
}

/// Odometer over a box with `j1` varying fastest.
pub(crate) fn advance(idx: &mut [usize], jmax: &[usize]) -> bool {
    for (i, j) in idx.iter_mut().enumerate() {
        if *j < jmax[i] {
            *j += 1;
            return true;
        }
        *j = 0;
    }
    false
}

fn first_missing(
    map: &BTreeMap<CoeffKey, BigRational>,
    weights: &[u8],
    jmax: &[usize],
) -> CoeffKey {
    let mut idx = vec![0usize; jmax.len()];
    loop {
        let key = CoeffKey {
            weights: weights.to_vec(),
            indices: idx.iter().map(|&j| j as u16).collect(),
        };
        if !map.contains_key(&key) || !advance(&mut idx, jmax) {
            return key;
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CoeffError {
    CoeffError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn save(path: &Path, map: &BTreeMap<CoeffKey, BigRational>) -> Result<(), CoeffError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    {
        let file = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        let mut w = BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            writeln!(w, "{HEADER}")?;
            for (key, v) in map {
                writeln!(w, "{key}|{}/{}", v.numer(), v.denom())?;
            }
            w.flush()
        };
        write().map_err(|e| io_err(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn load(path: &Path) -> Result<BTreeMap<CoeffKey, BigRational>, CoeffError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut map = BTreeMap::new();
    let bad = |line: usize, message: String| CoeffError::Format {
        path: path.display().to_string(),
        line,
        message,
    };
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let lineno = n + 1;
        if n == 0 {
            if line.trim() != HEADER {
                return Err(bad(lineno, format!("expected header `{HEADER}`")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('|').collect();
        if parts.len() != 4 {
            return Err(bad(lineno, "expected `k|weights|indices|num/den`".into()));
        }
        let k: usize = parts[0]
            .parse()
            .map_err(|_| bad(lineno, "bad multiplicity".into()))?;
        let weights: Vec<u8> =
            parse_list(parts[1]).ok_or_else(|| bad(lineno, "bad weight tuple".into()))?;
        let indices: Vec<u16> =
            parse_list(parts[2]).ok_or_else(|| bad(lineno, "bad index tuple".into()))?;
        if weights.len() != k {
            return Err(bad(lineno, "multiplicity does not match weights".into()));
        }
        let key = CoeffKey::new(&weights, &indices).map_err(|e| bad(lineno, e.to_string()))?;
        let (num, den) = parts[3]
            .split_once('/')
            .ok_or_else(|| bad(lineno, "expected num/den".into()))?;
        let num: BigInt = num
            .parse()
            .map_err(|_| bad(lineno, "bad numerator".into()))?;
        let den: BigInt = den
            .parse()
            .map_err(|_| bad(lineno, "bad denominator".into()))?;
        if den == BigInt::from(0) {
            return Err(bad(lineno, "zero denominator".into()));
        }
        map.insert(key, BigRational::new(num, den));
    }
    Ok(map)
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Option<Vec<T>> {
    s.split(',').map(|x| x.trim().parse().ok()).collect()
}

#[cfg(test)]
mod tests {
    use super::super::series::ratio;
    use super::*;

    #[test]
    fn get_caches() {
        let store = CoeffStore::in_memory();
        let key = CoeffKey::new(&[0, 0, 0], &[1, 0, 2]).unwrap();
        let a = store.get(&key).unwrap();
        assert!(store.contains(&key));
        store.set_generation(false);
        assert_eq!(store.get(&key).unwrap(), a);
    }

    #[test]
    fn box_of_three_has_27_entries() {
        let store = CoeffStore::in_memory();
        assert_eq!(store.generate_range(&[0, 0, 0], &[2, 2, 2]).unwrap(), 27);
        assert_eq!(store.len(), 27);
    }

    #[test]
    fn file_round_trip_is_exact_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        let store = CoeffStore::open(&path).unwrap();
        store.generate_range(&[0, 1], &[3, 3]).unwrap();
        store.generate_range(&[0, 0, 0], &[1, 1, 1]).unwrap();
        let first = fs::read_to_string(&path).unwrap();
        assert!(first.starts_with("SDEMATH-COEFF v1\n2|0,1|0,0|-8/3\n"));
        let again = CoeffStore::open(&path).unwrap();
        assert_eq!(again.len(), store.len());
        for key in store.keys_for(&[0, 1]) {
            assert_eq!(again.get(&key).unwrap(), store.get(&key).unwrap());
        }
        // Same key set inserted in another order gives identical bytes.
        let path2 = dir.path().join("d.txt");
        let other = CoeffStore::open(&path2).unwrap();
        other.generate_range(&[0, 0, 0], &[1, 1, 1]).unwrap();
        other.generate_range(&[0, 1], &[3, 3]).unwrap();
        assert_eq!(fs::read_to_string(&path2).unwrap(), first);
    }

    #[test]
    fn conflicting_put_is_rejected() {
        let store = CoeffStore::in_memory();
        let key = CoeffKey::new(&[0, 0], &[0, 0]).unwrap();
        store.put(key.clone(), ratio(2, 1)).unwrap();
        store.put(key.clone(), ratio(2, 1)).unwrap();
        assert!(matches!(
            store.put(key, ratio(3, 1)),
            Err(CoeffError::Conflict(_))
        ));
    }

    #[test]
    fn missing_without_generation() {
        let store = CoeffStore::in_memory();
        store.set_generation(false);
        let key = CoeffKey::new(&[1, 0], &[0, 0]).unwrap();
        assert!(matches!(store.get(&key), Err(CoeffError::Missing(_))));
        assert!(matches!(
            store.ensure_cube(&[1, 0], 1),
            Err(CoeffError::Missing(_))
        ));
    }

    #[test]
    fn malformed_files_report_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        fs::write(&path, "SDEMATH-COEFF v1\n2|0,0|0,0|2/1\n2|0,0|1\n").unwrap();
        match CoeffStore::open(&path) {
            Err(CoeffError::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        fs::write(&path, "nope\n").unwrap();
        assert!(matches!(
            CoeffStore::open(&path),
            Err(CoeffError::Format { line: 1, .. })
        ));
    }

    #[test]
    fn scaled_table_layout() {
        let store = CoeffStore::in_memory();
        let t = store.scaled_table(&[0, 1], 2, 0.5).unwrap();
        for j1 in 0..3u16 {
            for j2 in 0..3u16 {
                let key = CoeffKey::new(&[0, 1], &[j1, j2]).unwrap();
                assert_eq!(
                    t.get(&[j1 as usize, j2 as usize]),
                    store.scaled(&key, 0.5).unwrap()
                );
            }
        }
    }
}
