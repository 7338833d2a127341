//! District registry, PV/load profiles and grid models.
//!
//! Profiles are stored as one CSV per district and date with the header
//! `step,pv_mw,load_mult`. Missing profiles are synthesized from a seeded
//! generator and cached, so `get_profile` is a pure function of the store
//! contents and its arguments.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use adn_grid::{check_radial, parse_case, GenKind, GridCase, InjectionProfile, PowerPair};
use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_RESOLUTION: usize = 24;
/// Relative amplitude of the multiplicative noise on synthetic series.
pub const NOISE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("unknown district `{0}`")]
    UnknownDistrict(String),
    #[error("malformed profile file {path}: {message}")]
    MalformedProfileFile { path: PathBuf, message: String },
    #[error("malformed registry: {0}")]
    MalformedRegistry(String),
    #[error("invalid date `{0}`")]
    InvalidDate(String),
    #[error("case for district `{district}` is unusable: {message}")]
    BadCase { district: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistrictProfile {
    pub district: String,
    pub date: NaiveDate,
    pub resolution: usize,
    /// Aggregate PV availability per step (MW).
    pub pv: Vec<f64>,
    /// Multiplier on every bus demand of the district case.
    pub load: Vec<f64>,
}

impl DistrictProfile {
    pub fn step_hours(&self) -> f64 {
        24.0 / self.resolution as f64
    }

    fn check(&self) -> Result<(), String> {
        if self.resolution == 0 {
            return Err("resolution must be at least 1".into());
        }
        if self.pv.len() != self.resolution || self.load.len() != self.resolution {
            return Err(format!(
                "expected {} rows, found pv {} / load {}",
                self.resolution,
                self.pv.len(),
                self.load.len()
            ));
        }
        if let Some(s) = self.pv.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(format!("step {s}: pv_mw must be finite and non-negative"));
        }
        if let Some(s) = self.load.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(format!("step {s}: load_mult must be positive"));
        }
        Ok(())
    }

    /// Injection overrides for one step: every demand scaled by the load
    /// multiplier, PV availability shared among in-service PV units in
    /// proportion to their rating and capped at it.
    pub fn injection(&self, case: &GridCase, step: usize) -> InjectionProfile {
        let mult = self.load[step];
        let mut inj = InjectionProfile::default();
        for b in case.buses() {
            inj.bus_demand.insert(
                b.id,
                PowerPair {
                    p: b.p_demand * mult,
                    q: b.q_demand * mult,
                },
            );
        }
        let rating: f64 = case
            .generators()
            .iter()
            .filter(|g| g.in_service && g.kind == GenKind::Pv)
            .map(|g| g.p_max)
            .sum();
        for (k, g) in case.generators().iter().enumerate() {
            if g.in_service && g.kind == GenKind::Pv && rating > 0.0 {
                let p = (self.pv[step] * g.p_max / rating).min(g.p_max);
                inj.generator_setpoints.insert(k, PowerPair { p, q: 0.0 });
            }
        }
        inj
    }
}

/// Lower-cased name with the word "district" and articles removed.
pub fn normalize_district(name: &str) -> String {
    name.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && *w != "district" && *w != "the")
        .collect::<Vec<_>>()
        .join(" ")
}

const DATE_FORMATS: [&str; 7] = [
    "%Y-%m-%d", "%Y/%m/%d", "%B %d, %Y", "%B %d %Y", "%b %d, %Y", "%b %d %Y", "%d %B %Y",
];

pub fn parse_date(text: &str) -> Result<NaiveDate, DataError> {
    let t = text.trim();
    DATE_FORMATS
        .iter()
        .find_map(|f| NaiveDate::parse_from_str(t, f).ok())
        .ok_or_else(|| DataError::InvalidDate(text.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistrictEntry {
    pub case: PathBuf,
    pub profiles: PathBuf,
    pub pv_capacity_mw: f64,
    #[serde(default = "default_peak_load")]
    pub load_peak_mult: f64,
}

fn default_peak_load() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryFile {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    pub districts: BTreeMap<String, DistrictEntry>,
}

fn default_resolution() -> usize {
    DEFAULT_RESOLUTION
}

struct District {
    entry: DistrictEntry,
    case: Arc<GridCase>,
}

pub struct Datastore {
    seed: u64,
    resolution: usize,
    districts: BTreeMap<String, District>,
    cache: Mutex<HashMap<(String, NaiveDate), Arc<DistrictProfile>>>,
}

impl std::fmt::Debug for Datastore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Datastore")
            .field("districts", &self.districts.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Datastore {
    /// Loads the registry file; paths inside it are relative to its
    /// directory. Every case must parse and be radial.
    pub fn open(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path)?;
        let file: RegistryFile =
            toml::from_str(&text).map_err(|e| DataError::MalformedRegistry(e.to_string()))?;
        let root = path.parent().unwrap_or(Path::new("."));
        Self::from_registry(file, root)
    }

    pub fn from_registry(file: RegistryFile, root: &Path) -> Result<Self, DataError> {
        if file.resolution == 0 {
            return Err(DataError::MalformedRegistry("resolution must be >= 1".into()));
        }
        let mut districts = BTreeMap::new();
        for (name, mut entry) in file.districts {
            entry.case = root.join(&entry.case);
            entry.profiles = root.join(&entry.profiles);
            let bad = |message: String| DataError::BadCase {
                district: name.clone(),
                message,
            };
            let text = std::fs::read_to_string(&entry.case)
                .map_err(|e| bad(format!("{}: {e}", entry.case.display())))?;
            let case = parse_case(&text).map_err(|e| bad(e.to_string()))?;
            let report = check_radial(&case);
            if !report.is_tree {
                return Err(bad(format!(
                    "not radial ({} islands, {} loops)",
                    report.islands.len(),
                    report.loops.len()
                )));
            }
            districts.insert(
                normalize_district(&name),
                District {
                    entry,
                    case: Arc::new(case),
                },
            );
        }
        Ok(Self {
            seed: file.seed,
            resolution: file.resolution,
            districts,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn districts(&self) -> Vec<String> {
        self.districts.keys().cloned().collect()
    }

    /// Canonical registry key for a user-supplied district name.
    pub fn resolve(&self, name: &str) -> Result<String, DataError> {
        let key = normalize_district(name);
        if self.districts.contains_key(&key) {
            Ok(key)
        } else {
            Err(DataError::UnknownDistrict(name.to_string()))
        }
    }

    pub fn get_model(&self, district: &str) -> Result<Arc<GridCase>, DataError> {
        let key = self.resolve(district)?;
        Ok(self.districts[&key].case.clone())
    }

    pub fn pv_capacity(&self, district: &str) -> Result<f64, DataError> {
        let key = self.resolve(district)?;
        Ok(self.districts[&key].entry.pv_capacity_mw)
    }

    pub fn get_profile(
        &self,
        district: &str,
        date: NaiveDate,
    ) -> Result<Arc<DistrictProfile>, DataError> {
        let key = self.resolve(district)?;
        let mut cache = self.cache.lock().unwrap();
        if let Some(p) = cache.get(&(key.clone(), date)) {
            return Ok(p.clone());
        }
        let d = &self.districts[&key];
        let path = d.entry.profiles.join(format!("{date}.csv"));
        let profile = if path.exists() {
            read_profile(&path, &key, date)?
        } else {
            generate_synthetic(
                &key,
                date,
                self.seed,
                self.resolution,
                d.entry.pv_capacity_mw,
                d.entry.load_peak_mult,
            )
        };
        let profile = Arc::new(profile);
        cache.insert((key, date), profile.clone());
        Ok(profile)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileRow {
    step: usize,
    pv_mw: f64,
    load_mult: f64,
}

pub fn read_profile(path: &Path, district: &str, date: NaiveDate) -> Result<DistrictProfile, DataError> {
    let malformed = |message: String| DataError::MalformedProfileFile {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| malformed(e.to_string()))?;
    let headers = reader.headers().map_err(|e| malformed(e.to_string()))?;
    if headers != vec!["step", "pv_mw", "load_mult"] {
        return Err(malformed(format!("unexpected header {headers:?}")));
    }
    let mut pv = Vec::new();
    let mut load = Vec::new();
    for (k, row) in reader.deserialize::<ProfileRow>().enumerate() {
        let row = row.map_err(|e| malformed(e.to_string()))?;
        if row.step != k {
            return Err(malformed(format!("row {k} has step {}", row.step)));
        }
        pv.push(row.pv_mw);
        load.push(row.load_mult);
    }
    let profile = DistrictProfile {
        district: district.to_string(),
        date,
        resolution: pv.len(),
        pv,
        load,
    };
    profile.check().map_err(malformed)?;
    Ok(profile)
}

pub fn write_profile(path: &Path, profile: &DistrictProfile) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| DataError::MalformedProfileFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    for k in 0..profile.resolution {
        w.serialize(ProfileRow {
            step: k,
            pv_mw: profile.pv[k],
            load_mult: profile.load[k],
        })
        .map_err(|e| DataError::MalformedProfileFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    }
    w.flush()?;
    Ok(())
}

fn derive_seed(district: &str, date: NaiveDate, seed: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(district.as_bytes());
    h.update(date.to_string().as_bytes());
    h.update(seed.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Sunrise and sunset hours of the synthetic PV shape.
const SUNRISE: f64 = 6.0;
const SUNSET: f64 = 19.0;

/// PV is a half-sine between sunrise and sunset scaled by `pv_capacity`;
/// load is a base level with morning and evening peaks. Both carry seeded
/// multiplicative noise of at most 5%.
pub fn generate_synthetic(
    district: &str,
    date: NaiveDate,
    seed: u64,
    resolution: usize,
    pv_capacity: f64,
    load_peak: f64,
) -> DistrictProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(district, date, seed));
    let mut pv = Vec::with_capacity(resolution);
    let mut load = Vec::with_capacity(resolution);
    for k in 0..resolution {
        let hour = k as f64 * 24.0 / resolution as f64;
        let sun = if hour > SUNRISE && hour < SUNSET {
            (PI * (hour - SUNRISE) / (SUNSET - SUNRISE)).sin()
        } else {
            0.0
        };
        let e_pv: f64 = rng.random_range(-NOISE..=NOISE);
        pv.push((pv_capacity * sun * (1.0 + e_pv)).clamp(0.0, pv_capacity));
        let shape = 0.6
            + 0.3 * (-((hour - 8.0) / 2.0).powi(2)).exp()
            + 0.45 * (-((hour - 19.0) / 2.5).powi(2)).exp();
        let e_load: f64 = rng.random_range(-NOISE..=NOISE);
        load.push(load_peak * shape * (1.0 + e_load));
    }
    DistrictProfile {
        district: district.to_string(),
        date,
        resolution,
        pv,
        load,
    }
}
