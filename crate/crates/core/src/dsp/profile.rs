use std::fmt;
use std::path::Path;

use crate::config::KeyValues;
use crate::error::{ensure, Error, Result};
use crate::raster::MultibandImage;

const INDEX_EPS: f64 = 1e-9;

/// Normalized-difference index `(b_a - b_b) / (b_a + b_b + eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexPair {
    pub a: usize,
    pub b: usize,
}

impl fmt::Display for IndexPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.a, self.b)
    }
}

impl std::str::FromStr for IndexPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("index pair {:?} is not a:b", s)))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad band number in index pair {:?}", s)))
        };
        Ok(IndexPair {
            a: parse(a)?,
            b: parse(b)?,
        })
    }
}

/// Sensor geometry and MTF model.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorProfile {
    pub name: String,
    pub bands: usize,
    pub ratio: usize,
    pub gnyq_ms: Vec<f64>,
    pub gnyq_pan: f64,
    pub bit_depth: u16,
    pub index_recipe: Vec<IndexPair>,
}

impl SensorProfile {
    /// Built-in presets: `ik`, `ge1` (4 bands: B, G, R, NIR) and `wv2`, `wv3`
    /// (8 bands: coastal, B, G, Y, R, red edge, NIR1, NIR2).
    pub fn preset(name: &str) -> Result<Self> {
        let four = |name: &str| SensorProfile {
            name: name.to_string(),
            bands: 4,
            ratio: 4,
            gnyq_ms: vec![0.3; 4],
            gnyq_pan: 0.15,
            bit_depth: 11,
            // NDVI (NIR, R), NDWI (G, NIR)
            index_recipe: vec![IndexPair { a: 3, b: 2 }, IndexPair { a: 1, b: 3 }],
        };
        let eight = |name: &str| SensorProfile {
            name: name.to_string(),
            bands: 8,
            ratio: 4,
            gnyq_ms: vec![0.3; 8],
            gnyq_pan: 0.15,
            bit_depth: 11,
            // NDVI, NDWI, red-edge (NIR1, RE), coastal (NIR2, C)
            index_recipe: vec![
                IndexPair { a: 6, b: 4 },
                IndexPair { a: 2, b: 6 },
                IndexPair { a: 6, b: 5 },
                IndexPair { a: 7, b: 0 },
            ],
        };
        match name {
            "ik" | "ge1" => Ok(four(name)),
            "wv2" | "wv3" => Ok(eight(name)),
            other => Err(Error::Config(format!("unknown sensor preset {:?}", other))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.ratio >= 2, Config, "ratio must be >= 2, got {}", self.ratio);
        ensure!(
            self.bands == 4 || self.bands == 8,
            Config,
            "band count must be 4 or 8, got {}",
            self.bands
        );
        ensure!(
            self.gnyq_ms.len() == self.bands,
            Config,
            "{} MS Nyquist gains for {} bands",
            self.gnyq_ms.len(),
            self.bands
        );
        for &g in self.gnyq_ms.iter().chain(std::iter::once(&self.gnyq_pan)) {
            ensure!(g > 0.0 && g < 1.0, Config, "Nyquist gain {} outside (0, 1)", g);
        }
        ensure!(
            self.index_recipe.len() == self.index_count(),
            Config,
            "{}-band sensors use {} indices, recipe has {}",
            self.bands,
            self.index_count(),
            self.index_recipe.len()
        );
        for p in &self.index_recipe {
            ensure!(
                p.a < self.bands && p.b < self.bands,
                Config,
                "index {} references a missing band",
                p
            );
        }
        Ok(())
    }

    /// Number of radiometric-index channels: 2 for 4-band, 4 for 8-band sensors.
    pub fn index_count(&self) -> usize {
        self.bands / 2
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let base = match kv.get_str("preset") {
            Some(p) => Some(Self::preset(p)?),
            None => None,
        };
        let bands = match (&base, kv.get::<usize>("bands")?) {
            (_, Some(b)) => b,
            (Some(p), None) => p.bands,
            (None, None) => return Err(Error::Config("missing key \"bands\"".into())),
        };
        let fallback = |field: &str| Error::Config(format!("missing key {:?}", field));
        let profile = SensorProfile {
            name: kv
                .get_str("name")
                .map(str::to_string)
                .or_else(|| base.as_ref().map(|p| p.name.clone()))
                .ok_or_else(|| fallback("name"))?,
            bands,
            ratio: match kv.get("ratio")? {
                Some(r) => r,
                None => base.as_ref().map(|p| p.ratio).ok_or_else(|| fallback("ratio"))?,
            },
            gnyq_ms: match kv.get_list("gnyq_ms")? {
                Some(v) if v.len() == 1 => vec![v[0]; bands],
                Some(v) => v,
                None => base.as_ref().map(|p| p.gnyq_ms.clone()).ok_or_else(|| fallback("gnyq_ms"))?,
            },
            gnyq_pan: match kv.get("gnyq_pan")? {
                Some(g) => g,
                None => base.as_ref().map(|p| p.gnyq_pan).ok_or_else(|| fallback("gnyq_pan"))?,
            },
            bit_depth: match kv.get("bit_depth")? {
                Some(b) => b,
                None => base.as_ref().map(|p| p.bit_depth).unwrap_or(11),
            },
            index_recipe: match kv.get_list("indices")? {
                Some(v) => v,
                None => base
                    .as_ref()
                    .map(|p| p.index_recipe.clone())
                    .ok_or_else(|| fallback("indices"))?,
            },
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let join = |v: Vec<String>| v.join(",");
        let mut kv = KeyValues::default();
        kv.insert("name", &self.name);
        kv.insert("bands", self.bands);
        kv.insert("ratio", self.ratio);
        kv.insert("gnyq_ms", join(self.gnyq_ms.iter().map(|g| g.to_string()).collect()));
        kv.insert("gnyq_pan", self.gnyq_pan);
        kv.insert("bit_depth", self.bit_depth);
        kv.insert("indices", join(self.index_recipe.iter().map(|p| p.to_string()).collect()));
        kv
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_key_values(&KeyValues::load(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_key_values().to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Per-pixel normalized-difference indices, one output band per recipe entry.
pub fn radiometric_indices(ms: &MultibandImage, profile: &SensorProfile) -> Result<MultibandImage> {
    ensure!(
        ms.bands() == profile.bands,
        ShapeMismatch,
        "MS has {} bands, profile {} expects {}",
        ms.bands(),
        profile.name,
        profile.bands
    );
    let n = ms.plane_len();
    let mut data = Vec::with_capacity(n * profile.index_recipe.len());
    for p in &profile.index_recipe {
        ensure!(
            p.a < ms.bands() && p.b < ms.bands(),
            InvalidArgument,
            "index {} references a missing band",
            p
        );
        let (a, b) = (ms.band(p.a), ms.band(p.b));
        data.extend(a.iter().zip(b).map(|(&x, &y)| {
            let (x, y) = (x as f64, y as f64);
            ((x - y) / (x + y + INDEX_EPS)).clamp(-1.0, 1.0) as f32
        }));
    }
    MultibandImage::from_data(ms.width(), ms.height(), profile.index_recipe.len(), ms.bit_depth(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn presets_are_valid_and_sized_like_table_one() {
        for (name, bands, idx) in [("ik", 4, 2), ("ge1", 4, 2), ("wv2", 8, 4), ("wv3", 8, 4)] {
            let p = SensorProfile::preset(name).unwrap();
            p.validate().unwrap();
            assert_eq!(p.bands, bands);
            assert_eq!(p.index_recipe.len(), idx);
            // PAN + MS + indices = 7 or 13 input channels
            assert_eq!(1 + bands + idx, if bands == 4 { 7 } else { 13 });
        }
        assert!(SensorProfile::preset("spot").is_err());
    }

    #[test]
    fn equal_bands_give_zero_index() {
        let p = SensorProfile::preset("ge1").unwrap();
        let ms = MultibandImage::filled(5, 5, 4, 11, 300.0);
        let idx = radiometric_indices(&ms, &p).unwrap();
        assert_eq!(idx.bands(), 2);
        assert!(idx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn indices_are_bounded() {
        let p = SensorProfile::preset("wv2").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = (0..8 * 64).map(|_| rng.random_range(0.0..2047.0)).collect();
        let ms = MultibandImage::from_data(8, 8, 8, 11, data).unwrap();
        let idx = radiometric_indices(&ms, &p).unwrap();
        assert_eq!(idx.bands(), 4);
        assert!(idx.data().iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn missing_band_in_recipe_is_an_error() {
        let mut p = SensorProfile::preset("ge1").unwrap();
        p.index_recipe[0] = IndexPair { a: 5, b: 0 };
        assert!(p.validate().is_err());
        let ms = MultibandImage::filled(2, 2, 4, 11, 1.0);
        assert!(radiometric_indices(&ms, &p).is_err());
    }

    #[test]
    fn profile_text_round_trip() {
        let mut p = SensorProfile::preset("wv3").unwrap();
        p.gnyq_ms[2] = 0.27;
        let back = SensorProfile::from_key_values(&KeyValues::parse(&p.to_key_values().to_text()).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn profile_overrides_preset() {
        let kv = KeyValues::parse("preset=ge1\nname=custom\ngnyq_ms=0.25\ngnyq_pan=0.11\n").unwrap();
        let p = SensorProfile::from_key_values(&kv).unwrap();
        assert_eq!(p.name, "custom");
        assert_eq!(p.gnyq_ms, vec![0.25; 4]);
        assert_eq!(p.gnyq_pan, 0.11);
        let bad = KeyValues::parse("preset=ge1\ngnyq_pan=1.5\n").unwrap();
        assert!(SensorProfile::from_key_values(&bad).is_err());
    }
}
