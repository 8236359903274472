//! Run configuration: scene, engine and experiment sections in TOML.

use std::path::Path;

use interlace::lattice::{ball, Configuration, Point, SiteSet};
use interlace::scene::{Scene, SceneOptions};
use interlace::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// The set `K1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum K1Spec {
    /// The origin.
    Singleton,
    /// Lattice ball of the given radius around the origin.
    Ball { radius: f64 },
    /// Explicit sites.
    Sites { sites: Vec<Vec<i32>> },
}

impl K1Spec {
    pub fn build(&self, dim: usize) -> Result<SiteSet> {
        match self {
            K1Spec::Singleton => Ok(SiteSet::singleton(Point::origin(dim))),
            K1Spec::Ball { radius } => ball(Point::origin(dim), *radius),
            K1Spec::Sites { sites } => {
                if sites.is_empty() {
                    return Err(Error::EmptySet);
                }
                for s in sites {
                    if s.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            found: s.len(),
                        });
                    }
                }
                Ok(SiteSet::new(sites.iter().map(|s| Point::new(s))))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub k1: K1Spec,
    /// Translation taking `K1` to `K2`; its length fixes the dimension.
    pub xhat: Vec<i32>,
    pub u: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineSpec {
    pub seed: u64,
    pub replicas: u64,
    /// Worker threads; 0 lets the pool choose.
    pub threads: usize,
    pub quadrature_order: usize,
    pub memory_lean: bool,
}

impl Default for EngineSpec {
    fn default() -> EngineSpec {
        EngineSpec {
            seed: 1,
            replicas: 10_000,
            threads: 0,
            quadrature_order: SceneOptions::default().quadrature_order,
            memory_lean: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    /// Distances between `K1` and `K2` along the first axis; each rung
    /// replaces `xhat`.
    pub distances: Vec<i32>,
    /// Levels `u` for the level comparison of `experiment scaling`.
    pub levels: Vec<f64>,
    /// Radii of ball-shaped `K1` for the capacity ladder of
    /// `experiment scaling`.
    pub radii: Vec<f64>,
    /// Distance per unit radius on the capacity ladder.
    pub distance_per_radius: f64,
    /// Truth tables over `2^|K1|` and `2^|K2|` subsets for `experiment
    /// covariance`; bit `i` of the index is the `i`-th site.
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
}

impl Default for ExperimentSpec {
    fn default() -> ExperimentSpec {
        ExperimentSpec {
            distances: vec![33, 65, 129, 257],
            levels: vec![1.0, 4.0],
            radii: Vec::new(),
            distance_per_radius: 16.0,
            f1: vec![0.0, 1.0],
            f2: vec![0.0, 1.0],
        }
    }
}

/// Full configuration of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneSpec,
    #[serde(default)]
    pub engine: EngineSpec,
    #[serde(default)]
    pub experiment: ExperimentSpec,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            scene: SceneSpec {
                k1: K1Spec::Singleton,
                xhat: vec![9, 0, 0],
                u: 1.0,
            },
            engine: EngineSpec::default(),
            experiment: ExperimentSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
            line: e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Checks every scene the run will build.
    pub fn validate(&self) -> Result<()> {
        self.configuration()?;
        for &d in &self.experiment.distances {
            self.configuration_at(d)?;
        }
        for &u in &self.experiment.levels {
            Configuration::new(self.k1()?, self.xhat(), u)?;
        }
        for &r in &self.experiment.radii {
            self.capacity_rung(r)?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.scene.xhat.len()
    }

    pub fn k1(&self) -> Result<SiteSet> {
        self.scene.k1.build(self.dim())
    }

    pub fn xhat(&self) -> Point {
        Point::new(&self.scene.xhat)
    }

    pub fn options(&self) -> SceneOptions {
        SceneOptions {
            quadrature_order: self.engine.quadrature_order,
            memory_lean: self.engine.memory_lean,
            ..SceneOptions::default()
        }
    }

    pub fn configuration(&self) -> Result<Configuration> {
        Configuration::new(self.k1()?, self.xhat(), self.scene.u)
    }

    /// The scene with `K2` at distance `dist` from `K1` along the first axis.
    pub fn configuration_at(&self, dist: i32) -> Result<Configuration> {
        let k1 = self.k1()?;
        let width = axis_width(&k1);
        let mut x = vec![0; self.dim()];
        x[0] = dist + width;
        Configuration::new(k1, Point::new(&x), self.scene.u)
    }

    /// Ball of radius `r` with `K2` at distance `distance_per_radius * r`.
    pub fn capacity_rung(&self, r: f64) -> Result<Configuration> {
        let k1 = ball(Point::origin(self.dim()), r)?;
        let width = axis_width(&k1);
        let mut x = vec![0; self.dim()];
        x[0] = (self.experiment.distance_per_radius * r).round() as i32 + width;
        Configuration::new(k1, Point::new(&x), self.scene.u)
    }

    pub fn scene(&self) -> Result<Scene> {
        Scene::new(self.configuration()?, self.options())
    }

    pub fn scene_at(&self, dist: i32) -> Result<Scene> {
        Scene::new(self.configuration_at(dist)?, self.options())
    }

    /// SHA-256 of the canonical serialization with the thread count cleared,
    /// which does not affect any output.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.engine.threads = 0;
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Extent of a set along the first axis.
fn axis_width(k: &SiteSet) -> i32 {
    let xs = k.iter().map(|p| p.coords()[0]);
    xs.clone().max().unwrap_or(0) - xs.min().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[scene]
xhat = [12, 0, 0]
u = 2.0
k1 = { kind = "ball", radius = 1.0 }

[engine]
seed = 7
replicas = 100

[experiment]
distances = [16, 32]
"#;

    #[test]
    fn round_trip() {
        let c = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.engine.seed, 7);
        assert_eq!(c.engine.threads, 0);
        assert_eq!(c.scene.k1, K1Spec::Ball { radius: 1.0 });
        let again = RunConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        let d = RunConfig::default();
        assert_eq!(RunConfig::parse(&d.to_toml()).unwrap(), d);
    }

    #[test]
    fn hash_ignores_threads_only() {
        let a = RunConfig::parse(SAMPLE).unwrap();
        let mut b = a.clone();
        b.engine.threads = 8;
        assert_eq!(a.hash(), b.hash());
        b.engine.seed = 8;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn rungs_sit_at_the_requested_distance() {
        let c = RunConfig::parse(SAMPLE).unwrap();
        let cfg = c.configuration_at(16).unwrap();
        let d = interlace::lattice::set_distance(cfg.k1(), cfg.k2()).unwrap();
        assert_eq!(d, 16.0);
    }

    #[test]
    fn invalid_scenes_are_rejected() {
        let bad = SAMPLE.replace("[12, 0, 0]", "[2, 0, 0]");
        let e = RunConfig::parse(&bad).unwrap_err();
        assert_eq!(e.kind(), "invalid_configuration");
        let e = RunConfig::parse(
            "[scene]\nxhat = [9, 0, 0]\nu = 1.0\nk1 = { kind = \"singleton\" }\nbogus = 1\n",
        )
        .unwrap_err();
        assert_eq!(e.kind(), "parse");
        let e =
            RunConfig::parse("[scene]\nxhat = [9, 0]\nu = 1.0\nk1 = { kind = \"singleton\" }\n")
                .unwrap_err();
        assert_eq!(e.kind(), "transient_dimension_required");
    }
}
