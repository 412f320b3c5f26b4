//! Experiment configs, pipelines, rate fits, reports and plots.
//!
//! A run resolves an [`ExperimentConfig`], dispatches to the pipeline for its
//! [`Kind`], writes CSV/JSON artifacts and SVG plots into the output directory
//! and returns a [`Report`] whose `pass` flag is the conjunction of all asserted
//! checks. Rate fits and other comparisons are recorded with `asserted = false`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use plotters::prelude::*;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::adversary::{self, AdversaryConfig};
use crate::error::{Error, Result};
use crate::fooling::{self, FoolingDocument, FoolingFunction, FoolingSpec};
use crate::geometry::{self, ProjectedBall, TorusPoint};
use crate::integrand::Integrand;
use crate::meanfield::{self, Activation, Checkpoint, FlowConfig, LipschitzClass, ParticleMeasure, RiskSpec};
use crate::quadrature::{self, QuadConfig, QuadratureRule};
use crate::seed;
use crate::sequences::{self, isqrt, ln_big, verify_superexp, SuperExpSeq};

pub const REPORT_FILE: &str = "report.json";
pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const GAPS_CSV: &str = "gaps.csv";
pub const RISK_SVG: &str = "risk.svg";
pub const GAPS_SVG: &str = "gaps.svg";
pub const MOMENT_SVG: &str = "moment.svg";

/// Pipeline selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    #[default]
    Fooling,
    Quadrature,
    Sequence,
    Adversary,
    Train,
    Rates,
}

impl Kind {
    fn needs_smoothness(self) -> bool {
        matches!(self, Kind::Fooling | Kind::Quadrature | Kind::Adversary | Kind::Train)
    }
}

/// One row of the floor-exponent table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorCase {
    pub d: usize,
    pub r: usize,
    pub delta: f64,
}

/// Everything a run needs. Every field has a default, so an empty TOML file is
/// a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub seed: u64,
    pub out: PathBuf,
    pub d: usize,
    pub r: usize,
    /// Defaults to `tau(d, r)`.
    pub theta: Option<f64>,
    /// Rule size for the fooling pipeline.
    pub n: usize,
    /// Rule sizes for the quadrature sweep.
    pub ns: Vec<usize>,
    /// Network width.
    pub m: usize,
    pub activation: Activation,
    /// Activation whose Barron space defines the adversarial constants.
    pub target_activation: Activation,
    /// Decimal terms; defaults to `default_seq(seq_k)` for the sequence kind and
    /// `4, 64, 4096` otherwise.
    pub seq: Option<Vec<String>>,
    pub seq_k: usize,
    /// Number of adversarial terms kept.
    pub terms: usize,
    pub t_end: f64,
    pub checkpoints: usize,
    pub max_step: f64,
    pub grid_per_axis: usize,
    pub mc_samples: usize,
    pub inner_samples: usize,
    pub outer_samples: usize,
    pub probes_per_ball: usize,
    pub plateau_probes: usize,
    pub cr_probes: usize,
    /// Finite-difference step as a fraction of `ε_n`.
    pub fd_step_rel: f64,
    pub candidates: usize,
    pub candidate_width: usize,
    pub gap_samples: usize,
    pub telescoping_probes: usize,
    pub c_up: Option<f64>,
    /// Time window of the rate fit; defaults to the second half of the run.
    pub fit_window: Option<(f64, f64)>,
    /// Trajectory CSV refitted by the rates kind.
    pub trajectory: Option<PathBuf>,
    pub floors: Vec<FloorCase>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: Kind::Fooling,
            seed: 0,
            out: PathBuf::from("out"),
            d: 3,
            r: 1,
            theta: None,
            n: 64,
            ns: vec![16, 64, 256],
            m: 32,
            activation: Activation::Tanh,
            target_activation: Activation::Tanh,
            seq: None,
            seq_k: 3,
            terms: 2,
            t_end: 10.0,
            checkpoints: 40,
            max_step: 1e-3,
            grid_per_axis: 8,
            mc_samples: fooling::DEFAULT_MC_SAMPLES,
            inner_samples: 64,
            outer_samples: 20_000,
            probes_per_ball: 10,
            plateau_probes: 100,
            cr_probes: 50,
            fd_step_rel: 1e-3,
            candidates: 32,
            candidate_width: 4,
            gap_samples: 20_000,
            telescoping_probes: 200,
            c_up: None,
            fit_window: None,
            trajectory: None,
            floors: vec![
                FloorCase { d: 3, r: 1, delta: 0.0 },
                FloorCase { d: 5, r: 1, delta: 0.0 },
                FloorCase { d: 5, r: 1, delta: 1.0 },
            ],
        }
    }
}

fn config_error(field: &str, reason: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{field}`: {reason}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn theta(&self) -> f64 {
        self.theta.unwrap_or_else(|| fooling::tau(self.d, self.r))
    }

    /// Fills in defaulted optional fields so the report records what ran.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if c.kind.needs_smoothness() {
            c.theta = Some(c.theta());
        }
        if c.kind == Kind::Train && c.fit_window.is_none() {
            c.fit_window = Some((c.t_end / 2.0, c.t_end));
        }
        if c.seq.is_none() {
            c.seq = match c.kind {
                Kind::Sequence => default_seq_strings(c.seq_k),
                Kind::Adversary | Kind::Train => Some(vec!["4".into(), "64".into(), "4096".into()]),
                _ => None,
            };
        }
        c
    }

    /// Field-level checks run before any computation.
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(config_error("d", "must be positive"));
        }
        if self.kind.needs_smoothness() {
            if 2 * self.r >= self.d {
                return Err(config_error(
                    "r",
                    format!("need r < d/2, got r = {}, d = {}", self.r, self.d),
                ));
            }
            if self.r == 0 {
                return Err(config_error("r", "must be at least 1"));
            }
            let theta = self.theta();
            let tau = fooling::tau(self.d, self.r);
            if !(theta > 0.0 && theta <= tau * (1.0 + 1e-12)) {
                return Err(config_error("theta", format!("{theta} outside (0, tau = {tau}]")));
            }
        }
        let positive = [
            ("n", self.n),
            ("m", self.m),
            ("seq_k", self.seq_k),
            ("terms", self.terms),
            ("checkpoints", self.checkpoints),
            ("grid_per_axis", self.grid_per_axis),
            ("mc_samples", self.mc_samples),
            ("inner_samples", self.inner_samples),
            ("probes_per_ball", self.probes_per_ball),
            ("plateau_probes", self.plateau_probes),
            ("cr_probes", self.cr_probes),
            ("candidates", self.candidates),
            ("candidate_width", self.candidate_width),
            ("telescoping_probes", self.telescoping_probes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(config_error(name, "must be positive"));
            }
        }
        if self.outer_samples < 1000 {
            return Err(config_error("outer_samples", "must be at least 1000"));
        }
        if self.gap_samples < 2 {
            return Err(config_error("gap_samples", "must be at least 2"));
        }
        if self.ns.is_empty() || self.ns.contains(&0) {
            return Err(config_error("ns", "must be a nonempty list of positive sizes"));
        }
        if self.seq_k > 7 {
            return Err(config_error(
                "seq_k",
                "default terms 2^(k^k) exceed the bit budget beyond k = 7",
            ));
        }
        for (name, v) in [
            ("t_end", self.t_end),
            ("max_step", self.max_step),
            ("fd_step_rel", self.fd_step_rel),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_error(name, "must be positive and finite"));
            }
        }
        if self.fd_step_rel * self.r as f64 >= 1.0 {
            return Err(config_error("fd_step_rel", "need r * fd_step_rel < 1"));
        }
        if let Some(c) = self.c_up {
            if !(c > 0.0) {
                return Err(config_error("c_up", "must be positive"));
            }
        }
        if let Some((lo, hi)) = self.fit_window {
            if !(lo > 0.0 && lo < hi) {
                return Err(config_error("fit_window", "need 0 < t_lo < t_hi"));
            }
        }
        if let Some(seq) = &self.seq {
            if seq.is_empty() {
                return Err(config_error("seq", "must be nonempty"));
            }
            for s in seq {
                s.parse::<BigUint>()
                    .map_err(|_| config_error("seq", format!("`{s}` is not a nonnegative decimal integer")))?;
            }
        }
        if matches!(self.kind, Kind::Adversary | Kind::Train) {
            if self.target_activation.global_lipschitz().is_none() {
                return Err(config_error("target_activation", "must be globally Lipschitz"));
            }
            let len = self.seq.as_ref().map_or(3, Vec::len);
            if self.terms > len {
                return Err(config_error(
                    "terms",
                    format!("{} exceeds the sequence length {len}", self.terms),
                ));
            }
        }
        for f in &self.floors {
            if 2 * f.r >= f.d || !(f.delta >= 0.0) {
                return Err(config_error("floors", format!("need r < d/2 and delta >= 0 in {f:?}")));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the TOML serialization.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }
}

fn default_seq_strings(k: usize) -> Option<Vec<String>> {
    sequences::default_seq(k).ok().map(|s| s.to_decimal())
}

/// One named check in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub description: String,
    /// Whether `pass` enters the report verdict.
    pub asserted: bool,
    pub pass: bool,
    pub details: Value,
}

impl Check {
    fn asserted(name: &str, description: &str, pass: bool, details: Value) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            asserted: true,
            pass,
            details,
        }
    }

    fn reported(name: &str, description: &str, details: Value) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            asserted: false,
            pass: true,
            details,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: Kind,
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub artifacts: Vec<String>,
    pub elapsed_seconds: f64,
}

impl Report {
    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(REPORT_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// One line per check.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{:?} seed={} config={}\n",
            self.kind,
            self.seed,
            &self.config_hash[..12]
        );
        for c in &self.checks {
            let tag = match (c.asserted, c.pass) {
                (false, _) => "INFO",
                (true, true) => "PASS",
                (true, false) => "FAIL",
            };
            s.push_str(&format!("  {tag} {}: {}\n", c.name, c.description));
        }
        s.push_str(if self.pass {
            "verdict: pass\n"
        } else {
            "verdict: fail\n"
        });
        s
    }
}

/// Pipeline output before it is stamped into a [`Report`].
struct Outcome {
    checks: Vec<Check>,
    artifacts: Vec<PathBuf>,
}

/// Validates, runs the pipeline, writes artifacts and `report.json`.
///
/// Config problems surface as [`Error::Config`] before anything is computed.
pub fn run(config: &ExperimentConfig) -> Result<Report> {
    let config = config.resolved();
    config.validate()?;
    let start = Instant::now();
    fs::create_dir_all(&config.out)?;
    let outcome = match config.kind {
        Kind::Fooling => run_fooling(&config)?,
        Kind::Quadrature => run_quadrature(&config)?,
        Kind::Sequence => run_sequence(&config)?,
        Kind::Adversary => run_adversary(&config)?,
        Kind::Train => run_train(&config)?,
        Kind::Rates => run_rates(&config)?,
    };
    let pass = outcome.checks.iter().all(|c| !c.asserted || c.pass);
    let config_path = config.out.join("config.toml");
    fs::write(&config_path, config.to_toml()?)?;
    let mut artifacts: Vec<String> = outcome
        .artifacts
        .iter()
        .chain(std::iter::once(&config_path))
        .map(|p| {
            p.file_name()
                .map_or_else(|| p.display().to_string(), |f| f.to_string_lossy().into_owned())
        })
        .collect();
    artifacts.push(REPORT_FILE.into());
    let report = Report {
        kind: config.kind,
        seed: config.seed,
        config_hash: config.hash()?,
        config: config.clone(),
        checks: outcome.checks,
        pass,
        artifacts,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    };
    fs::write(config.out.join(REPORT_FILE), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

fn quad_config(c: &ExperimentConfig, tag: u64) -> QuadConfig {
    QuadConfig {
        inner_samples: c.inner_samples,
        outer_samples: c.outer_samples,
        seed: seed::derive(c.seed, tag),
    }
}

fn run_fooling(c: &ExperimentConfig) -> Result<Outcome> {
    let theta = c.theta();
    let points = geometry::uniform_points(c.n, c.d, &mut seed::child(c.seed, 10));
    let spec = FoolingSpec::new(points, c.r, theta)?;
    let f = FoolingFunction::new(spec, c.mc_samples, seed::derive(c.seed, 11))?;
    let mut checks = Vec::new();

    let van = fooling::verify_vanishing(&f, c.probes_per_ball, &mut seed::child(c.seed, 12))?;
    checks.push(Check::asserted(
        "vanishing",
        "psi is exactly zero on every projected ball around the points",
        van.violations == 0,
        json!(van),
    ));

    let int = fooling::verify_integral(&f, c.outer_samples, &mut seed::child(c.seed, 13))?;
    checks.push(Check::asserted(
        "integral",
        "Monte Carlo integral of psi plus three standard errors reaches K n^(-r/d)",
        int.pass,
        json!(int),
    ));

    let rho = f.spec().rho();
    let cr = fooling::verify_cr_norm(&f, c.fd_step_rel * rho, c.cr_probes, &mut seed::child(c.seed, 14))?;
    checks.push(Check::asserted(
        "cr_norm",
        "finite-difference derivatives of psi up to order r stay below 1 plus tolerance",
        cr.pass,
        json!(cr),
    ));

    let plateau = plateau_exactness(&f, c.plateau_probes, &mut seed::child(c.seed, 15))?;
    checks.push(plateau);

    let doc = c.out.join("fooling.json");
    fs::write(&doc, FoolingDocument::from_function(&f).to_json()?)?;
    Ok(Outcome {
        checks,
        artifacts: vec![doc],
    })
}

/// Probes far from every point must give exactly `scale`, probes inside a ball
/// exactly 0, both through the shortcut and the full Monte Carlo average.
fn plateau_exactness<R: Rng + ?Sized>(f: &FoolingFunction, probes: usize, rng: &mut R) -> Result<Check> {
    let spec = f.spec();
    let far_radius = 7.0 * spec.eps_n();
    let mut far = Vec::with_capacity(probes);
    let mut attempts = 0usize;
    while far.len() < probes {
        attempts += 1;
        if attempts > 1000 * probes {
            return Err(Error::param(
                "plateau_probes",
                "no room left outside the balls of radius 7 eps_n",
            ));
        }
        let x = geometry::sample_unit_cube(spec.d(), rng);
        if spec.min_center_distance(&x) >= far_radius {
            far.push(TorusPoint::new(x)?);
        }
    }
    let mut inside = Vec::with_capacity(probes);
    for i in 0..probes {
        let ball = ProjectedBall::new(spec.points()[i % spec.n()].clone(), spec.eps_n())?;
        inside.push(geometry::sample_projected_ball(&ball, rng));
    }
    let mut far_bad = 0;
    for x in &far {
        if fooling::eval_fooling(x, f)? != f.scale() || f.eval_mc(x.coords()) != f.scale() {
            far_bad += 1;
        }
    }
    let mut inside_bad = 0;
    for x in &inside {
        if fooling::eval_fooling(x, f)? != 0.0 || f.eval_mc(x.coords()) != 0.0 {
            inside_bad += 1;
        }
    }
    Ok(Check::asserted(
        "plateau",
        "psi equals scale exactly at distance >= 7 eps_n and zero exactly inside the balls",
        far_bad == 0 && inside_bad == 0,
        json!({
            "scale": f.scale(),
            "far_probes": far.len(),
            "far_mismatches": far_bad,
            "inside_probes": inside.len(),
            "inside_mismatches": inside_bad,
        }),
    ))
}

/// Least-squares line through `(ln x, ln y)`: slope, intercept, RMS residual.
pub fn log_log_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::param("points", "need at least two paired values"));
    }
    if let Some(&v) = xs.iter().chain(ys).find(|v| !(**v > 0.0)) {
        return Err(Error::param(
            "points",
            format!("log-log fit needs positive values, got {v}"),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::param("points", "abscissae coincide"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok((slope, intercept, (rss / n).sqrt()))
}

fn run_quadrature(c: &ExperimentConfig) -> Result<Outcome> {
    let theta = c.theta();
    let mut records = Vec::with_capacity(c.ns.len());
    let mut checks = Vec::new();
    for (i, &n) in c.ns.iter().enumerate() {
        let points = geometry::uniform_points(n, c.d, &mut seed::child(c.seed, 100 + i as u64));
        let rule = QuadratureRule::new(points, theta)?;
        let cert = quadrature::worst_case_gap_cr(&rule, c.r, theta, c.mc_samples, &quad_config(c, 200 + i as u64))?;
        let rec = cert.record();
        checks.push(Check::asserted(
            &format!("gap_certificate_n{n}"),
            "(A_n - A)(-psi) plus three standard errors reaches K n^(-r/d), with A_n psi exactly zero",
            rec.pass && cert.an_value == 0.0,
            json!({ "record": rec, "an_value": cert.an_value }),
        ));
        records.push(rec);
    }
    let csv_path = c.out.join(GAPS_CSV);
    quadrature::write_gap_csv(&records, &csv_path)?;
    let mut artifacts = vec![csv_path.clone()];
    if records.len() >= 2 {
        let xs: Vec<f64> = records.iter().map(|r| r.n as f64).collect();
        let ys: Vec<f64> = records.iter().map(|r| r.gap_bound).collect();
        let (slope, _, residual) = log_log_fit(&xs, &ys)?;
        let expected = -(c.r as f64) / c.d as f64;
        checks.push(Check::asserted(
            "gap_bound_power_law",
            "log-log slope of the certified gap bounds equals -r/d",
            (slope - expected).abs() <= 1e-9,
            json!({ "slope": slope, "expected": expected, "residual": residual }),
        ));
        artifacts.push(plot_gaps(&csv_path, &c.out.join(GAPS_SVG))?);
    }
    Ok(Outcome { checks, artifacts })
}

#[derive(Debug, Serialize)]
struct SequenceRow {
    k: usize,
    ln_n: f64,
    ln_m: f64,
    digits: usize,
}

fn parse_terms(strings: &[String]) -> Result<Vec<BigUint>> {
    strings
        .iter()
        .map(|s| {
            s.parse::<BigUint>()
                .map_err(|_| config_error("seq", format!("`{s}` is not an integer")))
        })
        .collect()
}

fn run_sequence(c: &ExperimentConfig) -> Result<Outcome> {
    let terms = parse_terms(c.seq.as_deref().unwrap_or_default())?;
    let ver = verify_superexp(&terms);
    let mut checks = vec![Check::asserted(
        "superexponential",
        "strict growth, first term at least 2, tail sums and extension certificate in exact rationals",
        ver.ok,
        json!({ "first_failure": ver.first_failure.map(|f| format!("{f:?}")) }),
    )];
    let sum: num_rational::BigRational = terms
        .iter()
        .filter(|n| **n > BigUint::from(0u32))
        .map(|n| num_rational::BigRational::new(1.into(), n.clone().into()))
        .sum();
    checks.push(Check::asserted(
        "reciprocal_sum",
        "sum of reciprocals is at most one, exactly",
        !terms.iter().any(|n| *n == BigUint::from(0u32)) && sum <= num_rational::BigRational::one(),
        json!({ "approx": sum.to_f64() }),
    ));
    let rows: Vec<SequenceRow> = terms
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let k = i + 1;
            let ln_n = ln_big(n);
            SequenceRow {
                k,
                ln_n,
                ln_m: isqrt(k) as f64 * ln_n,
                digits: n.to_str_radix(10).len(),
            }
        })
        .collect();
    let path = c.out.join("sequence.csv");
    write_rows(&rows, &path)?;
    Ok(Outcome {
        checks,
        artifacts: vec![path],
    })
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// The verified prefix used for the adversarial construction, plus a report
/// on the whole configured sequence.
fn sequence_prefix(c: &ExperimentConfig) -> Result<(SuperExpSeq, Vec<Check>)> {
    let terms = parse_terms(c.seq.as_deref().unwrap_or_default())?;
    let full = verify_superexp(&terms);
    let mut checks = vec![Check::reported(
        "sequence_full",
        "verification of the whole configured sequence",
        json!({ "ok": full.ok, "first_failure": full.first_failure.map(|f| format!("{f:?}")) }),
    )];
    let prefix = &terms[..c.terms];
    let ver = verify_superexp(prefix);
    checks.push(Check::asserted(
        "sequence_prefix",
        "the terms used by the construction form a super-exponential sequence",
        ver.ok,
        json!({ "terms": c.terms, "first_failure": ver.first_failure.map(|f| format!("{f:?}")) }),
    ));
    if !ver.ok {
        return Err(Error::param(
            "seq",
            format!("prefix of {} terms does not verify", c.terms),
        ));
    }
    Ok((SuperExpSeq::new(prefix.to_vec())?, checks))
}

fn adversary_config(c: &ExperimentConfig) -> AdversaryConfig {
    AdversaryConfig {
        d: c.d,
        r: c.r,
        theta: c.theta(),
        activation: c.target_activation,
        mc_samples: c.mc_samples,
        quad: quad_config(c, 300),
        c_up: c.c_up,
    }
}

#[derive(Debug, Serialize)]
struct TermRow {
    k: usize,
    n: String,
    m: usize,
    sign: i8,
    l_partial: Option<f64>,
    l_partial_stderr: Option<f64>,
    witness_gap: f64,
    witness_gap_stderr: f64,
}

fn run_adversary(c: &ExperimentConfig) -> Result<Outcome> {
    let (seq, mut checks) = sequence_prefix(c)?;
    let cfg = adversary_config(c);
    let target = adversary::partial_target(&seq, c.terms, &cfg)?;
    let consts = *target.consts();
    checks.push(Check::reported(
        "constants",
        "rate constants alpha, beta, c_Y, C_X, C_Z and the functional bound C^Y",
        json!({ "consts": consts, "c_up": target.c_up() }),
    ));

    let sign_ok = target
        .terms()
        .iter()
        .all(|t| t.l_partial.is_none_or(|l| t.sign as f64 * l.value >= 0.0));
    checks.push(Check::asserted(
        "sign_rule",
        "each sign agrees with the measured functional of the previous partial sum",
        sign_ok,
        json!(target
            .terms()
            .iter()
            .map(|t| json!({ "sign": t.sign, "l_partial": t.l_partial }))
            .collect::<Vec<_>>()),
    ));

    checks.push(telescoping_check(
        &target,
        c.telescoping_probes,
        seed::derive(c.seed, 310),
    )?);

    let mut lower = Vec::new();
    let mut lower_ok = true;
    for (i, t) in target.terms().iter().enumerate() {
        let k = i + 1;
        let est = adversary::functional(&target, &t.witness.rule, &quad_config(c, 400 + k as u64))?;
        let bound = adversary::functional_lower_bound(&target, &seq, k)?;
        let measured = t.witness.w_star as f64 * est.value;
        let ok = measured.abs() + 3.0 * est.stderr >= bound;
        lower_ok &= ok;
        lower.push(json!({ "k": k, "measured": measured, "stderr": est.stderr, "bound": bound, "pass": ok }));
    }
    checks.push(Check::asserted(
        "functional_lower_bound",
        "|L_k(phi_K)| plus three standard errors reaches the guaranteed size",
        lower_ok,
        Value::Array(lower),
    ));

    let last = target.len();
    let tails: Vec<Value> = (1..=last)
        .map(|k| {
            Ok(json!({
                "k": k,
                "finite": adversary::finite_tail_condition(&seq, k, last, &consts, target.c_up())?,
                "infinite": adversary::infinite_tail_condition(&seq, k, &consts, target.c_up())?,
            }))
        })
        .collect::<Result<_>>()?;
    checks.push(Check::reported(
        "tail_conditions",
        "tail conditions per index",
        Value::Array(tails),
    ));

    let bound = adversary::gap_lower_bound(last, last, &seq, &consts, target.c_up())?;
    let cap = sequences::time_scales_global(&seq, &consts, last)?.value();
    let cands = adversary::capped_candidates(
        c.candidates,
        c.candidate_width,
        c.d,
        c.target_activation,
        cap,
        &mut seed::child(c.seed, 320),
    )?;
    let gap = adversary::verify_gap(&target, bound.value, &cands, c.gap_samples, seed::derive(c.seed, 321))?;
    checks.push(Check::asserted(
        "approximation_gap",
        "L2 distance from phi_K to every Barron-capped candidate reaches the gap bound minus three standard errors",
        gap.pass,
        json!({ "report": gap, "k": bound.k, "barron_cap": cap, "candidates": cands.len() }),
    ));

    let rows: Vec<TermRow> = target
        .terms()
        .iter()
        .enumerate()
        .map(|(i, t)| TermRow {
            k: i + 1,
            n: t.n.to_str_radix(10),
            m: t.m,
            sign: t.sign,
            l_partial: t.l_partial.map(|e| e.value),
            l_partial_stderr: t.l_partial.map(|e| e.stderr),
            witness_gap: t.witness.gap.value,
            witness_gap_stderr: t.witness.gap.stderr,
        })
        .collect();
    let csv_path = c.out.join("adversary.csv");
    write_rows(&rows, &csv_path)?;
    let doc = c.out.join("target.json");
    fs::write(&doc, serde_json::to_string(&target.document())?)?;
    Ok(Outcome {
        checks,
        artifacts: vec![csv_path, doc],
    })
}

/// `φ_k − φ_{k−1} = (ε_k/n_k) y_{m_k}` pointwise.
fn telescoping_check(target: &adversary::AdversarialTarget, probes: usize, seed_value: u64) -> Result<Check> {
    let mut rng = seed::stream(seed_value);
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let x = geometry::sample_unit_cube(target.dim(), &mut rng);
        for k in 1..=target.len() {
            let diff = target.truncated(k).eval(&x) - target.truncated(k - 1).eval(&x);
            let t = &target.terms()[k - 1];
            worst = worst.max((diff - t.coefficient() * t.witness.eval(&x)).abs());
        }
    }
    Ok(Check::asserted(
        "telescoping",
        "consecutive partial sums differ by exactly the new term",
        worst <= 1e-12,
        json!({ "max_abs_error": worst, "probes": probes }),
    ))
}

/// `(4 + 2δ) r / (d − 2r)`; `δ = 0` gives `4r/(d − 2r)`.
pub fn floor_exponent(d: usize, r: usize, delta: f64) -> Result<f64> {
    if 2 * r >= d {
        return Err(Error::param("r", format!("need r < d/2, got r = {r}, d = {d}")));
    }
    if !(delta >= 0.0) {
        return Err(Error::param("delta", "must be nonnegative"));
    }
    Ok((4.0 + 2.0 * delta) * r as f64 / (d - 2 * r) as f64)
}

/// Growth exponent of the activation's local Lipschitz constant.
pub fn activation_delta(act: Activation) -> f64 {
    match act.lipschitz_class() {
        LipschitzClass::Global { .. } => 0.0,
        LipschitzClass::Local { delta, .. } => delta,
    }
}

/// Least-squares decay rate of the risk over a time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub window: (f64, f64),
    /// Minus the slope of `ln R` against `ln t`.
    pub gamma_hat: f64,
    pub floor_exponent: f64,
    /// RMS residual of the fit in `ln R`.
    pub residual: f64,
    pub points: usize,
}

/// Fits `R(t) ≈ C t^{−γ}` on the checkpoints with `t_lo ≤ t ≤ t_hi`.
pub fn fit_rate(checkpoints: &[Checkpoint], window: (f64, f64), floor_exponent: f64) -> Result<RateFit> {
    let (lo, hi) = window;
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::param("window", "need 0 < t_lo < t_hi"));
    }
    let inside: Vec<&Checkpoint> = checkpoints.iter().filter(|c| c.t >= lo && c.t <= hi).collect();
    if inside.len() < 8 {
        return Err(Error::param(
            "window",
            format!("{} checkpoints in [{lo}, {hi}], need at least 8", inside.len()),
        ));
    }
    if let Some(c) = inside.iter().find(|c| !(c.risk > 0.0)) {
        return Err(Error::NonPositiveRisk { t: c.t, risk: c.risk });
    }
    let ts: Vec<f64> = inside.iter().map(|c| c.t).collect();
    let rs: Vec<f64> = inside.iter().map(|c| c.risk).collect();
    let (slope, _, residual) = log_log_fit(&ts, &rs)?;
    Ok(RateFit {
        window,
        gamma_hat: -slope,
        floor_exponent,
        residual,
        points: inside.len(),
    })
}

pub fn write_trajectory_csv(checkpoints: &[Checkpoint], path: &Path) -> Result<()> {
    write_rows(checkpoints, path)
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<Checkpoint>> {
    let cols = read_columns(path, &["t", "risk", "second_moment", "barron_bound", "barron_direct"])?;
    Ok((0..cols[0].len())
        .map(|i| Checkpoint {
            t: cols[0][i],
            risk: cols[1][i],
            second_moment: cols[2][i],
            barron_bound: cols[3][i],
            barron_direct: cols[4][i],
        })
        .collect())
}

fn run_train(c: &ExperimentConfig) -> Result<Outcome> {
    let (seq, mut checks) = sequence_prefix(c)?;
    let target = adversary::partial_target(&seq, c.terms, &adversary_config(c))?;
    let spec = if c.d <= 3 {
        RiskSpec::population_grid(&target, c.grid_per_axis)?
    } else {
        let budget = c.grid_per_axis.saturating_pow(3);
        RiskSpec::population_samples(&target, budget, &mut seed::child(c.seed, 500))?
    };
    let pi0 = ParticleMeasure::initialize(c.m, c.d, &mut seed::child(c.seed, 501))?;
    let flow = FlowConfig {
        max_step: c.max_step,
        ..FlowConfig::uniform(c.t_end, c.checkpoints)
    };
    let traj = meanfield::flow_integrate(&pi0, c.activation, &spec, &flow)?;
    let n0 = traj.initial().second_moment;
    let r0 = traj.initial().risk;

    checks.push(Check::asserted(
        "no_blow_up",
        "parameters stay finite over the whole run",
        !traj.blow_up,
        json!({ "steps": traj.steps, "halvings": traj.halvings, "initial_step": traj.initial_step, "min_step": traj.min_step }),
    ));
    let growth = meanfield::check_second_moment_growth(&traj, n0, r0);
    checks.push(Check::asserted(
        "second_moment_growth",
        "N(pi^t) <= 2 (N(pi^0) + R(pi^0) t) at every checkpoint",
        growth.pass,
        json!(growth),
    ));
    let barron = meanfield::check_barron_growth(&traj, c.d, n0, r0);
    checks.push(Check::asserted(
        "barron_growth",
        "Barron bound <= (sqrt d + 2)(N(pi^0) + R(pi^0) t) + 1/2 at every checkpoint",
        barron.pass,
        json!(barron),
    ));
    let chain = meanfield::check_barron_chain(&traj);
    checks.push(Check::asserted(
        "barron_chain",
        "direct Barron estimate <= moment-based Barron bound at every checkpoint",
        chain.pass,
        json!(chain),
    ));
    let diss = meanfield::check_dissipation(&traj);
    checks.push(Check::asserted(
        "dissipation",
        "risk is nonincreasing across checkpoints within tolerance",
        diss.pass,
        json!(diss),
    ));

    let floor = floor_exponent(c.d, c.r, activation_delta(c.activation))?;
    let window = c.fit_window.unwrap_or((c.t_end / 2.0, c.t_end));
    let fit = match fit_rate(&traj.checkpoints, window, floor) {
        Ok(f) => json!(f),
        Err(e) => json!({ "error": e.to_string() }),
    };
    checks.push(Check::reported(
        "rate_fit",
        "fitted risk decay exponent next to the floor exponent, not asserted",
        fit,
    ));

    let csv_path = c.out.join(TRAJECTORY_CSV);
    write_trajectory_csv(&traj.checkpoints, &csv_path)?;
    let mut artifacts = vec![csv_path.clone()];
    artifacts.extend(emit_trajectory_plots(&csv_path, &c.out, floor)?);
    Ok(Outcome { checks, artifacts })
}

#[derive(Debug, Serialize)]
struct FloorRow {
    d: usize,
    r: usize,
    delta: f64,
    floor_exponent: f64,
}

fn run_rates(c: &ExperimentConfig) -> Result<Outcome> {
    let rows: Vec<FloorRow> = c
        .floors
        .iter()
        .map(|f| {
            Ok(FloorRow {
                d: f.d,
                r: f.r,
                delta: f.delta,
                floor_exponent: floor_exponent(f.d, f.r, f.delta)?,
            })
        })
        .collect::<Result<_>>()?;
    let path = c.out.join("rates.csv");
    write_rows(&rows, &path)?;
    let mut checks = vec![Check::reported(
        "floors",
        "floor exponents (4 + 2 delta) r / (d - 2r)",
        json!(rows),
    )];
    let mut artifacts = vec![path];
    if let Some(traj_path) = &c.trajectory {
        let cps = read_trajectory_csv(traj_path)?;
        let floor = if 2 * c.r < c.d {
            floor_exponent(c.d, c.r, activation_delta(c.activation))?
        } else {
            f64::NAN
        };
        let t_end = cps.last().map_or(0.0, |p| p.t);
        let fit = fit_rate(&cps, c.fit_window.unwrap_or((t_end / 2.0, t_end)), floor)?;
        checks.push(Check::reported(
            "rate_fit",
            "fitted risk decay exponent next to the floor exponent, not asserted",
            json!(fit),
        ));
        let svg = c.out.join(RISK_SVG);
        artifacts.push(plot_risk(traj_path, &svg, floor)?);
    }
    Ok(Outcome { checks, artifacts })
}

/// Reads the named numeric columns of a headed CSV file.
pub fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rd = csv::Reader::from_path(path)?;
    let headers = rd.headers()?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h == *n)
                .ok_or_else(|| Error::MissingColumn((*n).into()))
        })
        .collect::<Result<_>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for rec in rd.records() {
        let rec = rec?;
        for (col, &i) in cols.iter_mut().zip(&idx) {
            let field = rec.get(i).unwrap_or("");
            let v = field
                .parse::<f64>()
                .map_err(|_| Error::Plot(format!("{}: `{field}` is not a number", path.display())))?;
            col.push(v);
        }
    }
    if cols[0].is_empty() {
        return Err(Error::Empty(format!("{} has no rows", path.display())));
    }
    Ok(cols)
}

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::Plot(e.to_string())
}

fn positive_range(values: impl IntoIterator<Item = f64>) -> Result<(f64, f64)> {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| *v > 0.0 && v.is_finite())
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !(lo <= hi) {
        return Err(Error::Empty("no positive values to plot".into()));
    }
    Ok((lo / 1.5, hi * 1.5))
}

/// Log-log risk against time with a reference line of slope `−floor` through
/// the first checkpoint after `t = 0`.
pub fn plot_risk(csv_path: &Path, svg: &Path, floor: f64) -> Result<PathBuf> {
    let cols = read_columns(csv_path, &["t", "risk"])?;
    let pts: Vec<(f64, f64)> = cols[0]
        .iter()
        .zip(&cols[1])
        .filter(|(t, r)| **t > 0.0 && **r > 0.0)
        .map(|(t, r)| (*t, *r))
        .collect();
    if pts.is_empty() {
        return Err(Error::Empty("no checkpoint with t > 0 and positive risk".into()));
    }
    let (xlo, xhi) = positive_range(pts.iter().map(|p| p.0))?;
    let (ylo, yhi) = positive_range(pts.iter().map(|p| p.1))?;
    let ylo = ylo / 10.0;
    let root = SVGBackend::new(svg, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("risk along the flow", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d((xlo..xhi).log_scale(), (ylo..yhi).log_scale())
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("t")
        .y_desc("risk")
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(LineSeries::new(pts.iter().copied(), &BLUE))
        .map_err(plot_err)?
        .label("risk")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLUE));
    if floor.is_finite() {
        let (t0, r0) = pts[0];
        let line: Vec<(f64, f64)> = (0..=100)
            .map(|i| t0 * (xhi / t0).powf(i as f64 / 100.0))
            .map(|t| (t, r0 * (t / t0).powf(-floor)))
            .filter(|(_, y)| *y >= ylo)
            .collect();
        chart
            .draw_series(LineSeries::new(line, &RED))
            .map_err(plot_err)?
            .label(format!("slope -{floor:.3}"))
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(svg.to_path_buf())
}

/// Second moment against the envelope `2 (N0 + R0 t)`.
pub fn plot_moment(csv_path: &Path, svg: &Path) -> Result<PathBuf> {
    let cols = read_columns(csv_path, &["t", "risk", "second_moment"])?;
    let (n0, r0) = (cols[2][0], cols[1][0]);
    let moment: Vec<(f64, f64)> = cols[0].iter().zip(&cols[2]).map(|(t, n)| (*t, *n)).collect();
    let envelope: Vec<(f64, f64)> = cols[0].iter().map(|t| (*t, 2.0 * (n0 + r0 * t))).collect();
    let xhi = cols[0].iter().fold(0.0f64, |m, v| m.max(*v)).max(f64::MIN_POSITIVE);
    let yhi = envelope.iter().chain(&moment).fold(0.0f64, |m, p| m.max(p.1)) * 1.1;
    let root = SVGBackend::new(svg, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("second moment and its envelope", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(0.0..xhi, 0.0..yhi.max(f64::MIN_POSITIVE))
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("t")
        .y_desc("N")
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(LineSeries::new(moment, &BLUE))
        .map_err(plot_err)?
        .label("N(t)")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLUE));
    chart
        .draw_series(LineSeries::new(envelope, &RED))
        .map_err(plot_err)?
        .label("2 (N0 + R0 t)")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED));
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(svg.to_path_buf())
}

/// Certified gaps against `n` with the curve `K n^{−r/d}`.
pub fn plot_gaps(csv_path: &Path, svg: &Path) -> Result<PathBuf> {
    let cols = read_columns(csv_path, &["n", "d", "r", "gap_estimate", "gap_bound"])?;
    let (d, r) = (cols[1][0], cols[2][0]);
    let k = cols[4][0] * cols[0][0].powf(r / d);
    let (xlo, xhi) = positive_range(cols[0].iter().copied())?;
    let (ylo, yhi) = positive_range(cols[3].iter().chain(&cols[4]).copied())?;
    let root = SVGBackend::new(svg, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("quadrature gap certificates", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d((xlo..xhi).log_scale(), (ylo..yhi).log_scale())
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("n")
        .y_desc("gap")
        .draw()
        .map_err(plot_err)?;
    let curve: Vec<(f64, f64)> = (0..=100)
        .map(|i| xlo * (xhi / xlo).powf(i as f64 / 100.0))
        .map(|n| (n, k * n.powf(-r / d)))
        .collect();
    chart
        .draw_series(LineSeries::new(curve, &RED))
        .map_err(plot_err)?
        .label("K n^(-r/d)")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED));
    chart
        .draw_series(
            cols[0]
                .iter()
                .zip(&cols[3])
                .filter(|(_, g)| **g > 0.0)
                .map(|(n, g)| Circle::new((*n, *g), 4, BLUE.filled())),
        )
        .map_err(plot_err)?
        .label("measured gap")
        .legend(|(x, y)| Circle::new((x + 10, y), 4, BLUE.filled()));
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(svg.to_path_buf())
}

fn emit_trajectory_plots(csv_path: &Path, dir: &Path, floor: f64) -> Result<Vec<PathBuf>> {
    Ok(vec![
        plot_risk(csv_path, &dir.join(RISK_SVG), floor)?,
        plot_moment(csv_path, &dir.join(MOMENT_SVG))?,
    ])
}

/// Regenerates every plot whose CSV is present in `dir`.
pub fn emit_plots(dir: &Path, floor: Option<f64>) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let traj = dir.join(TRAJECTORY_CSV);
    if traj.exists() {
        out.extend(emit_trajectory_plots(&traj, dir, floor.unwrap_or(f64::NAN))?);
    }
    let gaps = dir.join(GAPS_CSV);
    if gaps.exists() {
        out.push(plot_gaps(&gaps, &dir.join(GAPS_SVG))?);
    }
    Ok(out)
}

/// Reloads a finished run, regenerates its plots and returns the stored report.
pub fn rerender(dir: &Path) -> Result<Report> {
    let report = Report::load(dir)?;
    let c = &report.config;
    let floor = floor_exponent(c.d, c.r, activation_delta(c.activation)).ok();
    emit_plots(dir, floor)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cps(risk: impl Fn(f64) -> f64, count: usize) -> Vec<Checkpoint> {
        (0..=count)
            .map(|i| {
                let t = i as f64 * 0.5;
                Checkpoint {
                    t,
                    risk: risk(t),
                    second_moment: 1.0 + 0.1 * t,
                    barron_bound: 2.0,
                    barron_direct: 1.0,
                }
            })
            .collect()
    }

    #[test]
    fn empty_toml_gives_defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        let c = ExperimentConfig::from_toml("kind = \"train\"\nm = 8\nactivation = \"relu\"\nfit_window = [1.0, 2.0]")
            .unwrap();
        assert_eq!((c.kind, c.m, c.activation), (Kind::Train, 8, Activation::Relu));
        assert_eq!(c.fit_window, Some((1.0, 2.0)));
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn config_errors_are_field_level() {
        assert!(matches!(
            ExperimentConfig::from_toml("bogus = 1"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_toml("activation = \"gelu\""),
            Err(Error::Config(_))
        ));
        let bad = [
            ExperimentConfig {
                r: 2,
                ..Default::default()
            },
            ExperimentConfig {
                theta: Some(0.5),
                ..Default::default()
            },
            ExperimentConfig {
                mc_samples: 0,
                ..Default::default()
            },
            ExperimentConfig {
                outer_samples: 10,
                ..Default::default()
            },
            ExperimentConfig {
                seq: Some(vec!["x".into()]),
                kind: Kind::Sequence,
                ..Default::default()
            },
            ExperimentConfig {
                kind: Kind::Adversary,
                target_activation: Activation::Square,
                ..Default::default()
            },
            ExperimentConfig {
                kind: Kind::Adversary,
                terms: 4,
                ..Default::default()
            },
        ];
        for c in bad {
            let e = c.resolved().validate().unwrap_err();
            assert!(matches!(e, Error::Config(_)), "{e}");
        }
        // sequence runs do not need r < d/2
        assert!(ExperimentConfig {
            kind: Kind::Sequence,
            r: 5,
            ..Default::default()
        }
        .resolved()
        .validate()
        .is_ok());
    }

    #[test]
    fn invalid_config_is_rejected_before_any_output() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("never");
        let c = ExperimentConfig {
            r: 2,
            out: out.clone(),
            ..Default::default()
        };
        assert!(matches!(run(&c), Err(Error::Config(_))));
        assert!(!out.exists());
    }

    #[test]
    fn sequence_run_passes_and_is_stamped() {
        let dir = tempfile::tempdir().unwrap();
        let c = ExperimentConfig {
            kind: Kind::Sequence,
            out: dir.path().to_path_buf(),
            ..Default::default()
        };
        let rep = run(&c).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.config.seq.as_ref().unwrap().len(), 3);
        assert_eq!(rep.config_hash, c.resolved().hash().unwrap());
        assert_eq!(rep.config_hash.len(), 64);
        let loaded = Report::load(dir.path()).unwrap();
        assert_eq!(loaded.checks, rep.checks);
        let bad = ExperimentConfig {
            seq: Some(vec!["4".into(), "64".into(), "4096".into()]),
            ..c
        };
        assert!(!run(&bad).unwrap().pass);
    }

    #[test]
    fn fit_rate_recovers_power_laws() {
        let f = fit_rate(&cps(|t| 5.0 * t.powi(-2), 40), (1.0, 20.0), 4.0).unwrap();
        assert!((f.gamma_hat - 2.0).abs() < 1e-9);
        assert!(f.residual < 1e-12);
        assert_eq!(f.floor_exponent, 4.0);
        assert_eq!(f.points, 39);
        assert!(fit_rate(&cps(|t| t.powi(-2), 40), (1.0, 3.0), 4.0).is_err());
        assert!(fit_rate(&cps(|t| t.powi(-2), 40), (3.0, 1.0), 4.0).is_err());
        let zero = fit_rate(&cps(|t| if t > 5.0 { 0.0 } else { 1.0 }, 40), (1.0, 20.0), 4.0);
        assert!(matches!(zero, Err(Error::NonPositiveRisk { .. })));
    }

    #[test]
    fn floor_exponents() {
        assert_eq!(floor_exponent(3, 1, 0.0).unwrap(), 4.0);
        assert!((floor_exponent(5, 1, 0.0).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(floor_exponent(5, 1, 1.0).unwrap(), 2.0);
        assert!(floor_exponent(4, 2, 0.0).is_err());
        assert_eq!(activation_delta(Activation::Square), 1.0);
        assert_eq!(activation_delta(Activation::ReluPower(3)), 2.0);
        assert_eq!(activation_delta(Activation::Relu), 0.0);
    }

    #[test]
    fn log_log_fit_is_exact_on_power_laws() {
        let xs = [16.0, 64.0, 256.0];
        let ys: Vec<f64> = xs.iter().map(|n: &f64| 0.0078 * n.powf(-1.0 / 3.0)).collect();
        let (slope, intercept, res) = log_log_fit(&xs, &ys).unwrap();
        assert!((slope + 1.0 / 3.0).abs() < 1e-12);
        assert!((intercept - 0.0078f64.ln()).abs() < 1e-12);
        assert!(res < 1e-12);
        assert!(log_log_fit(&[1.0], &[1.0]).is_err());
        assert!(log_log_fit(&[1.0, 2.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn plots_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join(TRAJECTORY_CSV);
        write_trajectory_csv(&cps(|t| (1.0 + t).powi(-2), 20), &csv_path).unwrap();
        assert_eq!(read_trajectory_csv(&csv_path).unwrap().len(), 21);
        let made = emit_plots(dir.path(), Some(4.0)).unwrap();
        assert_eq!(made.len(), 2);
        for p in made {
            let s = fs::read_to_string(p).unwrap();
            assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
            assert!(!s.contains("href"));
        }

        let missing = dir.path().join("missing.csv");
        fs::write(&missing, "t,loss\n1,2\n").unwrap();
        assert!(
            matches!(plot_risk(&missing, &dir.path().join("x.svg"), 1.0), Err(Error::MissingColumn(c)) if c == "risk")
        );
        let empty = dir.path().join("empty.csv");
        fs::write(&empty, "t,risk,second_moment\n").unwrap();
        assert!(matches!(
            plot_moment(&empty, &dir.path().join("y.svg")),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn gap_plot_has_points_and_curve() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(GAPS_CSV);
        let recs: Vec<GapRow> = [16usize, 64, 256]
            .iter()
            .map(|&n| GapRow {
                n,
                d: 3,
                r: 1,
                gap_estimate: 0.006 * (n as f64 / 16.0).powf(-1.0 / 3.0),
                gap_bound: 0.0031 * (n as f64 / 16.0).powf(-1.0 / 3.0),
            })
            .collect();
        write_rows(&recs, &path).unwrap();
        let svg = plot_gaps(&path, &dir.path().join(GAPS_SVG)).unwrap();
        let s = fs::read_to_string(svg).unwrap();
        assert_eq!(s.matches("<circle").count(), 3 + 1);
    }

    #[derive(Serialize)]
    struct GapRow {
        n: usize,
        d: usize,
        r: usize,
        gap_estimate: f64,
        gap_bound: f64,
    }
}
