//! Experiment configuration (TOML, strict schema) and the scenario it describes.

use std::path::Path;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::bloch::{band_structure, classify, verify_separation, ClassifyOptions, Crystal, DegeneracyInfo, DEFAULT_GAP_TOL};
use crate::drive::{DriveSpec, DrivingProfile};
use crate::effective::{effective_monodromy_bound, matched_drive, EffectiveModel, SpectralEnclosure, DEFAULT_EFFECTIVE_STEPS};
use crate::error::{Error, Result};
use crate::evolve::SignConvention;
use crate::lattice::{full_zone_grid, make_lattice, plane_wave_basis, potential_coefficients, PotentialSpec, Vec2, DEFAULT_MAX_BASIS};
use crate::scalar::Real;
use crate::wavepacket::{InvarianceSetup, ModeFrame, ProbeMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    /// Primitive vectors, one per dimension.
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    /// Plane-wave cutoff `|G| ≤ cutoff · |b₁|`.
    pub cutoff: f64,
    #[serde(default = "default_max_basis")]
    pub max_size: usize,
}

fn default_max_basis() -> usize {
    DEFAULT_MAX_BASIS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Points per reciprocal direction of the full-zone grid.
    pub n: usize,
    /// Bands kept in band-structure output.
    #[serde(default = "default_bands")]
    pub bands: usize,
}

fn default_bands() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    /// `k⋆` in fractional reciprocal coordinates.
    pub k_frac: Vec<f64>,
    /// Zero-based index of the lowest band of the cluster.
    pub band: usize,
    #[serde(default = "one")]
    pub multiplicity: usize,
    /// Separation check radius around `k⋆`, in units of `|b₁|`.
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
}

fn one() -> usize {
    1
}
fn default_radius() -> f64 {
    0.05
}
fn default_gap_tol() -> f64 {
    DEFAULT_GAP_TOL
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Coefficients matched to the full fibers from the degeneracy classification.
    #[default]
    Auto,
    Transport { c: Vec<f64> },
    Dirac { v_d: f64 },
    Schrodinger { half_hessian: Vec<Vec<f64>> },
    MatrixSchrodinger { alpha: f64, gamma: f64, beta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectiveSection {
    #[serde(default)]
    pub model: ModelSpec,
    /// Envelope bandwidth for the enclosure report and validation packets.
    #[serde(default = "default_d0")]
    pub d0: f64,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_eff_steps")]
    pub steps: usize,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
    /// Envelope node spacing for validation packets.
    #[serde(default = "default_eff_h")]
    pub h: f64,
}

fn default_d0() -> f64 {
    0.25
}
fn default_resolution() -> usize {
    16
}
fn default_eff_steps() -> usize {
    DEFAULT_EFFECTIVE_STEPS
}
fn default_checkpoints() -> usize {
    8
}
fn default_eff_h() -> f64 {
    1.0 / 32.0
}

impl Default for EffectiveSection {
    fn default() -> Self {
        EffectiveSection {
            model: ModelSpec::Auto,
            d0: default_d0(),
            resolution: default_resolution(),
            steps: default_eff_steps(),
            checkpoints: default_checkpoints(),
            h: default_eff_h(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub eps: Vec<f64>,
    /// Arc half-width; halfway between `g₀` and `π` when absent.
    #[serde(default)]
    pub g: Option<f64>,
    #[serde(default = "default_l")]
    pub l: f64,
    /// Packet bandwidth in `bl_packet` mode.
    #[serde(default = "default_bl_d0")]
    pub d0: f64,
    /// Envelope node spacing.
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_mode")]
    pub mode: ProbeMode,
    #[serde(default = "default_probes")]
    pub n_probe: usize,
    #[serde(default = "default_power")]
    pub power_steps: usize,
    #[serde(default = "default_steps")]
    pub steps_per_period: usize,
    #[serde(default)]
    pub sign: SignConvention,
}

fn default_l() -> f64 {
    1.0
}
fn default_bl_d0() -> f64 {
    1.0
}
fn default_h() -> f64 {
    1.0 / 16.0
}
fn default_mode() -> ProbeMode {
    ProbeMode::P0Random
}
fn default_probes() -> usize {
    16
}
fn default_power() -> usize {
    8
}
fn default_steps() -> usize {
    800
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lattice: LatticeSection,
    pub potential: PotentialSpec,
    pub basis: BasisSection,
    pub grid: GridSection,
    #[serde(default)]
    pub target: Option<TargetSection>,
    #[serde(default)]
    pub drive: Option<DriveSpec>,
    #[serde(default)]
    pub experiment: Option<ExperimentSection>,
    #[serde(default)]
    pub effective: EffectiveSection,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn dim(&self) -> usize {
        self.lattice.vectors.len()
    }

    pub fn crystal<T: Real>(&self) -> Result<Crystal<T>> {
        let vs: Vec<Vec<T>> = self.lattice.vectors.iter().map(|v| v.iter().map(|&x| T::lit(x)).collect()).collect();
        let lattice = make_lattice(&vs)?;
        let cutoff = T::lit(self.basis.cutoff) * lattice.dual[0].norm();
        let basis = plane_wave_basis(&lattice, cutoff, self.basis.max_size)?;
        let pot = potential_coefficients(&self.potential, &lattice, &basis)?;
        Ok(Crystal::new(lattice, basis, pot))
    }

    pub fn drive<T: Real>(&self) -> Result<DrivingProfile<T>> {
        match &self.drive {
            Some(d) => DrivingProfile::from_spec(d, self.dim()),
            None => Ok(DrivingProfile::zero(self.dim(), T::one(), 1)),
        }
    }

    pub fn target(&self) -> Result<&TargetSection> {
        self.target.as_ref().ok_or_else(|| Error::Config("missing [target] section".into()))
    }

    pub fn experiment(&self) -> Result<&ExperimentSection> {
        self.experiment.as_ref().ok_or_else(|| Error::Config("missing [experiment] section".into()))
    }
}

/// Everything derived from a config around one degeneracy.
pub struct Scenario<T: Real> {
    pub crystal: Crystal<T>,
    pub info: DegeneracyInfo<T>,
    pub frame: ModeFrame<T>,
    pub drive: DrivingProfile<T>,
    pub model: EffectiveModel<T>,
}

impl<T: Real> Scenario<T> {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let crystal = cfg.crystal::<T>()?;
        let t = cfg.target()?;
        if t.k_frac.len() != cfg.dim() {
            return Err(Error::Config(format!("k_frac needs {} entries", cfg.dim())));
        }
        let frac: Vec<T> = t.k_frac.iter().map(|&x| T::lit(x)).collect();
        let k_star = crystal.lattice.frac_to_k(&frac);
        let grid = full_zone_grid(&crystal.lattice, cfg.grid.n)?;
        let nb = (t.band + t.multiplicity + 1).min(crystal.basis.len());
        let bands = band_structure(&crystal, &grid, nb)?;
        let bn = crystal.lattice.dual[0].norm();
        let sep = verify_separation(
            &crystal,
            &bands,
            k_star,
            t.band,
            t.multiplicity,
            T::lit(t.radius) * bn,
            T::lit(t.gap_tol),
        )?;
        let frame = ModeFrame::from_separation(&crystal, &sep)?;
        let info = classify(&crystal, sep, &ClassifyOptions::for_crystal(&crystal))?;
        let model = model_from_spec(&cfg.effective.model, &crystal, &info, &frame)?;
        let drive = cfg.drive::<T>()?;
        Ok(Scenario { crystal, info, frame, drive, model })
    }

    /// Enclosure of the matched effective monodromy at bandwidth `d0`, worst over `eps`.
    pub fn enclosure(&self, d0: T, eps: &[T], resolution: usize, steps: usize) -> Result<SpectralEnclosure> {
        let mut worst: Option<SpectralEnclosure> = None;
        let eps: Vec<T> = if eps.is_empty() { vec![T::one()] } else { eps.to_vec() };
        for &e in &eps {
            let d = matched_drive(&self.drive, e);
            let enc = effective_monodromy_bound(&self.model, self.crystal.dim(), d0, &d, resolution, steps)?;
            if worst.as_ref().is_none_or(|w| enc.g0 > w.g0) {
                worst = Some(enc);
            }
        }
        Ok(worst.expect("at least one ε"))
    }

    pub fn invariance_setup(&self, cfg: &ExperimentConfig, seed: u64) -> Result<(InvarianceSetup<T>, SpectralEnclosure)> {
        let x = cfg.experiment()?;
        let eps: Vec<T> = x.eps.iter().map(|&e| T::lit(e)).collect();
        let d0 = T::lit(x.d0);
        // The window reaches |ξ| < 1; packets reach |ξ| ≤ d0.
        let reach = match x.mode {
            ProbeMode::P0Random => T::one(),
            ProbeMode::BlPacket => d0,
        };
        let enc = self.enclosure(reach, &eps, cfg.effective.resolution, cfg.effective.steps)?;
        let g0 = T::lit(enc.g0);
        let g = x.g.map(T::lit).unwrap_or_else(|| (g0 + T::pi()) * T::lit(0.5));
        let setup = InvarianceSetup {
            frame: self.frame.clone(),
            drive: self.drive.clone(),
            sign: x.sign,
            g,
            g0,
            eps,
            mode: x.mode,
            l: T::lit(x.l),
            d0,
            h: T::lit(x.h),
            n_probe: x.n_probe,
            power_steps: x.power_steps,
            seed,
            steps_per_period: x.steps_per_period,
        };
        setup.validate()?;
        Ok((setup, enc))
    }
}

pub fn model_from_spec<T: Real>(
    spec: &ModelSpec,
    crystal: &Crystal<T>,
    info: &DegeneracyInfo<T>,
    frame: &ModeFrame<T>,
) -> Result<EffectiveModel<T>> {
    let v2 = |v: &[f64]| -> Result<Vec2<T>> {
        match v.len() {
            1 => Ok(Vec2::new(T::lit(v[0]), T::zero())),
            2 => Ok(Vec2::new(T::lit(v[0]), T::lit(v[1]))),
            _ => Err(Error::Config("vectors need 1 or 2 entries".into())),
        }
    };
    let m = match spec {
        ModelSpec::Auto => return EffectiveModel::matched(crystal, info, frame),
        ModelSpec::Transport { c } => EffectiveModel::Transport { c: v2(c)? },
        ModelSpec::Dirac { v_d } => EffectiveModel::Dirac { v_d: T::lit(*v_d), frame: None },
        ModelSpec::Schrodinger { half_hessian } => {
            let mut s = Matrix2::zeros();
            for (i, row) in half_hessian.iter().enumerate().take(2) {
                for (j, &x) in row.iter().enumerate().take(2) {
                    s[(i, j)] = T::lit(x);
                }
            }
            EffectiveModel::Schrodinger { half_hessian: s }
        }
        ModelSpec::MatrixSchrodinger { alpha, gamma, beta } => EffectiveModel::MatrixSchrodinger {
            alpha: T::lit(*alpha),
            gamma: T::lit(*gamma),
            beta: T::lit(*beta),
        },
    };
    m.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(m)
}
