use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trapsim_core::array_ramsey::ArrayRamseyConfig;
use trapsim_core::bloch::{PulseSpec, RelaxationParams};
use trapsim_core::dephasing::{temperature_from_t2star, EchoDecayVariable, EnsembleExperiment, ThermalEnsemble};
use trapsim_core::detection::DetectionParams;
use trapsim_core::register::{ArraySpec, LoadingParams};
use trapsim_core::trap::{FieldParams, ShiftModel, TrapParams};

use crate::error::{CliError, CliResult};

/// Everything a run needs. All keys are SI with unit suffixes; frequencies
/// are angular.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub trap: TrapParams,
    pub field: FieldParams,
    pub shift: ShiftModel,
    pub ensemble: EnsembleConfig,
    pub relax: RelaxationParams,
    pub pulse: PulseSpec,
    pub sequence: SequenceConfig,
    pub array: Option<ArraySpec>,
    pub loading: LoadingParams,
    pub detection: Option<DetectionParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_atoms: usize,
    /// Ensemble temperature; when absent it is derived from `t2_star_s`.
    pub temperature_k: Option<f64>,
    pub t2_star_s: f64,
    pub prepared_fraction: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_atoms: 20_000,
            temperature_k: None,
            t2_star_s: 4.08e-3,
            prepared_fraction: ThermalEnsemble::DEFAULT_PREPARED_FRACTION,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceConfig {
    pub omega_rabi_rad_s: f64,
    /// Drive detuning of the Rabi simulation.
    pub drive_detuning_rad_s: f64,
    /// Fringe detuning to aim the Raman laser at (trap-bottom atoms).
    pub ramsey_detuning_rad_s: f64,
    /// Explicit δ_RL; overrides `ramsey_detuning_rad_s` when set.
    pub raman_detuning_rad_s: Option<f64>,
    pub t_max_s: Option<f64>,
    pub points: Option<usize>,
    pub t1_s: f64,
    pub echo_phase_rad: f64,
    pub visibility_t1_max_s: f64,
    pub visibility_points: usize,
    pub echo_decay_in_total_time: bool,
    pub lineshape_span_rad_s: f64,
    pub lineshape_points: usize,
    /// Pulse length of the lineshape scan; defaults to a π pulse.
    pub pulse_time_s: Option<f64>,
    pub array_raman_detuning_rad_s: f64,
    pub array_t_max_s: f64,
    pub array_points: usize,
    pub aperture_radius_m: Option<f64>,
    pub keep_frames: bool,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            omega_rabi_rad_s: TAU * 995.0,
            drive_detuning_rad_s: 0.0,
            ramsey_detuning_rad_s: TAU * 4814.0,
            raman_detuning_rad_s: None,
            t_max_s: None,
            points: None,
            t1_s: 7.5e-3,
            echo_phase_rad: 0.0,
            visibility_t1_max_s: 40e-3,
            visibility_points: 17,
            echo_decay_in_total_time: false,
            lineshape_span_rad_s: TAU * 10e3,
            lineshape_points: 201,
            pulse_time_s: None,
            array_raman_detuning_rad_s: TAU * 1e3,
            array_t_max_s: 6e-3,
            array_points: 121,
            aperture_radius_m: None,
            keep_frames: true,
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Read frequency flags in Hz instead of rad/s.
    #[arg(long)]
    pub freq_hz: bool,
    /// Rabi frequency.
    #[arg(long, allow_negative_numbers = true)]
    pub omega: Option<f64>,
    /// Rabi drive detuning, or Ramsey fringe detuning for ramsey and echo.
    #[arg(long, allow_negative_numbers = true)]
    pub detuning: Option<f64>,
    /// Raman detuning δ_RL.
    #[arg(long, allow_negative_numbers = true)]
    pub raman_detuning: Option<f64>,
    /// Last sample time, s.
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Number of samples.
    #[arg(long)]
    pub points: Option<usize>,
    /// Echo pulse delay, s.
    #[arg(long)]
    pub t1: Option<f64>,
    /// Ensemble temperature, K.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Number of Monte-Carlo atoms.
    #[arg(long)]
    pub n_atoms: Option<usize>,
    /// Lineshape pulse length, s.
    #[arg(long)]
    pub pulse_time: Option<f64>,
}

impl ExperimentConfig {
    /// Read a JSON config; unknown keys are errors with line positions.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides, kind_uses_fringe_detuning: bool) {
        let freq = |v: f64| if o.freq_hz { TAU * v } else { v };
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = &o.out {
            self.output_dir = Some(p.clone());
        }
        if let Some(w) = o.omega {
            self.sequence.omega_rabi_rad_s = freq(w);
        }
        if let Some(d) = o.detuning {
            if kind_uses_fringe_detuning {
                self.sequence.ramsey_detuning_rad_s = freq(d);
                self.sequence.raman_detuning_rad_s = None;
            } else {
                self.sequence.drive_detuning_rad_s = freq(d);
            }
        }
        if let Some(d) = o.raman_detuning {
            self.sequence.raman_detuning_rad_s = Some(freq(d));
            self.sequence.array_raman_detuning_rad_s = freq(d);
        }
        if let Some(t) = o.t_max {
            self.sequence.t_max_s = Some(t);
            self.sequence.array_t_max_s = t;
        }
        if let Some(n) = o.points {
            self.sequence.points = Some(n);
            self.sequence.array_points = n;
        }
        if let Some(t) = o.t1 {
            self.sequence.t1_s = t;
        }
        if let Some(t) = o.temperature {
            self.ensemble.temperature_k = Some(t);
            self.loading.temperature_k = t;
        }
        if let Some(n) = o.n_atoms {
            self.ensemble.n_atoms = n;
        }
        if let Some(t) = o.pulse_time {
            self.sequence.pulse_time_s = Some(t);
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn echo_decay_variable(&self) -> EchoDecayVariable {
        if self.sequence.echo_decay_in_total_time {
            EchoDecayVariable::TotalTime
        } else {
            EchoDecayVariable::PulseDelay
        }
    }

    /// Ensemble experiment with δ_RL resolved.
    pub fn ensemble_experiment(&self) -> CliResult<EnsembleExperiment> {
        let temperature = match self.ensemble.temperature_k {
            Some(t) => t,
            None => temperature_from_t2star(self.ensemble.t2_star_s, &self.trap, &self.shift.constants)
                .map_err(CliError::config)?,
        };
        let mut ensemble = ThermalEnsemble::new(self.ensemble.n_atoms, temperature, self.trap);
        ensemble.prepared_fraction = self.ensemble.prepared_fraction;
        let mut exp = EnsembleExperiment {
            ensemble,
            shift: self.shift,
            field: self.field,
            raman_detuning: 0.0,
            pulse: self.pulse,
            relax: self.relax,
        };
        exp.raman_detuning = match self.sequence.raman_detuning_rad_s {
            Some(d) => d,
            None => exp.raman_detuning_for(self.sequence.ramsey_detuning_rad_s).map_err(CliError::config)?,
        };
        exp.validate().map_err(CliError::config)?;
        Ok(exp)
    }

    pub fn array_ramsey(&self) -> CliResult<ArrayRamseyConfig> {
        let array = self.array.ok_or_else(|| CliError::Config("array-ramsey needs an \"array\" section".into()))?;
        let detection =
            self.detection.ok_or_else(|| CliError::Config("array-ramsey needs a \"detection\" section".into()))?;
        let cfg = ArrayRamseyConfig {
            array,
            loading: self.loading,
            detection,
            field: self.field,
            shift: self.shift,
            raman_detuning_rad_s: self.sequence.array_raman_detuning_rad_s,
            pulse: self.pulse,
            relax: self.relax,
            prepared_fraction: self.ensemble.prepared_fraction,
            times_s: time_grid(self.sequence.array_t_max_s, self.sequence.array_points)?,
            aperture_radius_m: self.sequence.aperture_radius_m,
            keep_frames: self.sequence.keep_frames,
        };
        cfg.validate().map_err(CliError::config)?;
        Ok(cfg)
    }
}

/// `points` samples evenly spaced from 0 to `t_max`.
pub fn time_grid(t_max: f64, points: usize) -> CliResult<Vec<f64>> {
    if !(t_max.is_finite() && t_max > 0.0) {
        return Err(CliError::Config(format!("t_max must be > 0, got {t_max}")));
    }
    if points < 2 {
        return Err(CliError::Config(format!("need at least 2 points, got {points}")));
    }
    let step = t_max / (points - 1) as f64;
    Ok((0..points).map(|k| k as f64 * step).collect())
}
