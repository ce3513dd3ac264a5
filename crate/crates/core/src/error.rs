use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The trap wavelength lies between the D1 and D2 lines, so the effective
    /// detuning has no well-defined sign.
    #[error("ambiguous detuning sign: wavelength {wavelength_m} m lies between the D1 and D2 lines")]
    AmbiguousSign { wavelength_m: f64 },

    #[error("unbound ensemble: k_B*T = {thermal_k} K is not below the trap depth {depth_k} K")]
    UnboundEnsemble { thermal_k: f64, depth_k: f64 },

    #[error("energy {energy_k} K (k_B units) is outside the harmonic model for depth {depth_k} K")]
    OutOfModel { energy_k: f64, depth_k: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
