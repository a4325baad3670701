//! Named experiment presets. Each is a TOML fragment layered under the
//! user's config, so any key can still be overridden.

use toml::Table;

use crate::config::{parse_document, ConfigError};

const FIG1: &str = r#"
kernel = "power_law"
exponent = 1.0
d = 2
J = 1024
region = [-2.0, 2.0]
exclusion = [-1.0, 1.0]
grid = 32
n_x = 4
sigma = 0.01
sigmas = [1e-2, 1e-3, 1e-4]
seeds = [0, 1, 2, 3, 4]
"#;

const FIG2: &str = r#"
kernel = "fourier"
d = 2
J = 1024
region = [-8.0, 8.0]
exclusion = "none"
grid = 32
n_x = 4
sigma = 0.01
sigmas = [1e-2, 1e-3, 1e-4]
seeds = [0, 1, 2, 3, 4]
"#;

const FIG3: &str = r#"
kernel = "power_law"
exponent = 0.5
d = 3
J = 8192
region = [-2.0, 2.0]
exclusion = [-1.0, 1.0]
grid = 16
n_x = 4
sigma = 1e-4
sigmas = [1e-4, 1e-5, 1e-6]
seeds = [0, 1, 2, 3, 4]
"#;

const FIG4: &str = r#"
kernel = "fourier"
d = 3
J = 8192
region = [-4.0, 4.0]
exclusion = "none"
grid = 16
n_x = 4
sigma = 1e-3
sigmas = [1e-3, 1e-4, 1e-5]
seeds = [0, 1, 2, 3, 4]
"#;

/// Reduced 3D Fourier problem that fits a desktop budget.
const FOURIER_3D_DESK: &str = r#"
kernel = "fourier"
d = 3
J = 2048
region = [-4.0, 4.0]
exclusion = "none"
grid = 8
mode = "per_dimension"
n_x = 4
sigma = 1e-4
sigmas = [1e-4]
seeds = [0]
"#;

const EXACT_2D: &str = r#"
kernel = "fourier"
d = 2
J = 256
region = [-2.0, 2.0]
exclusion = "none"
grid = 16
n_x = 4
sigma = 0.0
"#;

const LOGPOT_2D: &str = r#"
kernel = "log_potential"
d = 2
J = 1024
region = [-2.0, 2.0]
exclusion = [-1.0, 1.0]
grid = 32
n_x = 4
"#;

pub const NAMES: &[&str] = &[
    "fig1-easy",
    "fig1-hard",
    "fig2-easy",
    "fig2-hard",
    "fig3-easy",
    "fig3-hard",
    "fig4-easy",
    "fig4-hard",
    "fourier-3d-desk",
    "exact-2d",
    "logpot-2d",
];

pub fn preset(name: &str) -> Result<Table, ConfigError> {
    let (base, layout) = match name {
        "fig1-easy" => (FIG1, "easy"),
        "fig1-hard" => (FIG1, "hard"),
        "fig2-easy" => (FIG2, "easy"),
        "fig2-hard" => (FIG2, "hard"),
        "fig3-easy" => (FIG3, "easy"),
        "fig3-hard" => (FIG3, "hard"),
        "fig4-easy" => (FIG4, "easy"),
        "fig4-hard" => (FIG4, "hard"),
        "fourier-3d-desk" => (FOURIER_3D_DESK, "easy"),
        "exact-2d" => (EXACT_2D, "easy"),
        "logpot-2d" => (LOGPOT_2D, "easy"),
        _ => {
            return Err(ConfigError::UnknownPreset {
                name: name.to_owned(),
                available: NAMES.join(", "),
            })
        }
    };
    let mut table = parse_document(base)?;
    table.insert("layout".into(), layout.into());
    Ok(table)
}
