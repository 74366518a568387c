//! Configuration schema, defaults, and resolution.
//!
//! The config file is TOML restricted to flat key-value assignments with
//! dotted section keys (`propagator.nu = 1.0`); classic `[section]` tables
//! parse to the same structure and are accepted too. Every key is optional —
//! an absent file means "all defaults", which is the two-mode desk preset —
//! but unknown keys are a hard error: a typo must never silently fall back to
//! a default. Resolution applies the defaults, cross-validates everything the
//! core types check plus the harness-level couplings (grid resolution of
//! output times, initial support inside the base box), and builds the actual
//! solver inputs so that every constraint violation surfaces before any
//! output file is created.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chaos_scalar::field::SpectralField;
use chaos_scalar::propagator::PropagatorConfig;
use chaos_scalar::velocity::{build_divergence_free_basis, CovarianceSpec, VelocityBasis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

/// Harness error split by exit code: configuration problems exit 2,
/// failed runs (breached invariants, I/O trouble) exit 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Failure(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Failure(m) => m,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Raw deserialization target; field-for-field the documented schema.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    /// Optional study name; when present it must match the subcommand.
    pub kind: Option<String>,
    pub covariance: CovarianceSection,
    pub shell_radius: Option<i16>,
    pub grid: GridSection,
    pub propagator: PropagatorSection,
    pub initial_condition: InitialSection,
    pub master_seed: Option<u64>,
    pub n_paths: Option<usize>,
    pub mc: McSection,
    pub out_dir: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CovarianceSection {
    pub dim: Option<usize>,
    pub alpha: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub amplitude: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub base_radius: Option<i16>,
    /// Galerkin projection box; defaults to `base_radius + max_order · shell_radius`,
    /// the largest radius the truncated system can populate.
    pub growth_cap: Option<i16>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagatorSection {
    pub nu: Option<f64>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub n_time: Option<usize>,
    pub max_order: Option<u32>,
    /// Snapshot times; each must sit on the dt grid. Default: quarter points.
    pub output_times: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    /// One of `single-mode`, `two-mode`, `random-band`.
    pub kind: Option<String>,
    pub wavevector: Option<Vec<i16>>,
    pub amplitude: Option<f64>,
    pub second_wavevector: Option<Vec<i16>>,
    pub second_amplitude: Option<f64>,
    pub radius: Option<i16>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub n_steps: Option<usize>,
}

/// Fully validated run inputs: defaults applied, core structures built,
/// every value echoed verbatim into the manifest.
#[derive(Debug)]
pub struct ResolvedConfig {
    pub kind: Option<String>,
    pub spec: CovarianceSpec,
    pub shell_radius: i16,
    pub basis: VelocityBasis,
    pub base_radius: i16,
    pub propagator: PropagatorConfig,
    pub dt: f64,
    /// Grid node index of each output time, ascending and deduplicated.
    pub output_steps: Vec<usize>,
    pub initial: SpectralField,
    pub master_seed: u64,
    pub n_paths: usize,
    pub mc_n_steps: usize,
    pub out_dir: PathBuf,
    /// `key = value` pairs of the resolved configuration, sorted by key.
    pub echo: Vec<(String, String)>,
}

pub fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read config file {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| config_err(format!("config file {}: {e}", path.display())))
}

fn fmt_f64(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("nan") {
        s.push_str(".0");
    }
    s
}

fn fmt_wavevector(z: &[i16]) -> String {
    let mut s = String::from("[");
    for (i, c) in z.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        let _ = write!(s, "{c}");
    }
    s.push(']');
    s
}

fn fmt_times(ts: &[f64]) -> String {
    let mut s = String::from("[");
    for (i, t) in ts.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push_str(&fmt_f64(*t));
    }
    s.push(']');
    s
}

fn check_wavevector(name: &str, z: &[i16], dim: usize, base_radius: i16) -> Result<(), CliError> {
    if z.len() != dim {
        return Err(config_err(format!(
            "initial_condition.{name} has {} components but covariance.dim = {dim}",
            z.len()
        )));
    }
    let sup = z.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0);
    if i32::from(sup) > i32::from(base_radius) {
        return Err(config_err(format!(
            "initial_condition.{name} = {} lies outside the base grid |z|_inf <= {base_radius}",
            fmt_wavevector(z)
        )));
    }
    Ok(())
}

fn reject_foreign_keys(kind: &str, init: &InitialSection, allowed: &[&str]) -> Result<(), CliError> {
    let present: [(&str, bool); 5] = [
        ("wavevector", init.wavevector.is_some()),
        ("amplitude", init.amplitude.is_some()),
        ("second_wavevector", init.second_wavevector.is_some()),
        ("second_amplitude", init.second_amplitude.is_some()),
        ("radius", init.radius.is_some()),
    ];
    for (key, set) in present {
        if set && !allowed.contains(&key) {
            return Err(config_err(format!(
                "initial_condition.{key} does not apply to kind \"{kind}\""
            )));
        }
    }
    Ok(())
}

/// Pads the 2-d desk default to the configured dimension.
fn default_wavevector(head: &[i16], dim: usize) -> Vec<i16> {
    let mut z = vec![0i16; dim];
    for (o, c) in z.iter_mut().zip(head) {
        *o = *c;
    }
    z
}

pub fn resolve(
    file: FileConfig,
    seed_override: Option<u64>,
    out_dir_override: Option<&Path>,
) -> Result<ResolvedConfig, CliError> {
    let spec = CovarianceSpec {
        dim: file.covariance.dim.unwrap_or(2),
        alpha: file.covariance.alpha.unwrap_or(1.0),
        a: file.covariance.a.unwrap_or(0.0),
        b: file.covariance.b.unwrap_or(1.0),
        amplitude: file.covariance.amplitude.unwrap_or(1.0),
    };
    spec.validate().map_err(|e| config_err(e.to_string()))?;
    let dim = spec.dim;

    let shell_radius = file.shell_radius.unwrap_or(2);
    if shell_radius < 0 {
        return Err(config_err(format!(
            "shell_radius = {shell_radius} invalid: must be >= 0 (0 means no velocity modes)"
        )));
    }
    let basis = if shell_radius == 0 {
        VelocityBasis::empty(dim)
    } else {
        build_divergence_free_basis(&spec, shell_radius)
    }
    .map_err(|e| config_err(e.to_string()))?;

    let nu = file.propagator.nu.unwrap_or(1.0);
    let horizon = file.propagator.horizon.unwrap_or(1.0);
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(config_err(format!(
            "propagator.horizon = {horizon} invalid: must be finite and > 0"
        )));
    }
    let dt = file.propagator.dt.unwrap_or(1.0 / 512.0);
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(config_err(format!("propagator.dt = {dt} invalid: must be finite and > 0")));
    }
    let n_steps_f = horizon / dt;
    let n_steps = n_steps_f.round() as usize;
    if n_steps == 0 || (n_steps as f64 * dt - horizon).abs() > 1e-9 * horizon {
        return Err(config_err(format!(
            "propagator.dt = {dt} does not divide the horizon {horizon}: need horizon/dt to be an integer"
        )));
    }
    if n_steps < 4 {
        return Err(config_err(format!(
            "propagator.dt = {dt} gives only {n_steps} steps: the energy ledger quadrature needs at least 4"
        )));
    }
    let n_time = file.propagator.n_time.unwrap_or(3);
    if n_time == 0 {
        return Err(config_err("propagator.n_time = 0 invalid: need at least one time-basis row"));
    }
    let max_order = file.propagator.max_order.unwrap_or(3);

    let base_radius = file.grid.base_radius.unwrap_or(4);
    if base_radius < 1 {
        return Err(config_err(format!(
            "grid.base_radius = {base_radius} invalid: must be >= 1"
        )));
    }
    let natural_cap = i64::from(base_radius)
        + i64::from(max_order) * i64::from(shell_radius);
    let growth_cap = match file.grid.growth_cap {
        Some(cap) => cap,
        None => i16::try_from(natural_cap).map_err(|_| {
            config_err(format!(
                "implied growth cap {natural_cap} overflows the grid index range; set grid.growth_cap explicitly"
            ))
        })?,
    };
    if growth_cap < base_radius {
        return Err(config_err(format!(
            "grid.growth_cap = {growth_cap} invalid: must be >= grid.base_radius = {base_radius}"
        )));
    }

    let output_times = match &file.propagator.output_times {
        Some(ts) => ts.clone(),
        None => (1..=4).map(|q| horizon * q as f64 / 4.0).collect(),
    };
    if output_times.is_empty() {
        return Err(config_err("propagator.output_times must not be empty"));
    }
    let mut output_steps: Vec<usize> = Vec::with_capacity(output_times.len());
    for &t in &output_times {
        if !(0.0..=horizon * (1.0 + 1e-12)).contains(&t) {
            return Err(config_err(format!(
                "output time {t} outside the horizon [0, {horizon}]"
            )));
        }
        let step = (t / dt).round() as usize;
        if (step as f64 * dt - t).abs() > 1e-9 * horizon.max(1.0) {
            return Err(config_err(format!(
                "output time {t} is not a multiple of dt = {dt}"
            )));
        }
        output_steps.push(step.min(n_steps));
    }
    output_steps.sort_unstable();
    output_steps.dedup();

    let master_seed = seed_override.or(file.master_seed).unwrap_or(42);

    let init_kind = file.initial_condition.kind.as_deref().unwrap_or("two-mode");
    let mut init_echo: Vec<(String, String)> = vec![("initial_condition.kind".into(), format!("\"{init_kind}\""))];
    let initial = match init_kind {
        "single-mode" => {
            reject_foreign_keys(init_kind, &file.initial_condition, &["wavevector", "amplitude"])?;
            let z = file
                .initial_condition
                .wavevector
                .clone()
                .unwrap_or_else(|| default_wavevector(&[1, 0], dim));
            check_wavevector("wavevector", &z, dim, base_radius)?;
            let amp = file.initial_condition.amplitude.unwrap_or(1.0);
            init_echo.push(("initial_condition.wavevector".into(), fmt_wavevector(&z)));
            init_echo.push(("initial_condition.amplitude".into(), fmt_f64(amp)));
            SpectralField::real_cosine(dim, chaos_scalar::field::WaveVector::new(&z), amp)
        }
        "two-mode" => {
            reject_foreign_keys(
                init_kind,
                &file.initial_condition,
                &["wavevector", "amplitude", "second_wavevector", "second_amplitude"],
            )?;
            let z1 = file
                .initial_condition
                .wavevector
                .clone()
                .unwrap_or_else(|| default_wavevector(&[1, 0], dim));
            let z2 = file
                .initial_condition
                .second_wavevector
                .clone()
                .unwrap_or_else(|| default_wavevector(&[1, 2], dim));
            check_wavevector("wavevector", &z1, dim, base_radius)?;
            check_wavevector("second_wavevector", &z2, dim, base_radius)?;
            let a1 = file.initial_condition.amplitude.unwrap_or(1.0);
            let a2 = file.initial_condition.second_amplitude.unwrap_or(0.5);
            init_echo.push(("initial_condition.wavevector".into(), fmt_wavevector(&z1)));
            init_echo.push(("initial_condition.amplitude".into(), fmt_f64(a1)));
            init_echo.push(("initial_condition.second_wavevector".into(), fmt_wavevector(&z2)));
            init_echo.push(("initial_condition.second_amplitude".into(), fmt_f64(a2)));
            let f1 = SpectralField::real_cosine(dim, chaos_scalar::field::WaveVector::new(&z1), a1);
            let f2 = SpectralField::real_cosine(dim, chaos_scalar::field::WaveVector::new(&z2), a2);
            SpectralField::linear_combination(&[(1.0, &f1), (1.0, &f2)])
        }
        "random-band" => {
            reject_foreign_keys(init_kind, &file.initial_condition, &["radius"])?;
            let radius = file.initial_condition.radius.unwrap_or(2);
            if !(0..=base_radius).contains(&radius) {
                return Err(config_err(format!(
                    "initial_condition.radius = {radius} invalid: must lie in 0..=base_radius ({base_radius})"
                )));
            }
            init_echo.push(("initial_condition.radius".into(), format!("{radius}")));
            let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
            SpectralField::random_band(dim, radius, &mut rng)
        }
        other => {
            return Err(config_err(format!(
                "initial_condition.kind = \"{other}\" unknown: expected single-mode, two-mode, or random-band"
            )));
        }
    };

    let propagator = PropagatorConfig { nu, horizon, n_steps, n_time, max_order, growth_cap };
    propagator.validate().map_err(|e| config_err(e.to_string()))?;
    if i64::from(initial.support_radius()) > i64::from(base_radius) {
        return Err(config_err(format!(
            "initial condition support radius {} exceeds grid.base_radius = {base_radius}",
            initial.support_radius()
        )));
    }

    let n_paths = file.n_paths.unwrap_or(2000);
    if n_paths < 2 {
        return Err(config_err(format!(
            "n_paths = {n_paths} invalid: need at least 2 paths to estimate a standard error"
        )));
    }
    let mc_n_steps = file.mc.n_steps.unwrap_or(4096);
    if mc_n_steps < n_time.max(2) {
        return Err(config_err(format!(
            "mc.n_steps = {mc_n_steps} invalid: need at least max(n_time, 2) = {} steps for the exact noise coupling",
            n_time.max(2)
        )));
    }

    let out_dir = out_dir_override
        .map(Path::to_path_buf)
        .or_else(|| file.out_dir.as_deref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    let mut echo: Vec<(String, String)> = vec![
        ("covariance.dim".into(), format!("{dim}")),
        ("covariance.alpha".into(), fmt_f64(spec.alpha)),
        ("covariance.a".into(), fmt_f64(spec.a)),
        ("covariance.b".into(), fmt_f64(spec.b)),
        ("covariance.amplitude".into(), fmt_f64(spec.amplitude)),
        ("shell_radius".into(), format!("{shell_radius}")),
        ("grid.base_radius".into(), format!("{base_radius}")),
        ("grid.growth_cap".into(), format!("{growth_cap}")),
        ("propagator.nu".into(), fmt_f64(nu)),
        ("propagator.horizon".into(), fmt_f64(horizon)),
        ("propagator.dt".into(), fmt_f64(dt)),
        ("propagator.n_steps".into(), format!("{n_steps}")),
        ("propagator.n_time".into(), format!("{n_time}")),
        ("propagator.max_order".into(), format!("{max_order}")),
        ("propagator.output_times".into(), fmt_times(&output_times)),
        ("master_seed".into(), format!("{master_seed}")),
        ("n_paths".into(), format!("{n_paths}")),
        ("mc.n_steps".into(), format!("{mc_n_steps}")),
        ("out_dir".into(), format!("\"{}\"", out_dir.display())),
    ];
    echo.extend(init_echo);
    echo.sort();

    Ok(ResolvedConfig {
        kind: file.kind,
        spec,
        shell_radius,
        basis,
        base_radius,
        propagator,
        dt,
        output_steps,
        initial,
        master_seed,
        n_paths,
        mc_n_steps,
        out_dir,
        echo,
    })
}
