//! Supervised dataset assembly: run the forward solvers on sampled
//! inputs, pair the stride-subsampled observation with the fine-grid
//! causal field, inject noise, split, and persist.
//!
//! All field values are rounded through f32 at assembly time (the stored
//! precision), so save/load round trips are bit-exact.

use crate::error::{Error, Result};
use crate::mesh::{subsample, Field2D, Mesh2D};
use crate::randomfields::{binarize, gaussian_bumps, sample_grf, BumpSpec, GrfSpec};
use crate::rng::{derived_stream, Stream};
use crate::solvers::{solve_darcy, solve_navier_stokes, solve_wave, DarcySpec, NsSpec, WaveSpec};
use crate::tensorfile;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;
pub const DARCY_HI: f64 = 12.0;
pub const DARCY_LO: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    Wave,
    NavierStokes,
    Darcy,
}

impl Problem {
    pub fn name(&self) -> &'static str {
        match self {
            Problem::Wave => "wave",
            Problem::NavierStokes => "navier_stokes",
            Problem::Darcy => "darcy",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "wave" => Ok(Problem::Wave),
            "navier_stokes" | "ns" => Ok(Problem::NavierStokes),
            "darcy" => Ok(Problem::Darcy),
            other => Err(Error::invalid_arg(format!("unknown problem '{other}'"))),
        }
    }
}

/// Snapshot of the stochastic-input and solver parameters a dataset was
/// generated with.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemParams {
    Wave { wave: WaveSpec, bumps: BumpSpec },
    NavierStokes { ns: NsSpec, grf: GrfSpec },
    Darcy { forcing: f64, grf: GrfSpec },
}

impl ProblemParams {
    pub fn problem(&self) -> Problem {
        match self {
            ProblemParams::Wave { .. } => Problem::Wave,
            ProblemParams::NavierStokes { .. } => Problem::NavierStokes,
            ProblemParams::Darcy { .. } => Problem::Darcy,
        }
    }

    pub fn wave_default() -> Self {
        let wave = WaveSpec::default();
        ProblemParams::Wave {
            bumps: BumpSpec::wave_default(wave.domain_side),
            wave,
        }
    }

    pub fn ns_default() -> Self {
        ProblemParams::NavierStokes {
            ns: NsSpec::default(),
            grf: GrfSpec::navier_stokes(),
        }
    }

    pub fn darcy_default() -> Self {
        ProblemParams::Darcy {
            forcing: 1.0,
            grf: GrfSpec::darcy(),
        }
    }

    fn domain_side(&self) -> f64 {
        match self {
            ProblemParams::Wave { wave, .. } => wave.domain_side,
            _ => 1.0,
        }
    }
}

/// Coarse observation paired with its fine-grid causal field.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub input: Field2D,
    pub target: Field2D,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// 80/10/10 partition in index order, each split nonempty.
    pub fn standard(n: usize) -> Self {
        assert!(n >= 3);
        let mut train = ((0.8 * n as f64).round() as usize).max(1);
        let val = ((0.1 * n as f64).round() as usize).max(1);
        while train + val + 1 > n {
            train -= 1;
        }
        Splits {
            train: (0..train).collect(),
            val: (train..train + val).collect(),
            test: (train + val..n).collect(),
        }
    }

    pub fn of(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid_arg(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub params: ProblemParams,
    pub pairs: Vec<SamplePair>,
    pub splits: Splits,
    pub sr_factor: usize,
    pub fine_n: usize,
    pub noise_gamma: f64,
    pub dataset_sigma2: f64,
    pub seed: u64,
}

impl Dataset {
    pub fn problem(&self) -> Problem {
        self.params.problem()
    }

    pub fn input_mesh(&self) -> &Mesh2D {
        self.pairs[0].input.mesh()
    }

    pub fn target_mesh(&self) -> &Mesh2D {
        self.pairs[0].target.mesh()
    }
}

fn round_f32(field: &Field2D) -> Field2D {
    let values = field.values().mapv(|v| v as f32 as f64);
    Field2D::new(*field.mesh(), values).expect("rounded field is finite")
}

/// Draw the random causal field, run the forward solver, and build one
/// coarse-input / fine-target pair.
fn generate_pair(
    params: &ProblemParams,
    fine_mesh: &Mesh2D,
    sr_factor: usize,
    rng: &mut Stream,
) -> Result<SamplePair> {
    let (observed, causal) = match params {
        ProblemParams::Wave { wave, bumps } => {
            let u0 = gaussian_bumps(fine_mesh, bumps, rng)?;
            let c0 = rng.gen_range(wave.c0_low..=wave.c0_high);
            let c = Field2D::from_fn(*fine_mesh, |x, y| c0 * x.sin() * y.sin());
            let ut = solve_wave(&u0, &c, wave)?;
            (ut, u0)
        }
        ProblemParams::NavierStokes { ns, grf } => {
            let w0 = sample_grf(fine_mesh, grf, rng)?;
            let wt = solve_navier_stokes(&w0, ns)?;
            (wt, w0)
        }
        ProblemParams::Darcy { forcing, grf } => {
            let g = sample_grf(fine_mesh, grf, rng)?;
            let k = binarize(&g, DARCY_HI, DARCY_LO);
            let spec = DarcySpec {
                n: fine_mesh.nx(),
                forcing: *forcing,
            };
            let h = solve_darcy(&k, &spec)?;
            (h, k)
        }
    };
    Ok(SamplePair {
        input: round_f32(&subsample(&observed, sr_factor)?),
        target: round_f32(&causal),
    })
}

/// Generate a clean dataset of `n_samples` pairs at super-resolution
/// factor `sr_factor` on a `fine_n`-per-side grid.
pub fn generate(
    params: &ProblemParams,
    n_samples: usize,
    sr_factor: usize,
    fine_n: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_samples < 3 {
        return Err(Error::invalid_arg("need at least 3 samples to split"));
    }
    if sr_factor < 1 {
        return Err(Error::invalid_arg("sr_factor must be >= 1"));
    }
    if fine_n % sr_factor != 0 {
        return Err(Error::invalid_arg(format!(
            "fine_n {fine_n} must be divisible by sr_factor {sr_factor}"
        )));
    }
    let fine_mesh = Mesh2D::square(fine_n, params.domain_side())?;
    let mut pairs = Vec::with_capacity(n_samples);
    for idx in 0..n_samples {
        let mut rng = derived_stream(seed, idx as u64);
        let pair = generate_pair(params, &fine_mesh, sr_factor, &mut rng).map_err(|e| {
            Error::Numeric(format!("sample {idx} failed: {e}"))
        })?;
        pairs.push(pair);
    }
    let dataset_sigma2 = input_variance(&pairs);
    Ok(Dataset {
        params: params.clone(),
        splits: Splits::standard(n_samples),
        pairs,
        sr_factor,
        fine_n,
        noise_gamma: 0.0,
        dataset_sigma2,
        seed,
    })
}

/// Population variance over every clean input value.
fn input_variance(pairs: &[SamplePair]) -> f64 {
    let mut count = 0usize;
    let mut mean = 0.0;
    for p in pairs {
        for v in p.input.values() {
            count += 1;
            mean += v;
        }
    }
    mean /= count as f64;
    let mut var = 0.0;
    for p in pairs {
        for v in p.input.values() {
            var += (v - mean) * (v - mean);
        }
    }
    var / count as f64
}

/// Add zero-mean Gaussian noise with standard deviation
/// `gamma * sigma_D` to every input value; targets untouched.
pub fn add_noise(dataset: &Dataset, gamma: f64, seed: u64) -> Result<Dataset> {
    if gamma < 0.0 {
        return Err(Error::invalid_arg("noise gamma must be >= 0"));
    }
    if gamma == 0.0 {
        return Ok(dataset.clone());
    }
    if dataset.noise_gamma != 0.0 {
        return Err(Error::InvalidState(format!(
            "dataset already carries noise (gamma = {})",
            dataset.noise_gamma
        )));
    }
    let sigma = gamma * dataset.dataset_sigma2.sqrt();
    let mut out = dataset.clone();
    for (idx, pair) in out.pairs.iter_mut().enumerate() {
        let mut rng = derived_stream(seed, idx as u64);
        let noisy = pair.input.values().mapv(|v| {
            let n: f64 = rng.sample(StandardNormal);
            (v + sigma * n) as f32 as f64
        });
        pair.input = Field2D::new(*pair.input.mesh(), noisy)?;
    }
    out.noise_gamma = gamma;
    Ok(out)
}

/// Rebuild one clean pair from the recorded seed, for provenance checks.
pub fn regenerate_sample(dataset: &Dataset, idx: usize) -> Result<SamplePair> {
    let fine_mesh = Mesh2D::square(dataset.fine_n, dataset.params.domain_side())?;
    let mut rng = derived_stream(dataset.seed, idx as u64);
    generate_pair(&dataset.params, &fine_mesh, dataset.sr_factor, &mut rng)
}

// --- persistence ---------------------------------------------------------

fn manifest_string(ds: &Dataset, checksums: &[(String, String)]) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k}={v}");
    };
    kv("format_version", FORMAT_VERSION.to_string());
    kv("problem", ds.problem().name().to_string());
    kv("n_samples", ds.pairs.len().to_string());
    kv("sr_factor", ds.sr_factor.to_string());
    kv("fine_n", ds.fine_n.to_string());
    kv("input_nx", ds.input_mesh().nx().to_string());
    kv("input_ny", ds.input_mesh().ny().to_string());
    kv("input_lx", ds.input_mesh().lx().to_string());
    kv("input_ly", ds.input_mesh().ly().to_string());
    kv("target_lx", ds.target_mesh().lx().to_string());
    kv("target_ly", ds.target_mesh().ly().to_string());
    kv("split_train", ds.splits.train.len().to_string());
    kv("split_val", ds.splits.val.len().to_string());
    kv("split_test", ds.splits.test.len().to_string());
    kv("noise_gamma", ds.noise_gamma.to_string());
    kv("dataset_sigma2", ds.dataset_sigma2.to_string());
    kv("seed", ds.seed.to_string());
    match &ds.params {
        ProblemParams::Wave { wave, bumps } => {
            kv("wave_domain_side", wave.domain_side.to_string());
            kv("wave_t_final", wave.t_final.to_string());
            kv("wave_c0_low", wave.c0_low.to_string());
            kv("wave_c0_high", wave.c0_high.to_string());
            kv("wave_cfl_safety", wave.cfl_safety.to_string());
            kv("bump_count", bumps.count.to_string());
            kv("bump_amp_low", bumps.amp_low.to_string());
            kv("bump_amp_high", bumps.amp_high.to_string());
            kv("bump_width", bumps.width.to_string());
        }
        ProblemParams::NavierStokes { ns, grf } => {
            kv("ns_nu", ns.nu.to_string());
            kv("ns_t_final", ns.t_final.to_string());
            kv("ns_dt", ns.dt.to_string());
            kv("ns_forcing_amplitude", ns.forcing_amplitude.to_string());
            kv("grf_tau", grf.tau.to_string());
            kv("grf_alpha", grf.alpha.to_string());
            kv("grf_scale", grf.scale.to_string());
            kv("grf_periodic", grf.periodic.to_string());
        }
        ProblemParams::Darcy { forcing, grf } => {
            kv("darcy_forcing", forcing.to_string());
            kv("grf_tau", grf.tau.to_string());
            kv("grf_alpha", grf.alpha.to_string());
            kv("grf_scale", grf.scale.to_string());
            kv("grf_periodic", grf.periodic.to_string());
        }
    }
    for (file, sum) in checksums {
        kv(&format!("checksum_{file}"), sum.clone());
    }
    s
}

fn flatten(pairs: &[SamplePair], pick: impl Fn(&SamplePair) -> &Field2D) -> (Vec<usize>, Vec<f32>) {
    let first = pick(&pairs[0]);
    let dims = vec![pairs.len(), first.nx(), first.ny()];
    let mut values = Vec::with_capacity(dims.iter().product());
    for p in pairs {
        values.extend(pick(p).values().iter().map(|v| *v as f32));
    }
    (dims, values)
}

/// Write the dataset directory: `manifest`, `inputs.bin`, `targets.bin`.
pub fn save(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (in_dims, in_vals) = flatten(&dataset.pairs, |p| &p.input);
    let (tg_dims, tg_vals) = flatten(&dataset.pairs, |p| &p.target);
    tensorfile::write_tensor(&dir.join("inputs.bin"), &in_dims, &in_vals)?;
    tensorfile::write_tensor(&dir.join("targets.bin"), &tg_dims, &tg_vals)?;
    let checksums = vec![
        (
            "inputs.bin".to_string(),
            tensorfile::file_checksum(&dir.join("inputs.bin"))?,
        ),
        (
            "targets.bin".to_string(),
            tensorfile::file_checksum(&dir.join("targets.bin"))?,
        ),
    ];
    let manifest = manifest_string(dataset, &checksums);
    std::fs::write(dir.join("manifest"), manifest).map_err(|e| Error::io(dir.join("manifest"), e))?;
    Ok(())
}

fn parse_manifest(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            reason: format!("line {}: expected key=value", lineno + 1),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

struct ManifestReader<'a> {
    map: &'a BTreeMap<String, String>,
    path: &'a Path,
}

impl<'a> ManifestReader<'a> {
    fn get(&self, key: &str) -> Result<&'a str> {
        self.map
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::Format {
                path: self.path.to_path_buf(),
                reason: format!("missing key '{key}'"),
            })
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.parse().map_err(|_| Error::Format {
            path: self.path.to_path_buf(),
            reason: format!("key '{key}' is not a valid value"),
        })
    }
}

/// Read a dataset directory back; `load(save(d)) == d` bit-exactly.
pub fn load(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join("manifest");
    let map = parse_manifest(&manifest_path)?;
    let r = ManifestReader {
        map: &map,
        path: &manifest_path,
    };
    let version: u32 = r.parse("format_version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            path: manifest_path.clone(),
            found: version.to_string(),
            expected: FORMAT_VERSION.to_string(),
        });
    }
    for file in ["inputs.bin", "targets.bin"] {
        let want = r.get(&format!("checksum_{file}"))?;
        let got = tensorfile::file_checksum(&dir.join(file))?;
        if want != got {
            return Err(Error::Checksum {
                path: dir.join(file),
            });
        }
    }
    let problem = Problem::parse(r.get("problem")?)?;
    let params = match problem {
        Problem::Wave => ProblemParams::Wave {
            wave: WaveSpec {
                domain_side: r.parse("wave_domain_side")?,
                t_final: r.parse("wave_t_final")?,
                c0_low: r.parse("wave_c0_low")?,
                c0_high: r.parse("wave_c0_high")?,
                cfl_safety: r.parse("wave_cfl_safety")?,
            },
            bumps: BumpSpec {
                count: r.parse("bump_count")?,
                amp_low: r.parse("bump_amp_low")?,
                amp_high: r.parse("bump_amp_high")?,
                width: r.parse("bump_width")?,
            },
        },
        Problem::NavierStokes => ProblemParams::NavierStokes {
            ns: NsSpec {
                nu: r.parse("ns_nu")?,
                t_final: r.parse("ns_t_final")?,
                dt: r.parse("ns_dt")?,
                forcing_amplitude: r.parse("ns_forcing_amplitude")?,
            },
            grf: GrfSpec {
                tau: r.parse("grf_tau")?,
                alpha: r.parse("grf_alpha")?,
                scale: r.parse("grf_scale")?,
                periodic: r.parse("grf_periodic")?,
            },
        },
        Problem::Darcy => ProblemParams::Darcy {
            forcing: r.parse("darcy_forcing")?,
            grf: GrfSpec {
                tau: r.parse("grf_tau")?,
                alpha: r.parse("grf_alpha")?,
                scale: r.parse("grf_scale")?,
                periodic: r.parse("grf_periodic")?,
            },
        },
    };
    let n_samples: usize = r.parse("n_samples")?;
    let (in_dims, in_vals) = tensorfile::read_tensor(&dir.join("inputs.bin"))?;
    let (tg_dims, tg_vals) = tensorfile::read_tensor(&dir.join("targets.bin"))?;
    let bad_shape = |what: &str| Error::Format {
        path: dir.join(what),
        reason: "tensor shape does not match manifest".into(),
    };
    if in_dims.len() != 3 || in_dims[0] != n_samples {
        return Err(bad_shape("inputs.bin"));
    }
    if tg_dims.len() != 3 || tg_dims[0] != n_samples {
        return Err(bad_shape("targets.bin"));
    }
    let input_mesh = Mesh2D::new(
        in_dims[1],
        in_dims[2],
        r.parse("input_lx")?,
        r.parse("input_ly")?,
    )?;
    let target_mesh = Mesh2D::new(
        tg_dims[1],
        tg_dims[2],
        r.parse("target_lx")?,
        r.parse("target_ly")?,
    )?;
    let per_in = in_dims[1] * in_dims[2];
    let per_tg = tg_dims[1] * tg_dims[2];
    let mut pairs = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let input = Field2D::new(
            input_mesh,
            Array2::from_shape_vec(
                (in_dims[1], in_dims[2]),
                in_vals[i * per_in..(i + 1) * per_in]
                    .iter()
                    .map(|v| *v as f64)
                    .collect(),
            )
            .expect("shape checked"),
        )?;
        let target = Field2D::new(
            target_mesh,
            Array2::from_shape_vec(
                (tg_dims[1], tg_dims[2]),
                tg_vals[i * per_tg..(i + 1) * per_tg]
                    .iter()
                    .map(|v| *v as f64)
                    .collect(),
            )
            .expect("shape checked"),
        )?;
        pairs.push(SamplePair { input, target });
    }
    let train: usize = r.parse("split_train")?;
    let val: usize = r.parse("split_val")?;
    let test: usize = r.parse("split_test")?;
    if train + val + test != n_samples {
        return Err(Error::Format {
            path: manifest_path,
            reason: "split sizes do not cover all samples".into(),
        });
    }
    Ok(Dataset {
        params,
        pairs,
        splits: Splits {
            train: (0..train).collect(),
            val: (train..train + val).collect(),
            test: (train + val..n_samples).collect(),
        },
        sr_factor: r.parse("sr_factor")?,
        fine_n: r.parse("fine_n")?,
        noise_gamma: r.parse("noise_gamma")?,
        dataset_sigma2: r.parse("dataset_sigma2")?,
        seed: r.parse("seed")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_darcy() -> Dataset {
        generate(&ProblemParams::darcy_default(), 6, 4, 32, 99).unwrap()
    }

    #[test]
    fn darcy_shapes_and_splits() {
        let ds = tiny_darcy();
        assert_eq!(ds.input_mesh().nx(), 8);
        assert_eq!(ds.target_mesh().nx(), 32);
        assert_eq!(ds.splits.train.len(), 4);
        assert_eq!(ds.splits.val.len(), 1);
        assert_eq!(ds.splits.test.len(), 1);
        // Disjoint cover
        let mut all: Vec<usize> = ds
            .splits
            .train
            .iter()
            .chain(&ds.splits.val)
            .chain(&ds.splits.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn standard_split_ratios() {
        let s = Splits::standard(1000);
        assert_eq!(
            (s.train.len(), s.val.len(), s.test.len()),
            (800, 100, 100)
        );
        let s = Splits::standard(20000);
        assert_eq!(
            (s.train.len(), s.val.len(), s.test.len()),
            (16000, 2000, 2000)
        );
        let s = Splits::standard(3);
        assert!(s.train.len() >= 1 && s.val.len() >= 1 && s.test.len() >= 1);
    }

    #[test]
    fn determinism_bit_identical() {
        let a = generate(&ProblemParams::darcy_default(), 4, 2, 16, 7).unwrap();
        let b = generate(&ProblemParams::darcy_default(), 4, 2, 16, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn input_is_subsampled_solution() {
        let ds = tiny_darcy();
        let again = regenerate_sample(&ds, 2).unwrap();
        assert_eq!(ds.pairs[2], again);
    }

    #[test]
    fn sigma2_matches_recomputation() {
        let ds = tiny_darcy();
        let again = input_variance(&ds.pairs);
        assert!((ds.dataset_sigma2 - again).abs() <= 1e-10 * again.abs());
    }

    #[test]
    fn noise_variance_and_determinism() {
        // larger coarse grids so we exceed 1e5 values
        let ds = generate(&ProblemParams::darcy_default(), 12, 1, 96, 3).unwrap();
        let n1 = add_noise(&ds, 0.1, 55).unwrap();
        let n2 = add_noise(&ds, 0.1, 55).unwrap();
        assert_eq!(n1, n2);
        assert_eq!(n1.noise_gamma, 0.1);
        let mut diffs = Vec::new();
        for (a, b) in ds.pairs.iter().zip(n1.pairs.iter()) {
            assert_eq!(a.target, b.target);
            for (x, y) in a.input.values().iter().zip(b.input.values().iter()) {
                diffs.push(y - x);
            }
        }
        assert!(diffs.len() >= 100_000, "got {} values", diffs.len());
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>()
            / diffs.len() as f64;
        let want = 0.01 * ds.dataset_sigma2;
        assert!(
            (var / want - 1.0).abs() < 0.05,
            "noise variance {var} vs {want}"
        );
    }

    #[test]
    fn gamma_zero_is_identity_and_double_noise_rejected() {
        let ds = tiny_darcy();
        assert_eq!(add_noise(&ds, 0.0, 1).unwrap(), ds);
        let noisy = add_noise(&ds, 0.1, 1).unwrap();
        assert!(matches!(
            add_noise(&noisy, 0.05, 2),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn save_load_roundtrip() {
        let ds = tiny_darcy();
        let dir = tempfile::tempdir().unwrap();
        save(&ds, dir.path()).unwrap();
        let back = load(dir.path()).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn tampered_tensor_is_detected() {
        let ds = tiny_darcy();
        let dir = tempfile::tempdir().unwrap();
        save(&ds, dir.path()).unwrap();
        let path = dir.path().join("targets.bin");
        let mut bytes = std::fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 3] ^= 0x40;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load(dir.path()), Err(Error::Checksum { .. })));
    }

    #[test]
    fn version_mismatch_is_detected() {
        let ds = tiny_darcy();
        let dir = tempfile::tempdir().unwrap();
        save(&ds, dir.path()).unwrap();
        let mpath = dir.path().join("manifest");
        let text = std::fs::read_to_string(&mpath)
            .unwrap()
            .replace("format_version=1", "format_version=9");
        std::fs::write(&mpath, text).unwrap();
        assert!(matches!(load(dir.path()), Err(Error::Version { .. })));
    }

    #[test]
    fn wave_and_ns_generate() {
        let ds = generate(&ProblemParams::wave_default(), 3, 4, 32, 1).unwrap();
        assert_eq!(ds.input_mesh().nx(), 8);
        assert!((ds.input_mesh().lx() - 7.0 * 4.0 * ds.target_mesh().dx()).abs() < 1e-12);
        let ds = generate(&ProblemParams::ns_default(), 3, 2, 16, 1).unwrap();
        assert_eq!(ds.target_mesh().nx(), 16);
        assert!(ds.dataset_sigma2 > 0.0);
    }
}
