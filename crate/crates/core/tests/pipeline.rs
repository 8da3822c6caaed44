use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use rffid::experiment::{gen_dataset, mean_accuracy, run_experiment, ExperimentConfig};
use rffid::features::PilotReference;
use rffid::frontend::{read_captures, AntennaCapture};
use rffid::schemes::{estimate_variances, MiMode};

const CLEAN: &str = "profiles = T1,T2,T3,T4,T5\nsnr_list = inf\nchi = 0\njitter = off\nquantizer = off\n\
                     feature = lms\nn_antennas = 2\n";

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text, Path::new(".")).unwrap()
}

#[test]
fn impairment_free_lms_is_nearly_perfect() {
    let cfg = config(&format!("{CLEAN}trials = 1\nschemes = ORS,DFS\n"));
    for (scheme, _, acc) in mean_accuracy(&run_experiment(&cfg).unwrap()) {
        assert!(acc >= 0.95, "{scheme}: {acc}");
    }
}

#[test]
fn shuffled_labels_fall_to_chance() {
    let cfg = config(&format!(
        "{CLEAN}trials = 6\ntrain_frames = 40\ntest_frames = 40\nschemes = ORS\nshuffle_labels = true\n"
    ));
    let acc = mean_accuracy(&run_experiment(&cfg).unwrap())[0].2;
    assert!((0.1..=0.3).contains(&acc), "{acc}");
}

const SMOKE: &str = "profiles = T1,T2\ntrain_frames = 3\ntest_frames = 2\ntrials = 2\nsnr_list = 10\n\
                     n_antennas = 2\nseed = 5\n";

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn gen_counts_and_regenerates_identically() {
    let cfg = config(SMOKE);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let manifest = gen_dataset(&cfg, a.path()).unwrap();
    gen_dataset(&cfg, b.path()).unwrap();
    assert_eq!(manifest.frame_records(), 2 * (3 + 2) * 2);
    assert_eq!(manifest.files.len(), 4);
    assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(json["seed"], 5);
    assert_eq!(json["frame_records"], 20);
    assert_eq!(json["config_sha256"].as_str().unwrap().len(), 64);

    let first = fs::File::open(a.path().join(&manifest.files[0].path)).unwrap();
    let caps = read_captures(std::io::BufReader::new(first)).unwrap();
    assert_eq!(caps.len(), 5);
    assert!(caps.iter().all(|c| c.truth.is_some() && c.n_antennas() == 2));
}

#[test]
fn pilot_mode_datasets_carry_no_truth() {
    let cfg = config(&format!("{SMOKE}mi_mode = pilot\n"));
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_dataset(&cfg, dir.path()).unwrap();
    for f in &manifest.files {
        let text = fs::read_to_string(dir.path().join(&f.path)).unwrap();
        assert!(!text.contains("\"truth\":{"), "{}", f.path.display());
        let caps = read_captures(text.as_bytes()).unwrap();
        assert!(caps.iter().all(|c| c.truth.is_none()));
    }
}

#[test]
fn different_seeds_give_different_captures() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    gen_dataset(&config(SMOKE), a.path()).unwrap();
    gen_dataset(&config(&SMOKE.replace("seed = 5", "seed = 6")), b.path()).unwrap();
    let name = "trial0000_emitter0.jsonl";
    assert_ne!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
}

// Median over trials of the pilot-based noise estimate on a long unit-gain
// pilot, against the configured noise variance.
#[test]
fn pilot_noise_estimate_is_unbiased_enough() {
    let len = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let pilot: Vec<Complex64> = (0..len)
        .map(|_| Complex64::new(gauss(), gauss()) * 0.5f64.sqrt())
        .collect();
    let power = pilot.iter().map(|z| z.norm_sqr()).sum::<f64>() / len as f64;
    let pilot: Vec<Complex64> = pilot.iter().map(|z| z / power.sqrt()).collect();
    let reference = PilotReference {
        waveform: pilot.clone().into(),
        region: len,
    };
    let var_w = 10f64.powf(-1.5);
    let mut estimates: Vec<f64> = (0..200)
        .map(|_| {
            let row: Vec<Complex64> = pilot
                .iter()
                .map(|x| x + Complex64::new(gauss(), gauss()) * (var_w / 2.0).sqrt())
                .collect();
            let cap = AntennaCapture {
                rows: vec![row.into()],
                truth: None,
                frame_index: 0,
                emitter: 0,
                snr_db: 15.0,
                pilot_samples: len,
                saturated: 0,
            };
            estimate_variances(&cap, MiMode::Pilot, &reference).unwrap()[0].var_w
        })
        .collect();
    estimates.sort_by(f64::total_cmp);
    let median = (estimates[99] + estimates[100]) / 2.0;
    assert!((median / var_w - 1.0).abs() < 0.10, "{median} vs {var_w}");
}
