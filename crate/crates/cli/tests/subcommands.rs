use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

struct Run {
    out: PathBuf,
    output: Output,
}

impl Run {
    fn code(&self) -> i32 {
        self.output.status.code().unwrap_or(-1)
    }

    fn stderr(&self) -> String {
        String::from_utf8_lossy(&self.output.stderr).into_owned()
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.out.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
    }

    fn report(&self, name: &str) -> HashMap<String, String> {
        self.read(name)
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect()
    }

    fn value(&self, name: &str, key: &str) -> f64 {
        self.report(name)[key].parse().unwrap()
    }

    /// Columns by header name.
    fn table(&self, name: &str) -> HashMap<String, Vec<String>> {
        let text = self.read(name);
        let mut lines = text.lines();
        let header: Vec<String> = lines.next().unwrap().split(',').map(str::to_string).collect();
        let mut cols: HashMap<String, Vec<String>> = header.iter().map(|h| (h.clone(), Vec::new())).collect();
        for line in lines {
            for (h, cell) in header.iter().zip(line.split(',')) {
                cols.get_mut(h).unwrap().push(cell.to_string());
            }
        }
        cols
    }

    fn column(&self, name: &str, col: &str) -> Vec<f64> {
        self.table(name)[col].iter().map(|c| c.parse().unwrap()).collect()
    }
}

fn slicer(tmp: &TempDir, config: &str, args: &[&str]) -> Run {
    let n = std::fs::read_dir(tmp.path()).unwrap().count();
    let cfg = tmp.path().join(format!("config_{n}.toml"));
    std::fs::write(&cfg, config).unwrap();
    let out = tmp.path().join(format!("out_{n}"));
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_slicer"));
    cmd.args(&args[..1]).arg("--config").arg(&cfg).arg("--out").arg(&out).args(&args[1..]);
    Run { out, output: cmd.output().unwrap() }
}

#[test]
fn profile_window_follows_duration() {
    let tmp = TempDir::new().unwrap();
    let r = slicer(&tmp, "", &["profile", "--durations", "0.15,1,10"]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let width = r.column("profile_T1_summary.csv", "flat_top_width_khz");
    let adiab = r.column("profile_T1_summary.csv", "adiabaticity_max");
    assert!(width[0] == 0.0 && width[1] > 2.4 && width[2] > width[1], "{width:?}");
    assert!(adiab[0] > adiab[1] && adiab[1] > adiab[2], "{adiab:?}");
    assert!(r.column("profile_T1_1.00ms.csv", "norm_error").iter().all(|&e| e <= 1e-8));
    assert!(r.read("manifest.toml").contains("profile_T1_summary.csv"));
}

#[test]
fn profile_without_durations_is_usage_error() {
    let tmp = TempDir::new().unwrap();
    let r = slicer(&tmp, "[profile]\ndurations = []\n", &["profile"]);
    assert_eq!(r.code(), 2, "{}", r.stderr());
}

#[test]
fn two_spin_scan_tracks_three_quarter_ratio() {
    let tmp = TempDir::new().unwrap();
    let r = slicer(&tmp, "[scan]\npoints = 21\n", &["scan", "--mode", "both"]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let t = r.table("scan_both.csv");
    for (d1, d2) in t["delta1_khz"].iter().zip(&t["delta2_khz"]) {
        let (d1, d2): (f64, f64) = (d1.parse().unwrap(), d2.parse().unwrap());
        assert!((d2 - 0.75 * d1).abs() < 1e-9, "{d1} {d2}");
    }
}

#[test]
fn lossless_two_spin_signal_is_sum_of_single_spin_scans() {
    let tmp = TempDir::new().unwrap();
    let base = "[loss]\nenabled = false\n[scan]\npoints = 9\nspin_up_fraction = 0.5\n";
    let probe = slicer(&tmp, base, &["scan", "--mode", "down"]);
    assert_eq!(probe.code(), 0, "{}", probe.stderr());
    let ratio = probe.column("scan_down.csv", "ratio")[0];
    // Removed ↓ atoms decaying into the background are repumped as ↑, the
    // one channel that couples the spins; switch it off.
    let cfg = format!("{base}[protocol]\nboth_ratio = {ratio}\nremoval_survival = 0.0\n");
    let focus = |mode: &str| slicer(&tmp, &cfg, &["scan", "--mode", mode]).column(&format!("scan_{mode}.csv"), "focus");
    let (both, up, down) = (focus("both"), focus("up"), focus("down"));
    for i in 0..both.len() {
        assert!((both[i] - up[i] - down[i]).abs() < 1e-3, "point {i}: {} vs {} + {}", both[i], up[i], down[i]);
    }
}

#[test]
fn matching_dips_where_layers_coincide() {
    let tmp = TempDir::new().unwrap();
    let r = slicer(&tmp, "", &["match"]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let x = r.column("match.csv", "delta2_khz");
    let s = r.column("match.csv", "signal");
    let (i, min) = s.iter().copied().enumerate().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(x[i].abs() < 0.3, "dip at {}", x[i]);
    assert!(1.0 - min / max >= 0.95);
}

#[test]
fn loss_presets_and_round_trip() {
    let tmp = TempDir::new().unwrap();
    let mut halves = Vec::new();
    for preset in ["m7h", "m5h", "mixture"] {
        let r = slicer(&tmp, "", &["loss", "--preset", preset]);
        assert_eq!(r.code(), 0, "{}", r.stderr());
        halves.push(r.value(&format!("loss_{preset}_report.txt"), "half_life_ms"));
    }
    assert!(halves[0] > halves[1] && halves[1] > halves[2], "{halves:?}");
    assert!((halves[2] / 50.0 - 1.0).abs() <= 0.02);

    let r = slicer(&tmp, "", &["loss", "--synthesize", "alpha=0.2,beta=0.8"]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let name = "loss_synthetic_report.txt";
    assert!(r.read("manifest.toml").contains(name));
    assert!((r.value(name, "alpha_per_s") / 0.2 - 1.0).abs() <= 0.05);
    assert!((r.value(name, "beta_per_s") / 0.8 - 1.0).abs() <= 0.05);
}

#[test]
fn malformed_loss_csv_names_the_line() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("decay.csv");
    std::fs::write(&data, "t_s,n\n0,1.0\n0.1,0.9\n0.2,oops\n").unwrap();
    let r = slicer(&tmp, "", &["loss", "--input", data.to_str().unwrap()]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("line 4"), "{}", r.stderr());
}

#[test]
fn field_images_count_stripes() {
    let tmp = TempDir::new().unwrap();
    let centred = slicer(&tmp, "[imaging]\npixels = 64\n", &["fieldimg"]);
    assert_eq!(centred.code(), 0, "{}", centred.stderr());
    assert_eq!(centred.value("fieldimg_report.txt", "stripe_count"), 1.0);
    assert!(std::fs::read(centred.out.join("fieldimg.pgm")).unwrap().starts_with(b"P5\n64 64\n65535\n"));

    let displaced = slicer(&tmp, "[field]\nstray = [300.0, 0.0]\n[imaging]\npixels = 64\n", &["fieldimg"]);
    assert!(displaced.value("fieldimg_report.txt", "stripe_count") >= 2.0);
    assert!(displaced.value("fieldimg_report.txt", "inhomogeneity_mg") > centred.value("fieldimg_report.txt", "inhomogeneity_mg"));
}

#[test]
fn shim_sweep_is_monotone() {
    let tmp = TempDir::new().unwrap();
    let r = slicer(&tmp, "[imaging]\npixels = 64\n", &["fieldimg", "--sweep"]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let counts = r.column("fieldimg_sweep.csv", "stripe_count");
    let inhom = r.column("fieldimg_sweep.csv", "inhomogeneity_mg");
    assert!(counts.windows(2).all(|w| w[1] >= w[0]), "{counts:?}");
    assert!(inhom.windows(2).all(|w| w[1] > w[0]), "{inhom:?}");
    assert!(counts.last().unwrap() > counts.first().unwrap());
}

#[test]
fn compensation_removes_stray_displacement() {
    let tmp = TempDir::new().unwrap();
    let r = slicer(&tmp, "[field]\nstray = [100.0, 0.0]\n[imaging]\npixels = 64\n", &["compensate"]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    assert!(r.value("compensate_report.txt", "residual_inhomogeneity_mg") <= 1.2);
    assert!((r.value("compensate_report.txt", "displacement_x_um") - 100.0).abs() < 10.0);

    let zero = slicer(&tmp, "[imaging]\npixels = 64\n", &["compensate"]);
    assert!(zero.value("compensate_report.txt", "shim_x_g").abs() < 1e-3);
    assert!(zero.value("compensate_report.txt", "shim_y_g").abs() < 1e-3);
}

#[test]
fn calibrate_checks_and_failures() {
    let tmp = TempDir::new().unwrap();
    let r = slicer(&tmp, "[zeeman]\nmode = \"breit_rabi\"\n", &["calibrate"]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let errors = r.column("calibrate.csv", "relative_error");
    assert!(errors.iter().all(|e| e.abs() <= 0.02), "{errors:?}");

    let broken = slicer(&tmp, "[field]\nquad_strength = 0.0\n", &["calibrate"]);
    assert_eq!(broken.code(), 5, "{}", broken.stderr());

    let typo = slicer(&tmp, "[field]\nquad_strenght = 1.0\n", &["calibrate"]);
    assert_eq!(typo.code(), 2);
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.toml")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn seeded_noise_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = "[imaging]\npixels = 32\nnoise_sigma = 0.05\n";
    let a = slicer(&tmp, cfg, &["fieldimg", "--seed", "7"]);
    let b = slicer(&tmp, cfg, &["fieldimg", "--seed", "7"]);
    let c = slicer(&tmp, cfg, &["fieldimg", "--seed", "8"]);
    assert_eq!(snapshot(&a.out), snapshot(&b.out));
    assert_ne!(snapshot(&a.out), snapshot(&c.out));
    assert_eq!(slicer(&tmp, cfg, &["fieldimg"]).code(), 2);
}
