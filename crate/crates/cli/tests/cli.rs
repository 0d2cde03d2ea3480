use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use meanfield::dynamics::read_trajectory;
use meanfield::measures::{grid_init, DensitySpec, EmpiricalMeasure};
use meanfield::transport::brute_force_distance;
use meanfield_cli::output::{read_manifest, sha256_hex};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meanfield")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SIMULATE: &str = "\
seed = 11
output = sim

[kernel]
name = power_law
a = 2
b = 1.5

[density]
name = uniform_box
lo = 0, 0
hi = 1, 1

[integrator]
dt = 0.01
t_final = 0.2

[simulate]
n = 36
sample_every = 5
";

fn check_manifest(root: &Path) -> Vec<(String, String)> {
    let entries = read_manifest(&fs::read_to_string(root.join("manifest.txt")).unwrap());
    for (file, hash) in &entries {
        let bytes = fs::read(root.join(file)).unwrap();
        assert_eq!(&sha256_hex(&bytes), hash, "{file}");
    }
    entries
}

#[test]
fn simulate_writes_round_trippable_outputs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sim.cfg"), SIMULATE).unwrap();
    let o = run(dir.path(), &["simulate", "sim.cfg"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let root = dir.path().join("sim");
    let names: Vec<String> = check_manifest(&root).into_iter().map(|e| e.0).collect();
    for f in ["config.txt", "initial.atoms", "final.atoms", "trajectory.traj", "events.txt", "summary.csv"] {
        assert!(names.iter().any(|n| n == f), "{f} missing from {names:?}");
    }
    let rho = DensitySpec::uniform_box(vec![0.0; 2], vec![1.0; 2]).unwrap();
    let mu0 = grid_init(&rho, 1.0 / 6.0, 2).unwrap();
    let initial = EmpiricalMeasure::from_text(&fs::read_to_string(root.join("initial.atoms")).unwrap()).unwrap();
    assert_eq!(initial, mu0);
    let traj = read_trajectory(&fs::read_to_string(root.join("trajectory.traj")).unwrap()).unwrap();
    let times: Vec<f64> = traj.iter().map(|s| s.0).collect();
    assert_eq!(times.len(), 5);
    assert_eq!(traj[0].1, mu0);
    let last = EmpiricalMeasure::from_text(&fs::read_to_string(root.join("final.atoms")).unwrap()).unwrap();
    assert_eq!(traj.last().unwrap().1, last);
    assert!((times[4] - 0.2).abs() < 1e-15);
}

#[test]
fn identical_runs_have_identical_manifests() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sim.cfg"), SIMULATE.replace("n = 36", "n = 36\ninit = iid")).unwrap();
    let a = run(dir.path(), &["simulate", "sim.cfg", "--out", "a"]);
    let b = run(dir.path(), &["--threads", "1", "simulate", "sim.cfg", "--out", "b"]);
    assert_eq!((code(&a), code(&b)), (0, 0));
    let ma = fs::read_to_string(dir.path().join("a/manifest.txt")).unwrap();
    let mb = fs::read_to_string(dir.path().join("b/manifest.txt")).unwrap();
    assert_eq!(ma, mb);
    fs::write(dir.path().join("sim.cfg"), SIMULATE.replace("seed = 11", "seed = 12").replace("n = 36", "n = 36\ninit = iid")).unwrap();
    run(dir.path(), &["simulate", "sim.cfg", "--out", "d"]);
    assert_ne!(ma, fs::read_to_string(dir.path().join("d/manifest.txt")).unwrap());
}

#[test]
fn collision_exits_two_with_event_log() {
    // the harmonic flow contracts every gap by e^{-t}; 1/16 e^{-t} < 0.05 once t > 0.22
    let cfg = "\
[kernel]
name = harmonic
k = 1
[density]
name = uniform_box
lo = 0
hi = 1
[integrator]
dt = 0.01
t_final = 1
collision_stop_threshold = 0.05
[simulate]
n = 16
";
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.cfg"), cfg).unwrap();
    let o = run(dir.path(), &["simulate", "c.cfg", "--out", "out"]);
    assert_eq!(code(&o), 2, "{}", stdout(&o));
    let events = fs::read_to_string(dir.path().join("out/events.txt")).unwrap();
    let t: f64 = events.split_whitespace().nth(1).unwrap().trim_start_matches("t=").parse().unwrap();
    assert!((t - 0.23).abs() < 1e-9, "{events}");
    check_manifest(&dir.path().join("out"));
}

#[test]
fn distance_matches_brute_force() {
    let dir = tempfile::tempdir().unwrap();
    let mu = EmpiricalMeasure::uniform(2, vec![0.0, 0.0, 1.0, 0.0, 0.3, 0.7, 0.6, 0.1]).unwrap();
    let nu = EmpiricalMeasure::uniform(2, vec![0.1, 0.2, 0.9, 0.4, 0.5, 0.5, 0.2, 0.9]).unwrap();
    fs::write(dir.path().join("mu.atoms"), mu.to_text()).unwrap();
    fs::write(dir.path().join("nu.atoms"), nu.to_text()).unwrap();
    fs::write(dir.path().join("d.cfg"), "[distance]\nmu = mu.atoms\nnu = nu.atoms\n").unwrap();
    let o = run(dir.path(), &["distance", "d.cfg", "--out", "out"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let line = stdout(&o).lines().next().unwrap().to_string();
    let vals: Vec<f64> = line.split_whitespace().map(|kv| kv.split_once('=').unwrap().1.parse().unwrap()).collect();
    assert!(line.starts_with("d_1=") && line.contains(" d_2=") && line.contains(" d_inf="), "{line}");
    for (v, p) in vals.iter().zip([1.0, 2.0, f64::INFINITY]) {
        let b = brute_force_distance(&mu, &nu, p).unwrap();
        assert!((v - b).abs() <= 1e-12, "p={p}: {v} vs {b}");
    }
    let names: Vec<String> = check_manifest(&dir.path().join("out")).into_iter().map(|e| e.0).collect();
    assert!(names.contains(&"plan_dinf.plan".to_string()));
}

#[test]
fn check_kernel_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let base = "[kernel]\nname = power_law\na = 2\nb = 1\n[check]\nd = 2\np = inf\n";
    fs::write(dir.path().join("k.cfg"), base).unwrap();
    let o = run(dir.path(), &["check-kernel", "k.cfg", "--out", "a"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("regimes = mean_field_singular"), "{}", stdout(&o));
    // chaos needs d >= 3 when alpha >= 0
    fs::write(dir.path().join("k.cfg"), format!("{base}regime = chaos\n")).unwrap();
    let o = run(dir.path(), &["check-kernel", "k.cfg", "--out", "b"]);
    assert_eq!(code(&o), 3, "{}", stdout(&o));
    assert!(stdout(&o).contains("FAILED"));
}

#[test]
fn config_errors_exit_one_and_name_lines() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("k.cfg"), "[kernel]\nname = harmonic\nk = 1\nk = 2\n[check]\nd = 2\np = inf\n").unwrap();
    let o = run(dir.path(), &["check-kernel", "k.cfg"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("first set on line 3, again on line 4"), "{}", stderr(&o));
    assert!(!dir.path().join("meanfield-out").exists());

    let o = run(dir.path(), &["check-kernel", "missing.cfg"]);
    assert_eq!(code(&o), 1);
    let o = run(dir.path(), &["no-such-command"]);
    assert_eq!(code(&o), 1);
    let o = run(dir.path(), &["--help"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn chaos_gamma_outside_interval_exits_one() {
    let cfg = "\
[kernel]
name = power_law
a = 2
b = 0.8
[density]
name = uniform_box
lo = 0, 0, 0
hi = 1, 1, 1
[chaos]
n = 64, 128
trials = 10
gamma = 1.2
";
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.cfg"), cfg).unwrap();
    let o = run(dir.path(), &["chaos", "c.cfg"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("(0.800000, 1)"), "{}", stderr(&o));
}

#[test]
fn converge_harmonic_closed_form() {
    let cfg = "\
[kernel]
name = harmonic
k = 1
[density]
name = uniform_box
lo = 0
hi = 1
[integrator]
dt = 0.001
t_final = 1
[converge]
n = 16, 64, 256
reference = closed_form
sample_every = 100
";
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("h.cfg"), cfg).unwrap();
    let o = run(dir.path(), &["converge", "h.cfg", "--out", "out"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let csv = fs::read_to_string(dir.path().join("out/convergence.csv")).unwrap();
    assert!(csv.starts_with("# meanfield-"));
    assert_eq!(csv.lines().filter(|l| l.starts_with("meanfield-")).count(), 3 * 11);
    let names: Vec<String> = check_manifest(&dir.path().join("out")).into_iter().map(|e| e.0).collect();
    assert!(names.contains(&"convergence.plotdat".to_string()) && names.contains(&"bounds_n256.txt".to_string()));
}

#[test]
fn mindist_and_blobnorm_report() {
    let dir = tempfile::tempdir().unwrap();
    let density = "[density]\nname = uniform_box\nlo = 0, 0\nhi = 1, 1\n";
    fs::write(dir.path().join("m.cfg"), format!("{density}[mindist]\nn = 64\nl = 0.1\ntrials = 200\n")).unwrap();
    let o = run(dir.path(), &["mindist", "m.cfg", "--out", "m"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("result: pass"));

    // at N = 16 the bound [2(R+1)]^d N^γ e^{-c_R N^{1-γ}} exceeds 1
    fs::write(dir.path().join("b.cfg"), format!("{density}[blobnorm]\nn = 16\ngamma = 0.5\np = 2\ntrials = 20\nresolution = 4\n")).unwrap();
    let o = run(dir.path(), &["blobnorm", "b.cfg", "--out", "b"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("vacuous"), "{}", stdout(&o));
    check_manifest(&dir.path().join("b"));
}

#[test]
fn cauchy_identical_widths() {
    let cfg = "\
[kernel]
name = power_law
a = 2
b = 1
[density]
name = uniform_box
lo = 0, 0
hi = 1, 1
[integrator]
dt = 0.05
t_final = 0.2
[cauchy]
n = 16
eps = 0.1
eps_prime = 0.1
";
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.cfg"), cfg).unwrap();
    let o = run(dir.path(), &["cauchy", "c.cfg", "--out", "out"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("c_ratio=1e0"), "{}", stdout(&o));
}
