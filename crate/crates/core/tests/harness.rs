use std::fs;
use std::path::Path;

use rsma_uav::channel::{ChannelModel, Position3D, RicianParams};
use rsma_uav::harness::{self, Method, Preset, StartRule};
use rsma_uav::precoder::Scheme;

fn traces(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("trace_"))
        .collect();
    names.sort();
    names
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn presets_pin_the_evaluation_setup() {
    let four = [(0.0, 0.0), (0.0, 100.0), (150.0, 150.0), (200.0, 50.0)];
    for preset in [Preset::Fig1Convergence, Preset::Fig2Trajectory, Preset::Fig3SnrLos, Preset::Fig4SnrRician] {
        let c = preset.config().unwrap();
        let s = &c.scenario;
        assert_eq!(c.preset, preset);
        assert_eq!(s.sigma2, 1.0);
        assert_eq!(s.bandwidth, 20e6);
        assert_eq!((s.bounds.x_min, s.bounds.x_max, s.bounds.y_min, s.bounds.y_max), (0.0, 300.0, 0.0, 300.0));
        assert_eq!((s.bounds.z_min, s.bounds.z_max), (80.0, 120.0));
        assert!(s.weights.iter().all(|&w| w == 1.0));
        assert!(s.rate_thresholds.iter().all(|&r| r == 0.0));
        let users = s.users.as_ref().unwrap();
        match preset {
            Preset::Fig1Convergence | Preset::Fig2Trajectory => {
                assert_eq!(users, &vec![Position3D::new(0.0, 0.0, 0.0), Position3D::new(0.0, 100.0, 0.0)]);
                assert_eq!(s.n_t, 2);
                assert_eq!(s.channel, ChannelModel::Los);
                assert_eq!(c.sweep.snr_db, vec![20.0]);
                assert_eq!(c.sweep.methods, vec![Method::Joint]);
                assert_eq!(c.sweep.start, StartRule::Random);
            }
            _ => {
                let pos: Vec<(f64, f64)> = users.iter().map(|u| (u.x, u.y)).collect();
                assert_eq!(pos, four);
                assert_eq!(s.n_t, 4);
                assert_eq!(c.sweep.snr_db, vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
                assert_eq!(c.sweep.methods, vec![Method::Joint, Method::AvgLocation]);
            }
        }
        if preset == Preset::Fig4SnrRician {
            let p = RicianParams::default();
            assert_eq!(s.channel, ChannelModel::Rician(p));
            assert!((p.a1 - 10f64.sqrt()).abs() < 1e-12 && (p.b1 - 10f64.powf(1.5)).abs() < 1e-9);
        }
        assert_eq!(c.sweep.schemes, Scheme::ALL.to_vec());
        c.validate().unwrap();
    }
    assert!(Preset::Custom.config().is_none());
}

#[test]
fn preset_file_round_trips() {
    let c = harness::parse_config("preset = \"fig3_snr_los\"\n").unwrap();
    assert_eq!(c, Preset::Fig3SnrLos.config().unwrap());
    let c = harness::parse_config("preset = \"fig4_snr_rician\"\n[sweep]\nseeds = [4, 5]\nschemes = [\"noma\"]\n").unwrap();
    assert_eq!(c.sweep.seeds, vec![4, 5]);
    assert_eq!(c.sweep.schemes, vec![Scheme::Noma]);
    let c = harness::parse_config_with_preset("preset = \"fig3_snr_los\"\n", Some(Preset::Fig1Convergence)).unwrap();
    assert_eq!(c.preset, Preset::Fig1Convergence);
}

#[test]
fn parse_errors_point_at_the_offending_line() {
    let e = harness::parse_config("preset = \"fig1_convergence\"\n\n[sweep]\nseedz = [1]\n").unwrap_err();
    assert_eq!(e.position.map(|p| p.0), Some(4), "{e}");
    assert!(e.to_string().starts_with("line 4"), "{e}");

    let e = harness::parse_config("preset = \"fig1_convergence\"\n[sweep]\nseeds = []\n").unwrap_err();
    assert_eq!(e.position.map(|p| p.0), Some(3), "{e}");
    assert!(e.message.contains("seeds"));

    let e = harness::parse_config("preset = \"fig9\"\n").unwrap_err();
    assert_eq!(e.position.map(|p| p.0), Some(1), "{e}");

    let e = harness::parse_config("preset = \"fig3_snr_los\"\n[scenario]\nn_t = 8\n").unwrap_err();
    assert_eq!(e.position.map(|p| p.0), Some(2), "{e}");

    let e = harness::parse_config("preset = \"fig3_snr_los\"\n[sweep]\nsnr_db = [10.0]\n").unwrap_err();
    assert!(e.message.contains("seeds"), "{e}");

    assert!(harness::parse_config("[scenario]\nn_t = 2\n").is_err());
    assert!(harness::parse_config("[scenario]\nuser_count = 2\n").is_err(), "unpinned users need drops");
    assert!(harness::parse_config("[scenario]\nuser_count = 3\nweights = [1.0]\n[sweep]\nmonte_carlo_drops = 2\n").is_err());
}

#[test]
fn fig1_with_three_seeds_writes_one_trace_per_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = Preset::Fig1Convergence.config().unwrap();
    c.out_dir = tmp.path().join("fig1");
    c.sweep.seeds = vec![1, 2, 3];
    let report = harness::run_experiment(&c, None).unwrap();
    assert_eq!(report.runs.len(), 9);
    assert_eq!(report.failed(), 0);
    let names = traces(&c.out_dir);
    assert_eq!(names.len(), 9);
    assert!(names.contains(&"trace_joint_rsma_snr20_seed2.csv".to_string()), "{names:?}");
    assert!(c.out_dir.join("aggregate.csv").exists() && c.out_dir.join("manifest.toml").exists());

    for name in &names {
        let path = c.out_dir.join(name);
        let header = csv::Reader::from_path(&path).unwrap().headers().unwrap().clone();
        assert_eq!(header.len(), 12);
        for r in rows(&path) {
            let hz: f64 = r[4].parse().unwrap();
            let bps: f64 = r[5].parse().unwrap();
            assert_eq!(bps, hz * 20e6);
            let z: f64 = r[8].parse().unwrap();
            assert!((80.0..=120.0).contains(&z));
        }
    }
    let agg = rows(&c.out_dir.join("aggregate.csv"));
    assert_eq!(agg.len(), 3);
    for r in &agg {
        assert_eq!((&r[3], &r[4]), ("3", "0"));
        let mean: f64 = r[5].parse().unwrap();
        assert_eq!(r[8].parse::<f64>().unwrap(), mean * 20e6);
    }

    let summary = harness::summarize(&c.out_dir).unwrap();
    assert_eq!(summary.traces.len(), 9);
    assert!(summary.problems.is_empty());
    assert!(summary.check("joint RSMA >= SDMA @ 20 dB").unwrap().pass);
    assert!(summary.check("NOMA >= SDMA (low SNR) @ 20 dB").is_none());
    assert!(summary.to_string().contains("joint RSMA >= SDMA @ 20 dB: pass"));
}

#[test]
fn rician_summary_has_the_low_snr_check() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "preset = \"fig4_snr_rician\"\nout_dir = {:?}\n[sweep]\nseeds = [1]\n",
        tmp.path().join("fig4").to_string_lossy()
    );
    let mut c = harness::parse_config(&text).unwrap();
    c.sweep.snr_db = vec![0.0];
    c.sweep.methods = vec![Method::Joint];
    harness::run_experiment(&c, None).unwrap();
    let summary = harness::summarize(&c.out_dir).unwrap();
    assert!(summary.check("NOMA >= SDMA (low SNR) @ 0 dB").is_some(), "{summary}");
    assert!(summary.check("joint >= avgloc rsma @ 0 dB").is_none());
}

#[test]
fn empty_and_broken_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let s = harness::summarize(tmp.path()).unwrap();
    assert!(s.is_empty());
    assert!(s.to_string().contains("no runs found"));

    fs::write(tmp.path().join("trace_joint_rsma_snr0_seed1.csv"), "iteration,scheme\n").unwrap();
    let s = harness::summarize(tmp.path()).unwrap();
    assert!(s.is_empty());
    assert_eq!(s.problems.len(), 1);

    assert!(harness::summarize(&tmp.path().join("missing")).is_err());
}

#[test]
fn failing_runs_are_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        r#"out_dir = {:?}
[scenario]
users = [{{ x = 0.0, y = 0.0, z = 0.0 }}, {{ x = 0.0, y = 100.0, z = 0.0 }}]
channel = {{ kind = "rician", a1 = 3.0, b1 = 30.0, beta = 3.0 }}
[sweep]
seeds = [1]
schemes = ["sdma"]
"#,
        tmp.path().to_string_lossy()
    );
    let c = harness::parse_config(&text).unwrap();
    let report = harness::run_experiment(&c, Some(1)).unwrap();
    assert_eq!(report.runs.len(), 2);
    assert_eq!(report.failed(), 1, "joint placement rejects beta = 3, the baseline does not");
    let bad = report.runs.iter().find(|r| r.outcome.is_err()).unwrap();
    assert_eq!(bad.key.method, Method::Joint);
    let r = rows(&bad.file);
    assert_eq!(r.len(), 1);
    assert_eq!(&r[0][r[0].len() - 1], "error");
    let manifest = fs::read_to_string(tmp.path().join("manifest.toml")).unwrap();
    assert!(manifest.contains("status = \"error\""));

    let s = harness::summarize(tmp.path()).unwrap();
    assert_eq!(s.traces.len(), 2);
    assert_eq!(s.traces.iter().filter(|t| t.final_wsr.is_none()).count(), 1);
}

#[test]
fn monte_carlo_drops_get_their_own_files() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "out_dir = {:?}\n[scenario]\nuser_count = 2\n[sweep]\nseeds = [7]\nmonte_carlo_drops = 2\nschemes = [\"sdma\"]\nmethods = [\"avg_location\"]\n",
        tmp.path().to_string_lossy()
    );
    let c = harness::parse_config(&text).unwrap();
    let report = harness::run_experiment(&c, None).unwrap();
    assert_eq!(report.failed(), 0);
    assert_eq!(traces(tmp.path()), ["trace_avgloc_sdma_snr20_seed7_drop0.csv", "trace_avgloc_sdma_snr20_seed7_drop1.csv"]);
    let a = report.runs[0].outcome.as_ref().unwrap().wsr();
    let b = report.runs[1].outcome.as_ref().unwrap().wsr();
    assert_ne!(a, b, "different drops place the users differently");
}
