use replaycache::config::SimConfig;
use replaycache::machine::NvmTech;
use replaycache::memory::CheckpointKind;

#[test]
fn file_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("sim.toml");
    let mut c = SimConfig::default();
    c.seed = 77;
    c.cycles_per_ns = Some(0.25);
    c.recovery.capacitor_budget = 500.0;
    std::fs::write(&path, c.to_toml()).unwrap();
    assert_eq!(SimConfig::load(&path).unwrap(), c);
}

#[test]
fn derived_settings() {
    let c = SimConfig::default();
    assert!((c.cycles_per_ns() - 1.0 / c.machine.clock_ns).abs() < 1e-12);
    let m = c.machine_for(NvmTech::Pcm, CheckpointKind::QuickRecall);
    assert_eq!(m.nvm, c.timings.get(NvmTech::Pcm));
    assert_eq!(c.compile_options(CheckpointKind::QuickRecall).checkpoint, CheckpointKind::QuickRecall);
}

#[test]
fn invalid_values_rejected() {
    assert!(SimConfig::load("/nonexistent/sim.toml").is_err());
    assert!(SimConfig::parse("seed = \"x\"").is_err());
    assert!(SimConfig::parse("[recovery]\ncapacitor_budget = -1.0\n").is_err());
}
