use daenet::datagen::{make_dataset, simulate_pendulum, Dataset, PendulumConfig, DATASET_MAGIC};
use daenet::experiment::{ExperimentConfig, ModeKind, Problem, Profile};
use daenet::network::{
    init_params, read_checkpoint, write_checkpoint, NetworkDims, CHECKPOINT_MAGIC,
};
use daenet::Error;

#[test]
fn config_round_trips_through_ini() {
    for problem in [Problem::Pendulum, Problem::Molecules, Problem::Denoise] {
        for profile in [Profile::Desk, Profile::Paper] {
            let mut cfg = ExperimentConfig::defaults(problem, profile);
            cfg.seeds = vec![4, 7];
            cfg.clip_norm = None;
            cfg.modes = vec![ModeKind::Penalty, ModeKind::End];
            let back = ExperimentConfig::parse(&cfg.to_ini(), None).unwrap();
            assert_eq!(back, cfg);
        }
    }
}

#[test]
fn profile_override_wins_over_file() {
    let text = "[experiment]\nproblem = pendulum\nprofile = desk\n";
    let cfg = ExperimentConfig::parse(text, Some(Profile::Paper)).unwrap();
    assert_eq!(cfg.profile, Profile::Paper);
    assert_eq!(cfg.n_train, vec![100, 1000, 10_000]);
}

#[test]
fn invalid_settings_are_config_errors() {
    for text in [
        "[experiment]\nproblem = pendulum\n[train]\nepochs = many\n",
        "[experiment]\nproblem = pendulum\n[constraint]\nmode = sideways\n",
        "[experiment]\nproblem = orbit\n",
    ] {
        assert!(
            matches!(ExperimentConfig::parse(text, None), Err(Error::Config(_))),
            "{text}"
        );
    }
}

#[test]
fn checkpoint_file_layout() {
    let dims = NetworkDims {
        input: 3,
        latent: 5,
        hidden: 4,
        output: 2,
        layers: 2,
    };
    let params = init_params(1, dims, 1e-2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ckpt");
    write_checkpoint(&path, &params).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
    let header: Vec<u32> = bytes[8..28]
        .chunks(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    assert_eq!(header, [3, 5, 4, 2, 2]);
    assert_eq!(bytes.len(), 28 + 8 * params.num_parameters());
    assert_eq!(read_checkpoint(&path).unwrap(), params);
}

#[test]
fn dataset_file_round_trip() {
    let traj = simulate_pendulum(&PendulumConfig::uniform(2, 200, 1e-2), 0).unwrap();
    let data = make_dataset(&traj, 5, 20, 10, 10, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.bin");
    data.write(&path).unwrap();
    assert_eq!(&std::fs::read(&path).unwrap()[..8], DATASET_MAGIC);
    assert_eq!(Dataset::read(&path).unwrap(), data);

    std::fs::write(&path, b"not a dataset").unwrap();
    assert!(matches!(Dataset::read(&path), Err(Error::Format { .. })));
    assert!(matches!(
        Dataset::read(&dir.path().join("absent.bin")),
        Err(Error::MissingInput(_))
    ));
}
