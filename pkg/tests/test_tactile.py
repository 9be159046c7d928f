import numpy as np
import pytest

from viscotact import grid as gridops
from viscotact import sim, tactile
from viscotact.errors import ConfigurationError
from viscotact.sim import ContactCommand, MaterialParams


def loaded_state(depth=2e-3):
    params = MaterialParams()
    mask = np.zeros((12, 10), dtype=bool)
    mask[3:9, 2:8] = True
    cmd = ContactCommand(indentation=np.where(mask, depth, 0.0), mask=mask)
    return sim.steady_state(cmd, params), params


def test_zero_state_zero_noise():
    f = tactile.sample_force_field(sim.zero_state(), MaterialParams(), 0.0)
    assert np.all(f.pressures == 0.0)


def test_clamp_60_to_50():
    params = MaterialParams()
    # phi such that k_e*phi = 60 kPa
    phi = np.full((12, 10), 60e3 / params.k_e)
    state = sim.SurfaceState(phi=phi, phi_dot=np.zeros((12, 10)),
                             sigma_m=np.zeros((12, 10)),
                             contact_mask=np.ones((12, 10), dtype=bool),
                             h=2e-3, bc=gridops.NEUMANN)
    f = tactile.sample_force_field(state, params, 0.0)
    assert np.all(f.pressures == 50.0)


def test_seeded_noise_equals_regenerated_table():
    state, params = loaded_state()
    rng = np.random.default_rng(11)
    f = tactile.sample_force_field(state, params, 0.5, rng)
    clean = tactile.sample_force_field(state, params, 0.0)
    table = np.random.default_rng(11).normal(0.0, 0.5, size=(12, 10))
    expect = np.clip(clean.pressures + table, 0.0, 50.0)
    assert np.array_equal(f.pressures, expect)


def test_sampling_idempotent_zero_noise():
    state, params = loaded_state()
    a = tactile.sample_force_field(state, params, 0.0)
    b = tactile.sample_force_field(state, params, 0.0)
    assert np.array_equal(a.pressures, b.pressures)


def test_grid_mismatch_rejected():
    state = sim.zero_state(4, 4)
    with pytest.raises(ConfigurationError):
        tactile.sample_force_field(state, MaterialParams(), 0.0)


def test_deformation_field_units():
    state, _ = loaded_state(3e-3)
    d = tactile.sample_deformation_field(state)
    assert d.displacements.max() == pytest.approx(3.0, rel=1e-9)  # mm


def test_poisson_smooth_identity_and_constant():
    state, _ = loaded_state()
    d = tactile.sample_deformation_field(state)
    assert tactile.poisson_smooth(d, 0.0) is d
    const = tactile.DeformationField(displacements=np.full((12, 10), 2.5),
                                     timestamp=0.0)
    out = tactile.poisson_smooth(const, 1e-4)
    assert np.allclose(out.displacements, 2.5, atol=1e-12)


def test_poisson_smooth_impulse_dense_oracle():
    raw = np.zeros((12, 10))
    raw[6, 5] = 1.0
    h = 2e-3
    lam = h * h
    d = tactile.DeformationField(displacements=raw, timestamp=0.0)
    out = tactile.poisson_smooth(d, lam, h)
    L = gridops.laplacian(12, 10, h, gridops.NEUMANN).toarray()
    x = np.linalg.solve(np.eye(120) - lam * L, raw.reshape(-1)).reshape(12, 10)
    assert np.max(np.abs(out.displacements - np.maximum(x, 0.0))) < 1e-10


def test_poisson_smooth_mean_conserved_and_monotone():
    rng = np.random.default_rng(3)
    raw = rng.random((12, 10))
    d = tactile.DeformationField(displacements=raw, timestamp=0.0)
    for lam in (1e-6, 1e-5, 1e-4, 1e-3):
        out = tactile.poisson_smooth(d, lam)
        assert abs(out.displacements.mean() - raw.mean()) < 1e-9
        assert out.displacements.max() <= raw.max() + 1e-12


def test_features_uniform_and_corner():
    uni = tactile.ForceField(pressures=np.full((12, 10), 5.0), timestamp=0.0)
    d = tactile.DeformationField(displacements=np.zeros((12, 10)),
                                 timestamp=0.0)
    feats = tactile.features(uni, d)
    assert feats.asymmetry == 0.0
    assert np.allclose(feats.force_centroid, [5.5, 4.5])
    corner = np.zeros((12, 10))
    corner[0, 0] = 7.0
    feats = tactile.features(
        tactile.ForceField(pressures=corner, timestamp=0.0), d)
    assert feats.asymmetry == pytest.approx(1.0)


def test_features_centroid_oracle_and_mirror():
    rng = np.random.default_rng(5)
    p = rng.random((12, 10)) * 10.0
    d = tactile.DeformationField(displacements=np.zeros((12, 10)),
                                 timestamp=0.0)
    feats = tactile.features(tactile.ForceField(pressures=p, timestamp=0.0), d)
    ii, jj = np.meshgrid(np.arange(12), np.arange(10), indexing="ij")
    cx = (ii * p).sum() / p.sum()
    cy = (jj * p).sum() / p.sum()
    assert abs(feats.force_centroid[0] - cx) < 1e-12
    assert abs(feats.force_centroid[1] - cy) < 1e-12
    mirrored = tactile.features(
        tactile.ForceField(pressures=p[::-1].copy(), timestamp=0.0), d)
    assert mirrored.force_centroid[0] == pytest.approx(11 - cx, abs=1e-12)
    assert mirrored.asymmetry == pytest.approx(feats.asymmetry, abs=1e-12)


def test_empty_field_features():
    z = np.zeros((12, 10))
    feats = tactile.features(
        tactile.ForceField(pressures=z, timestamp=0.0),
        tactile.DeformationField(displacements=z, timestamp=0.0))
    assert np.allclose(feats.force_centroid, [5.5, 4.5])
    assert feats.asymmetry == 0.0


def test_sensor_instance_determinism():
    state, params = loaded_state()
    a = tactile.TactileSensor(seed=9).read(state, params)[0]
    b = tactile.TactileSensor(seed=9).read(state, params)[0]
    assert np.array_equal(a.pressures, b.pressures)


def test_field_invariants_enforced():
    with pytest.raises(ConfigurationError):
        tactile.ForceField(pressures=np.full((12, 10), 51.0), timestamp=0.0)
    with pytest.raises(ConfigurationError):
        tactile.ForceField(pressures=np.zeros((4, 4)), timestamp=0.0)
    with pytest.raises(ConfigurationError):
        tactile.DeformationField(displacements=np.full((12, 10), -1.0),
                                 timestamp=0.0)
