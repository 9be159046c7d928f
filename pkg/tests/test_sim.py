import numpy as np
import pytest
import scipy.sparse as sp

from viscotact import grid as gridops
from viscotact import sim
from viscotact.errors import ConfigurationError, NumericError
from viscotact.sim import ContactCommand, MaterialParams


def full_cmd(W, H, depth):
    mask = np.ones((W, H), dtype=bool)
    return ContactCommand(indentation=np.full((W, H), depth), mask=mask)


def test_zero_state_zero_command():
    state = sim.zero_state()
    out = sim.step(state, sim.no_contact(), MaterialParams(), 0.01)
    assert np.all(out.phi == 0.0)
    assert np.all(out.sigma_m == 0.0)
    assert sim.contact_force(out, MaterialParams()) == 0.0


def test_full_coverage_steady_state():
    params = MaterialParams()
    u0 = 5e-3
    cmd = full_cmd(12, 10, u0)
    state = sim.zero_state()
    for _ in range(2000):
        state = sim.step(state, cmd, params, 0.01)
    assert np.allclose(state.phi, u0)
    assert np.allclose(state.phi_dot, 0.0, atol=1e-12)
    assert np.allclose(state.sigma_m, 0.0, atol=1e-6)
    p = sim.pressure_field(state, params)
    assert np.allclose(p, params.k_e * u0, rtol=1e-6)


def test_step_matches_dense_oracle_4x4():
    # single interior node relaxing with no contact; backward Euler means
    # phi1 solves (I - dt*(D*L - c*I)) phi1 = phi0
    W = H = 4
    h = 2e-3
    dt = 1e-3
    params = MaterialParams(D=0.05)
    phi0 = np.zeros((W, H))
    phi0[1, 2] = 1e-3
    state = sim.SurfaceState(phi=phi0, phi_dot=np.zeros((W, H)),
                             sigma_m=np.zeros((W, H)),
                             contact_mask=np.zeros((W, H), dtype=bool),
                             h=h, bc=gridops.NEUMANN)
    cmd = ContactCommand(indentation=np.zeros((W, H)),
                         mask=np.zeros((W, H), dtype=bool))
    out = sim.step(state, cmd, params, dt)

    L = gridops.laplacian(W, H, h, gridops.NEUMANN).toarray()
    c = params.k_e / params.k_v
    A = np.eye(W * H) - dt * (params.D * L - c * np.eye(W * H))
    phi1 = np.linalg.solve(A, phi0.reshape(-1)).reshape(W, H)
    assert np.max(np.abs(out.phi - phi1)) < 1e-10


def test_contact_force_arithmetic():
    # uniform 10 kPa over the full 12x10 grid at h = 2 mm gives 4.8 N
    params = MaterialParams()
    depth = 10e3 / params.k_e  # phi such that k_e*phi = 10 kPa
    cmd = full_cmd(12, 10, depth)
    state = sim.steady_state(cmd, params)
    assert sim.contact_force(state, params) == pytest.approx(4.8, rel=1e-9)


def test_contact_force_summation_oracle():
    rng = np.random.default_rng(0)
    params = MaterialParams()
    mask = rng.random((12, 10)) < 0.5
    state = sim.SurfaceState(phi=rng.random((12, 10)) * 1e-3,
                             phi_dot=rng.standard_normal((12, 10)) * 1e-4,
                             sigma_m=rng.standard_normal((12, 10)) * 100.0,
                             contact_mask=mask, h=2e-3, bc=gridops.NEUMANN)
    p = (params.k_e * state.phi + params.k_v * state.phi_dot + state.sigma_m)
    import math
    expect = math.fsum(p[i, j] for i in range(12) for j in range(10)
                       if mask[i, j]) * 4e-6
    expect = max(expect, 0.0)
    assert sim.contact_force(state, params) == expect


def test_steady_state_fixed_point_and_long_rollout():
    params = MaterialParams()
    mask = np.zeros((12, 10), dtype=bool)
    mask[:6, :] = True  # half coverage
    cmd = ContactCommand(indentation=np.where(mask, 3e-3, 0.0), mask=mask)
    ss = sim.steady_state(cmd, params)
    for dt in (1e-3, 5e-3, 0.01):
        nxt = sim.step(ss, cmd, params, dt)
        assert np.max(np.abs(nxt.phi - ss.phi)) < 1e-9
    state = sim.zero_state()
    for _ in range(100000):
        state = sim.step(state, cmd, params, 0.01)
    assert np.max(np.abs(state.phi - ss.phi)) < 1e-6


def test_steady_state_trivial_cases():
    params = MaterialParams()
    cmd = full_cmd(12, 10, 4e-3)
    assert np.allclose(sim.steady_state(cmd, params).phi, 4e-3)
    assert np.all(sim.steady_state(sim.no_contact(), params).phi == 0.0)


def test_maxwell_relaxation_time_constant():
    # hold a step indentation; sigma_m should decay as exp(-t/tau)
    params = MaterialParams()
    cmd = full_cmd(12, 10, 5e-3)
    state = sim.zero_state()
    dt = 0.01
    state = sim.step(state, cmd, params, dt)  # loads the Maxwell branch
    ts, sig = [], []
    for k in range(int(5 * params.tau / dt)):
        ts.append(k * dt)
        sig.append(state.sigma_m[6, 5])
    # fit after stepping: regenerate the trace
        state = sim.step(state, cmd, params, dt)
    ts, sig = np.array(ts), np.array(sig)
    keep = sig > sig[0] * 1e-6
    slope = np.polyfit(ts[keep], np.log(sig[keep]), 1)[0]
    tau_fit = -1.0 / slope
    assert abs(tau_fit - params.tau) / params.tau < 0.02


def test_linearity_superposition():
    rng = np.random.default_rng(1)
    params = MaterialParams()
    mask = np.zeros((12, 10), dtype=bool)
    mask[3:9, 2:8] = True
    free = ~mask

    def rand_state():
        phi = rng.random((12, 10)) * 1e-3
        return sim.SurfaceState(phi=phi, phi_dot=np.zeros((12, 10)),
                                sigma_m=rng.random((12, 10)) * 100.0,
                                contact_mask=mask, h=2e-3, bc=gridops.NEUMANN)

    def cmd_of(depth_field):
        return ContactCommand(indentation=np.where(mask, depth_field, 0.0),
                              mask=mask)

    a, b = rand_state(), rand_state()
    da, db = rng.random((12, 10)) * 1e-3, rng.random((12, 10)) * 1e-3
    out_a = sim.step(a, cmd_of(da), params, 0.01)
    out_b = sim.step(b, cmd_of(db), params, 0.01)
    both = sim.SurfaceState(phi=a.phi + b.phi, phi_dot=np.zeros((12, 10)),
                            sigma_m=a.sigma_m + b.sigma_m,
                            contact_mask=mask, h=2e-3, bc=gridops.NEUMANN)
    out_ab = sim.step(both, cmd_of(da + db), params, 0.01)
    assert np.max(np.abs(out_ab.phi[free] - (out_a.phi + out_b.phi)[free])) < 1e-10
    assert np.max(np.abs(out_ab.sigma_m - (out_a.sigma_m + out_b.sigma_m))) < 1e-7


def test_determinism_bit_identical():
    params = MaterialParams()
    mask = np.zeros((12, 10), dtype=bool)
    mask[2:7, 3:8] = True
    cmd = ContactCommand(indentation=np.where(mask, 2e-3, 0.0), mask=mask)
    s1 = s2 = sim.zero_state()
    for _ in range(50):
        s1 = sim.step(s1, cmd, params, 0.01)
        s2 = sim.step(s2, cmd, params, 0.01)
    assert s1.phi.tobytes() == s2.phi.tobytes()
    assert s1.sigma_m.tobytes() == s2.sigma_m.tobytes()


def test_dissipativity_and_maximum_principle_randomized():
    # the acceptance-grade 1e5-step version lives in test_acceptance; this
    # is a fast randomized spot check of the same invariants
    rng = np.random.default_rng(7)
    params = MaterialParams()
    state = sim.zero_state()
    for k in range(2000):
        depth = float(rng.uniform(0.0, 8e-3))
        mask = np.zeros((12, 10), dtype=bool)
        i, j = rng.integers(0, 6), rng.integers(0, 5)
        mask[i:i + 6, j:j + 5] = True
        cmd = ContactCommand(indentation=np.where(mask, depth, 0.0), mask=mask)
        dt = float(rng.uniform(1e-4, 0.01))
        prev = state
        state = sim.step(state, cmd, params, dt)
        cap = max(depth, float(prev.phi.max()))
        assert state.phi.max() <= cap + 1e-12
    # dissipativity: zero command from a loaded state
    e = sim.energy(state)
    for _ in range(500):
        state = sim.step(state, sim.no_contact(), params, 0.01)
        e2 = sim.energy(state)
        assert e2 <= e + 1e-18
        e = e2


def test_dt_and_shape_validation():
    params = MaterialParams()
    state = sim.zero_state()
    with pytest.raises(ConfigurationError):
        sim.step(state, sim.no_contact(), params, 0.0)
    with pytest.raises(ConfigurationError):
        sim.step(state, sim.no_contact(), params, 0.02)
    bad = ContactCommand(indentation=np.zeros((4, 4)),
                         mask=np.zeros((4, 4), dtype=bool))
    with pytest.raises(ConfigurationError):
        sim.step(state, bad, params, 0.01)


def test_non_finite_rejected():
    params = MaterialParams()
    mask = np.ones((12, 10), dtype=bool)
    ind = np.full((12, 10), np.nan)
    with pytest.raises((NumericError, ConfigurationError)):
        sim.step(sim.zero_state(),
                 ContactCommand(indentation=ind, mask=mask), params, 0.01)


def test_material_validation():
    with pytest.raises(ConfigurationError):
        MaterialParams(k_e=-1.0)
    with pytest.raises(ConfigurationError):
        MaterialParams(tau=0.0)


def test_laplacian_row_sums():
    # Neumann rows sum to zero (constants in the null space)
    L = gridops.laplacian(5, 4, 2e-3, gridops.NEUMANN)
    assert np.allclose(np.asarray(L.sum(axis=1)).ravel(), 0.0)
    assert sp.issparse(L)
