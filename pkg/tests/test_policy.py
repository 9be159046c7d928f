import numpy as np
import pytest

from viscotact import policy, sim, tactile
from viscotact.control import (EPS_RANGE, LAMBDA1_RANGE, LAMBDA2_RANGE)
from viscotact.errors import (ConfigurationError, NumericError,
                              SchedulingError)
from viscotact.policy import (Action, ActionChunk, ActionScheduler,
                              Observation, ensemble_step, predict_chunk,
                              rodrigues, rodrigues_inverse, sigmoid,
                              squash_compliance, wrap_angle)
from viscotact.sim import ContactCommand, MaterialParams
from viscotact.weights import ArchDescriptor, load_bundle, seeded_bundle

FIXTURES = __file__.rsplit("/", 1)[0] + "/fixtures"


def _centered_mask(w_cells, h_cells, w=12, h=10):
    mask = np.zeros((w, h), dtype=bool)
    i0, j0 = (w - w_cells) // 2, (h - h_cells) // 2
    mask[i0:i0 + w_cells, j0:j0 + h_cells] = True
    return mask


def golden_observation():
    # same rollout that produced the frozen chunk fixture
    params = MaterialParams()
    mask = _centered_mask(8, 6)
    cmd = ContactCommand(indentation=np.where(mask, 2e-3, 0.0), mask=mask)
    state = sim.zero_state()
    for _ in range(50):
        state = sim.step(state, cmd, params, 0.01)
    ff = tactile.sample_force_field(state, params, 0.0, None, 0.5)
    df = tactile.sample_deformation_field(state, 0.5)
    return Observation(current_pose=np.zeros(6), force_field=ff,
                       deformation_field=df)


def test_action_vector_round_trip():
    rng = np.random.default_rng(4)
    v = rng.normal(size=22)
    v[19:22] = [200.0, 1.5, 0.06]
    a = Action.from_vector(v)
    back = a.as_vector()
    assert np.allclose(back[0:3], v[0:3])
    assert np.allclose(back[6:19], v[6:19])
    assert np.allclose(back[19:22], v[19:22])
    with pytest.raises(ConfigurationError):
        Action.from_vector(np.zeros(21))


def test_sigmoid_squash_midpoints_and_limits():
    mid = squash_compliance(np.zeros(3))
    assert mid.lambda1 == pytest.approx(275.0)
    assert mid.lambda2 == pytest.approx(2.55)
    assert mid.eps == pytest.approx(0.055)
    hi = squash_compliance(np.full(3, 50.0))
    assert hi.lambda1 == pytest.approx(LAMBDA1_RANGE[1])
    assert hi.lambda2 == pytest.approx(LAMBDA2_RANGE[1])
    assert hi.eps == pytest.approx(EPS_RANGE[1])
    lo = squash_compliance(np.full(3, -50.0))
    assert lo.lambda1 == pytest.approx(LAMBDA1_RANGE[0])
    assert lo.lambda2 == pytest.approx(LAMBDA2_RANGE[0])
    assert lo.eps == pytest.approx(EPS_RANGE[0])
    # no overflow for huge logits
    assert np.isfinite(sigmoid(np.array([-1e4, 1e4]))).all()


def test_compliance_always_in_range_property():
    rng = np.random.default_rng(9)
    for _ in range(500):
        c = squash_compliance(rng.normal(scale=20.0, size=3))
        assert LAMBDA1_RANGE[0] <= c.lambda1 <= LAMBDA1_RANGE[1]
        assert LAMBDA2_RANGE[0] <= c.lambda2 <= LAMBDA2_RANGE[1]
        assert EPS_RANGE[0] <= c.eps <= EPS_RANGE[1]


def test_chunk_contract():
    chunk = ActionChunk(actions=[np.zeros(22)] * 10, start_time=0.0)
    assert chunk.n == 10
    assert chunk.covers(0.0) and chunk.covers(0.9)
    assert not chunk.covers(1.0) and not chunk.covers(0.05)
    with pytest.raises(ConfigurationError):
        ActionChunk(actions=[], start_time=0.0)
    with pytest.raises(ConfigurationError):
        ActionChunk(actions=[np.zeros(22)], start_time=0.0, period=0.2)


def test_golden_chunk_bit_exact():
    bundle = load_bundle(open(f"{FIXTURES}/bundle_seed42.cfa1", "rb").read())
    chunk = predict_chunk(golden_observation(), bundle, start_time=0.0)
    ref = np.load(f"{FIXTURES}/golden_chunk_seed42.npz")["actions"]
    got = np.stack(chunk.actions)
    assert got.shape == ref.shape == (10, 22)
    assert np.array_equal(got, ref)


def test_inference_deterministic_across_runs():
    bundle = seeded_bundle(5)
    obs = golden_observation()
    a = np.stack(predict_chunk(obs, bundle).actions)
    b = np.stack(predict_chunk(obs, bundle).actions)
    assert np.array_equal(a, b)


def test_bimanual_action_dim():
    bundle = seeded_bundle(2, ArchDescriptor(arm_count=2))
    obs1 = golden_observation()
    obs = Observation(current_pose=np.zeros(12),
                      force_field=obs1.force_field,
                      deformation_field=obs1.deformation_field,
                      force_field_2=obs1.force_field,
                      deformation_field_2=obs1.deformation_field)
    chunk = predict_chunk(obs, bundle)
    assert all(v.shape == (44,) for v in chunk.actions)
    # both arms' compliance slices land inside the hard ranges
    for v in chunk.actions:
        for o in (0, 22):
            assert LAMBDA1_RANGE[0] <= v[o + 19] <= LAMBDA1_RANGE[1]


def test_nonfinite_weights_raise_numeric_error():
    bundle = seeded_bundle(5)
    bundle.tensors["enc.1.ffn.w1"][0, 0] = np.nan
    with pytest.raises(NumericError) as e:
        predict_chunk(golden_observation(), bundle)
    assert "enc.1" in str(e.value)


def test_rodrigues_identities():
    assert np.array_equal(rodrigues(np.zeros(3)), np.eye(3))
    Rz = rodrigues(np.array([0.0, 0.0, np.pi / 2]))
    assert np.allclose(Rz @ np.array([1.0, 0, 0]), [0.0, 1.0, 0.0], atol=1e-12)
    rng = np.random.default_rng(3)
    for _ in range(100):
        r = rng.normal(size=3)
        r *= rng.uniform(0.0, np.pi - 1e-3) / np.linalg.norm(r)
        R = rodrigues(r)
        assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(rodrigues_inverse(R), r, atol=1e-9)


def test_wrap_angle():
    assert np.allclose(wrap_angle(np.array([3 * np.pi])), [np.pi], atol=1e-12) \
        or np.allclose(wrap_angle(np.array([3 * np.pi])), [-np.pi], atol=1e-12)
    x = np.array([0.1, -0.2, 3.0])
    assert np.allclose(wrap_angle(x), x, atol=1e-12)


def test_ensemble_single_and_identical_chunks():
    v = np.arange(22, dtype=float)
    v[19:22] = [100.0, 1.0, 0.05]
    c1 = ActionChunk(actions=[v.copy() for _ in range(10)], start_time=0.0)
    out = ensemble_step([c1], 0.3)
    assert np.allclose(out, v)
    c2 = ActionChunk(actions=[v.copy() for _ in range(10)], start_time=0.2)
    out = ensemble_step([c1, c2], 0.3)
    assert np.allclose(out, v)


def test_ensemble_m_zero_is_arithmetic_mean():
    va, vb = np.zeros(22), np.ones(22)
    va[19:22] = [100.0, 1.0, 0.05]
    vb[19:22] = [200.0, 2.0, 0.06]
    ca = ActionChunk(actions=[va] * 10, start_time=0.0)
    cb = ActionChunk(actions=[vb] * 10, start_time=0.2)
    out = ensemble_step([ca, cb], 0.5, m=0.0)
    assert np.allclose(out[:19], 0.5)
    assert out[19] == pytest.approx(150.0)


def test_ensemble_weights_favor_old_chunks():
    va, vb = np.zeros(22), np.ones(22)
    va[19:22] = vb[19:22] = [100.0, 1.0, 0.05]
    ca = ActionChunk(actions=[va] * 10, start_time=0.0)
    cb = ActionChunk(actions=[vb] * 10, start_time=0.2)
    out = ensemble_step([ca, cb], 0.5, m=0.5)
    # oldest gets weight 1, newer exp(-0.5); mean of first 19 dims < 0.5
    expect = np.exp(-0.5) / (1.0 + np.exp(-0.5))
    assert out[0] == pytest.approx(expect)


def test_ensemble_no_cover_raises():
    c = ActionChunk(actions=[np.zeros(22)] * 10, start_time=0.0)
    with pytest.raises(SchedulingError):
        ensemble_step([c], 1.5)


def test_scheduler_ten_hz_no_gaps():
    sched = ActionScheduler()
    rng = np.random.default_rng(6)
    with pytest.raises(SchedulingError):
        sched.emit()
    t0 = 0.0
    times = []
    for k in range(20):
        actions = [rng.normal(size=22) for _ in range(10)]
        for a in actions:
            a[19:22] = [150.0, 1.0, 0.05]
        sched.add_chunk(ActionChunk(actions=actions, start_time=t0))
        t0 += 0.5  # overlap of 5 ticks between consecutive chunks
        for _ in range(5):
            t, vec = sched.emit()
            times.append(t)
            assert vec.shape == (22,)
    diffs = np.diff(times)
    assert np.allclose(diffs, 0.1, atol=1e-9)
    assert len(times) == len(set(np.round(times, 6)))
