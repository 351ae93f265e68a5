import io
import math

import numpy as np
import pytest

from oracles import AD_FROZEN, BD_FROZEN, VC_FROZEN, VC_PEAK_FROZEN, continuous_closed_loop, rk4_discrete, rk4_period
from pound.control import (
    CONTROL_HEADER,
    PlantParams,
    continuous_matrices,
    controller_step,
    discretize,
    expm,
    local_loop,
    max_deviation,
    plant_step,
    run_closed_loop,
    write_control_csv,
)
from pound.flows import FlowSpec, SampleLog
from pound.netsim import LinkModel

TRANSPORTS = ["pound", "perflow_unreliable", "reliable_ordered", "reliable_ordered_nagle"]


@pytest.fixture(scope="module")
def oracle():
    return rk4_discrete()


def test_frozen_oracle_is_current(oracle):
    Ad, Bd = oracle
    assert np.allclose(Ad, AD_FROZEN, atol=1e-12) and np.allclose(Bd, BD_FROZEN, atol=1e-12)


def test_discretization_matches_fine_step_oracle(oracle):
    dp = discretize(PlantParams())
    Ad, Bd = oracle
    assert np.abs(dp.Ad - np.array(Ad)).max() <= 1e-6
    assert np.abs(dp.Bd - np.array(Bd)).max() <= 1e-6


def test_small_period_limit():
    dp = discretize(PlantParams(T_us=1))
    assert np.abs(dp.Ad - np.eye(2)).max() < 1e-4
    assert np.abs(dp.Bd).max() < 1e-4


def test_discrete_poles_inside_unit_circle():
    Ad = discretize(PlantParams()).Ad
    tr, det = Ad[0, 0] + Ad[1, 1], Ad[0, 0] * Ad[1, 1] - Ad[0, 1] * Ad[1, 0]
    # roots of z^2 - tr z + det; complex pair here, so |z|^2 = det
    assert tr * tr - 4 * det < 0
    assert 0 < det < 1


def test_expm_against_scipy():
    linalg = pytest.importorskip("scipy.linalg")
    rng = np.random.default_rng(0)
    for scale in (1e-3, 1.0, 30.0):
        M = rng.normal(size=(4, 4)) * scale
        assert np.allclose(expm(M), linalg.expm(M), rtol=1e-10, atol=1e-12)


def test_expm_of_zero_is_identity():
    assert np.array_equal(expm(np.zeros((3, 3))), np.eye(3))


def test_continuous_matrices():
    A, B = continuous_matrices(PlantParams())
    assert A.tolist() == [[-10.0, -10.0], [10.0, 0.0]] and B.ravel().tolist() == [10.0, 0.0]


def test_plant_step_zero():
    dp = discretize(PlantParams())
    assert np.array_equal(plant_step(dp, np.zeros(2), 0.0), np.zeros(2))


def test_unit_dc_gain():
    dp = discretize(PlantParams())
    x = np.zeros(2)
    for _ in range(2000):
        x = plant_step(dp, x, 1.0)
    # steady state of A x = -B u: i = 0, v = u
    assert dp.output(x) == pytest.approx(1.0, abs=1e-9)
    assert x[0] == pytest.approx(0.0, abs=1e-9)


def test_impulse_response_matches_oracle():
    dp = discretize(PlantParams())
    x = plant_step(dp, np.zeros(2), 1.0)
    ref = rk4_period(1.0, 0.1, 0.1, 0.02, (0.0, 0.0), 1.0)
    for _ in range(20):
        assert x == pytest.approx(ref, abs=1e-9)
        x = plant_step(dp, x, 0.0)
        ref = rk4_period(1.0, 0.1, 0.1, 0.02, ref, 0.0, h=2e-5)


@pytest.mark.parametrize("y,u", [(0.0, 1.0), (1.0, 0.0), (0.4, 0.6)])
def test_controller(y, u):
    assert controller_step(1.0, y) == pytest.approx(u)


def test_plant_params_validated():
    with pytest.raises(ValueError):
        PlantParams(L=0)


def test_local_loop_settles_at_half():
    trace = local_loop(PlantParams(), 250)
    assert trace[-1].vc == pytest.approx(0.5, abs=1e-6)
    assert max(s.vc for s in trace) == pytest.approx(VC_PEAK_FROZEN, abs=1e-9)
    for k, v in VC_FROZEN.items():
        assert trace[k].vc == pytest.approx(v, abs=1e-9)


def test_local_loop_matches_continuous_oracle():
    ref = continuous_closed_loop(250)
    trace = local_loop(PlantParams(), 250)
    assert max(abs(s.vc - r) for s, r in zip(trace, ref)) <= 1e-3


# -- networked loop ------------------------------------------------------------

def perturbing(transport="pound"):
    return FlowSpec("perturb", 65536, 200_000, 1000, 1, transport, 1, 0, 12)


@pytest.fixture(scope="module")
def local():
    return local_loop(PlantParams(), 500)


@pytest.mark.parametrize("transport", ["pound", "perflow_unreliable", "reliable_ordered"])
def test_unperturbed_loop_equals_local(transport, local):
    trace = run_closed_loop(transport, None, 10_000_000, link=LinkModel(loss_prob=0.05), seed=1)
    assert max_deviation(trace, local) < 1e-12


def test_unperturbed_nagle_within_one_sample_step(local):
    trace = run_closed_loop("reliable_ordered_nagle", None, 10_000_000, seed=1)
    one_step = max(abs(b.vc - a.vc) for a, b in zip(local, local[1:]))
    assert max_deviation(trace, local) <= one_step


@pytest.mark.parametrize("transport", TRANSPORTS)
@pytest.mark.parametrize("loss", [0.0, 0.05, 0.3])
def test_bounded_output(transport, loss):
    trace = run_closed_loop(transport, perturbing(transport), 5_000_000, seed=3,
                            link=LinkModel(loss_prob=loss))
    assert max(abs(s.vc) for s in trace) <= 2.0


def test_deterministic():
    a = run_closed_loop("perflow_unreliable", perturbing(), 3_000_000, seed=7, link=LinkModel(loss_prob=0.05))
    b = run_closed_loop("perflow_unreliable", perturbing(), 3_000_000, seed=7, link=LinkModel(loss_prob=0.05))
    assert a == b


def test_lost_inputs_are_held():
    # nothing gets through: the plant keeps applying the initial command (0 V)
    trace = run_closed_loop("perflow_unreliable", None, 1_000_000, link=LinkModel(loss_prob=1.0))
    assert all(s.u == 0.0 and s.vc == 0.0 for s in trace)
    assert not any(s.fresh for s in trace[1:])


def test_stale_samples_flagged_under_perturbation():
    trace = run_closed_loop("perflow_unreliable", perturbing("perflow_unreliable"), 5_000_000, seed=1,
                            link=LinkModel(loss_prob=0.05))
    assert trace[0].fresh and any(not s.fresh for s in trace)


def test_log_records_loop_flows():
    log = SampleLog()
    run_closed_loop("pound", perturbing(), 2_000_000, log=log)
    assert set(log.sent) == {"y", "u", "perturb"}
    assert log.sent["y"] == 101


def test_reserved_flow_ids():
    with pytest.raises(ValueError):
        run_closed_loop("pound", FlowSpec("p", 10, 1000, 5, flow_id=10, src=1, dst=0), 100_000)


def test_control_csv():
    trace = local_loop(PlantParams(), 2)
    buf = io.StringIO()
    write_control_csv(trace, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(CONTROL_HEADER) == "k,time_ms,vc_volts,u_volts,y_received"
    assert lines[1] == "0,0.000,0.000000,0.000000,1"
    assert lines[2].startswith("1,20.000,0.018669,1.000000,1")
    assert math.isclose(float(lines[2].split(",")[2]), 0.018669, abs_tol=1e-6)
