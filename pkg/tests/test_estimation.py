import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xecrel.errors import ConfigError, TraceError
from xecrel.estimation import (
    ObservationTrace,
    OnlineState,
    fit_truncnorm_mle,
    load_trace,
    loglik,
    moments_init,
    online_update,
    write_trace,
)
from xecrel.probkernel import Bounds, TruncNormModel, UniformModel, make_rng
from xecrel.reliability import DeviceModel, reliability, reliability_mi

B = Bounds(55, 152)


def draws(model, n, seed):
    return tuple(model.sample(make_rng(seed), n))


class TestTrace:
    def test_out_of_bounds_names_index(self):
        with pytest.raises(TraceError) as exc:
            ObservationTrace((60, 70, 200), B)
        assert exc.value.path == "samples[2]"

    def test_nan_rejected(self):
        with pytest.raises(TraceError):
            ObservationTrace((60, math.nan), B)

    def test_decimation_takes_first_of_each_block(self):
        t = ObservationTrace(tuple(range(60, 100)), B)
        assert t.decimated(20).samples == (60.0, 80.0)


class TestMoments:
    def test_empty(self):
        mu, sigma = moments_init(ObservationTrace((), B))
        assert mu == 103.5
        assert sigma == pytest.approx(97 / math.sqrt(12))
        # quoted as 28.0007; 97/sqrt(12) is 28.00149
        assert sigma == pytest.approx(28.0007, abs=1e-3)

    def test_constant_samples_floored(self):
        mu, sigma = moments_init(ObservationTrace((100, 100, 100), B))
        assert mu == 100 and sigma == pytest.approx(97e-3)

    def test_uniform_samples(self):
        mu, sigma = moments_init(ObservationTrace(draws(UniformModel(B), 10**4, 1), B))
        assert abs(mu - 103.5) < 1 and abs(sigma - 28.0) < 1

    def test_single_sample_moves_location_only(self):
        mu, sigma = moments_init(ObservationTrace((70,), B))
        assert mu == 70 and sigma == pytest.approx(97 / math.sqrt(12))


class TestMle:
    def test_recovers_parameters(self):
        truth = TruncNormModel(110, 15, B)
        fit = fit_truncnorm_mle(ObservationTrace(draws(truth, 10**4, 2), B))
        assert fit.converged
        assert abs(fit.mu - 110) < 0.5 and abs(fit.sigma - 15) < 0.5

    def test_gradient_vanishes_at_optimum(self):
        truth = TruncNormModel(80, 30, B)
        trace = ObservationTrace(draws(truth, 2000, 3), B)
        fit = fit_truncnorm_mle(trace)
        h = 1e-5
        for dm, ds in ((h, 0), (-h, 0), (0, h), (0, -h)):
            assert loglik(trace, fit.mu + dm * 97, fit.sigma * math.exp(ds)) <= fit.loglik + 1e-9

    @pytest.mark.parametrize("theta", [1.0, 2.0, 3.0])
    def test_uniform_trace_reproduces_mi(self, theta):
        cap = fit_truncnorm_mle(ObservationTrace(draws(UniformModel(B), 10**4, 4), B))
        d = Bounds(30, 120)
        dem = fit_truncnorm_mle(ObservationTrace(draws(UniformModel(d), 10**4, 5), d))
        r = reliability(DeviceModel(cap.model, dem.model), theta)
        assert abs(r - reliability_mi(B, d, theta)) < 0.01

    def test_needs_two_samples(self):
        with pytest.raises(TraceError):
            fit_truncnorm_mle(ObservationTrace((100,), B))

    def test_identical_samples_point_to_moments(self):
        with pytest.raises(TraceError, match="moments_init"):
            fit_truncnorm_mle(ObservationTrace((100, 100), B))

    def test_skewed_short_trace_stays_above_mass_floor(self):
        # all samples huddle at the low edge: the supremum lies at mu -> -inf
        b = Bounds(24.3, 123.1)
        fit = fit_truncnorm_mle(ObservationTrace((24.4, 24.9, 25.3, 26.0, 24.6, 31.0), b))
        assert fit.model.z >= 1e-12
        assert fit.loglik >= loglik(ObservationTrace((24.4, 24.9, 25.3, 26.0, 24.6, 31.0), b), *moments_init(
            ObservationTrace((24.4, 24.9, 25.3, 26.0, 24.6, 31.0), b)))


class TestOnline:
    def test_matches_batch(self):
        truth = TruncNormModel(120, 20, B)
        xs = draws(truth, 50, 6)
        st_ = OnlineState.empty(B)
        for x in xs:
            st_ = online_update(st_, x)
        batch = fit_truncnorm_mle(ObservationTrace(xs, B))
        assert st_.params[0] == pytest.approx(batch.mu, abs=1e-6)
        assert st_.params[1] == pytest.approx(batch.sigma, abs=1e-6)
        assert len(st_.history) == 50

    def test_first_sample_moves_toward_it(self):
        s0 = OnlineState.empty(B)
        s1 = online_update(s0, 70.0)
        assert abs(s1.params[0] - 70) < abs(s0.params[0] - 70)

    def test_rejects_out_of_bounds(self):
        with pytest.raises(TraceError):
            online_update(OnlineState.empty(B), 10.0)

    def test_parameter_error_shrinks(self):
        truth = TruncNormModel(110, 18, B)
        errs = {n: [] for n in (10, 50, 130, 1000)}
        for seed in range(20):
            xs = draws(truth, 1000, 100 + seed)
            for n in errs:
                f = fit_truncnorm_mle(ObservationTrace(xs[:n], B))
                errs[n].append(abs(f.mu - 110) / 18 + abs(f.sigma - 18) / 18)
        means = [np.mean(errs[n]) for n in (10, 50, 130, 1000)]
        assert all(a > b for a, b in zip(means, means[1:]))


class TestTraceFiles:
    def test_roundtrip(self, tmp_path):
        t = ObservationTrace((60.5, 70.25, 151.0), B, (0, 20, 40))
        write_trace(t, tmp_path / "cap.csv")
        back = load_trace(tmp_path / "cap.csv")
        assert back.samples == t.samples and back.bounds == B and back.timestamps == (0, 20, 40)

    def test_missing_sidecar(self, tmp_path):
        (tmp_path / "x.csv").write_text("frame,value\n0,60\n")
        with pytest.raises(ConfigError) as exc:
            load_trace(tmp_path / "x.csv")
        assert "x.json" in exc.value.path

    def test_bad_header(self, tmp_path):
        (tmp_path / "x.csv").write_text("t,v\n0,60\n")
        (tmp_path / "x.json").write_text(json.dumps({"bounds": [55, 152]}))
        with pytest.raises(ConfigError):
            load_trace(tmp_path / "x.csv")

    def test_out_of_bounds_in_file(self, tmp_path):
        (tmp_path / "x.csv").write_text("frame,value\n0,60\n1,500\n")
        with pytest.raises(TraceError):
            load_trace(tmp_path / "x.csv", bounds=(55, 152))


@settings(max_examples=100, deadline=None)
@given(
    mu=st.floats(40, 170),
    sigma=st.floats(3, 200),
    n=st.integers(2, 60),
    seed=st.integers(0, 2**32 - 1),
)
def test_likelihood_ascent(mu, sigma, n, seed):
    try:
        truth = TruncNormModel(mu, sigma, B)
    except ConfigError:
        return
    trace = ObservationTrace(draws(truth, n, seed), B)
    if np.ptp(trace.values) == 0:
        return
    fit = fit_truncnorm_mle(trace)
    assert fit.loglik >= loglik(trace, *moments_init(trace)) - 1e-9
