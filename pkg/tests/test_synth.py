import json

import numpy as np
import pytest

from mtspec.errors import InvalidArgumentError, MtspecError
from mtspec.kernels import epanechnikov
from mtspec.synth import (
    FixedBandwidth,
    ProcessSpec,
    asymptotic_log_variance,
    asymptotic_smoothed_variance,
    burn_in_length,
    default_workers,
    generate,
    monte_carlo_ease,
    monte_carlo_ease_many,
    oracle_spectrum,
    pole_radius,
    quadratic_variance_oracle,
    smoothed_quadratic_matrix,
)
from mtspec.tapers import multitaper_quadratic_matrix, multitaper_spectrum, sinusoidal_tapers


def test_process_validation():
    with pytest.raises(InvalidArgumentError):
        ProcessSpec.ar([1.2])
    with pytest.raises(InvalidArgumentError):
        ProcessSpec.ar([0.5], sigma2=0.0)
    with pytest.raises(InvalidArgumentError):
        ProcessSpec.band(0.7, 1, 2)
    with pytest.raises(InvalidArgumentError):
        ProcessSpec.band(0.2, 1, -2)
    with pytest.raises(InvalidArgumentError):
        ProcessSpec("arma")


def test_parse():
    assert ProcessSpec.parse("ar:0.9,-0.81") == ProcessSpec.ar([0.9, -0.81])
    assert ProcessSpec.parse("white") == ProcessSpec.white()
    assert ProcessSpec.parse("band:0.2,1,100").levels == (1.0, 100.0)
    assert ProcessSpec.parse("ma:0.5").kind == "ma"
    for bad in ("ar:", "ar:x", "band:0.2,1", "garch:1"):
        with pytest.raises(InvalidArgumentError):
            ProcessSpec.parse(bad)


def test_pole_radius_and_burn_in():
    assert pole_radius([0.9, -0.81]) == pytest.approx(0.9, abs=1e-12)
    assert burn_in_length(ProcessSpec.ar([0.9])) == 500
    assert burn_in_length(ProcessSpec.ar([0.999])) == 10_000


def test_white_variance():
    x = generate(ProcessSpec.white(), 2048, 1).samples
    assert abs(x.var() - 1.0) < 0.1


def test_ar1_autocorrelation():
    x = generate(ProcessSpec.ar([0.9]), 8192, 2).samples
    x = x - x.mean()
    assert abs(np.dot(x[1:], x[:-1]) / np.dot(x, x) - 0.9) < 0.03


def test_band_levels():
    spec = ProcessSpec.band(0.2, 1.0, 100.0)
    mean = np.mean([multitaper_spectrum(generate(spec, 512, 3, r), 4).values for r in range(40)], axis=0)
    f = np.arange(mean.size) / (2 * 512 + 2)
    lo = mean[(f > 0.02) & (f < 0.18)].mean()
    hi = mean[(f > 0.22) & (f < 0.48)].mean()
    assert abs(lo - 1.0) < 0.2
    assert abs(hi / 100.0 - 1.0) < 0.2


def test_spectral_synthesis_round_trip():
    spec = ProcessSpec.band(0.2, 1.0, 10.0)
    n = 128
    pgram = np.mean([multitaper_spectrum(generate(spec, n, 11, r), 1).values for r in range(500)], axis=0)
    f = np.arange(n + 2) / (2 * n + 2)
    away = np.abs(f - 0.2) > 0.05
    ratio = pgram[away] / oracle_spectrum(spec, f[away]).S
    assert np.all(np.abs(ratio - 1) < 0.2)


def test_generation_is_deterministic():
    spec = ProcessSpec.ar([0.5, -0.3])
    a = generate(spec, 100, 5, 3).samples
    b = generate(spec, 100, 5, 3).samples
    c = generate(spec, 100, 5, 4).samples
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    # frozen value guards against silent changes of the random stream
    assert generate(ProcessSpec.white(), 8, 0).samples[0] == -0.2059740286292238
    assert generate(ProcessSpec.ar([0.5]), 8, 0, 1).samples[3] == -0.8487214442998761
    with pytest.raises(InvalidArgumentError):
        generate(spec, 4, 0)


def test_oracle_simple_cases():
    o = oracle_spectrum(ProcessSpec.white(), [0.0, 0.25, 0.5])
    np.testing.assert_allclose(o.S, 1.0)
    np.testing.assert_allclose(o.theta, 0.0)
    np.testing.assert_allclose(o.d2theta, 0.0)
    assert oracle_spectrum(ProcessSpec.ar([0.9]), 0.0).S[0] == pytest.approx(100.0, rel=1e-12)
    assert oracle_spectrum(ProcessSpec.ma([0.5]), 0.0).S[0] == pytest.approx(2.25, rel=1e-12)
    with pytest.raises(InvalidArgumentError):
        oracle_spectrum(ProcessSpec.white(), 0.6)


@pytest.mark.parametrize(
    "spec", [ProcessSpec.ar([0.9]), ProcessSpec.ar([0.9, -0.81]), ProcessSpec.ma([0.4, 0.3])]
)
@pytest.mark.parametrize("f", [0.1, 0.23, 0.4])
def test_oracle_derivatives_finite_differences(spec, f):
    step = 1e-4
    t = oracle_spectrum(spec, [f - step, f, f + step]).theta
    o = oracle_spectrum(spec, f)
    d1 = (t[2] - t[0]) / (2 * step)
    d2 = (t[2] - 2 * t[1] + t[0]) / step**2
    assert o.dtheta[0] == pytest.approx(d1, rel=1e-6, abs=1e-6)
    assert o.d2theta[0] == pytest.approx(d2, rel=1e-6, abs=1e-4)


def test_ar2_peak_location():
    f = np.linspace(0, 0.5, 6001)
    s = oracle_spectrum(ProcessSpec.ar([0.9, -0.81]), f).S
    assert f[np.argmax(s)] == pytest.approx(np.arccos(-0.9 * 1.81 / (4 * -0.81)) / (2 * np.pi), abs=1e-4)


def test_quadratic_oracle_identities():
    n = 40
    assert quadratic_variance_oracle(np.eye(n) / n) == pytest.approx(1 / n)
    for k in (1, 3, 6):
        q = multitaper_quadratic_matrix(sinusoidal_tapers(n, k), 0.3)
        assert quadratic_variance_oracle(q) == pytest.approx(1 / k, rel=1e-12)
    with pytest.raises(InvalidArgumentError):
        quadratic_variance_oracle(np.eye(300))


def test_smoothed_quadratic_matrix_matches_asymptotics():
    k = epanechnikov()
    q = smoothed_quadratic_matrix(sinusoidal_tapers(128, 4), k, 0.1, 0.2)
    exact = quadratic_variance_oracle(q)
    assert exact == pytest.approx(asymptotic_smoothed_variance(k, 0.1, 128, 4), rel=0.2)
    # frozen brute-force value
    assert exact == pytest.approx(0.05115398159321333, rel=1e-9)


def test_asymptotic_log_variance():
    k = epanechnikov()
    assert asymptotic_log_variance(k, 0.05, 1000, 10) == pytest.approx(0.6 / 50 * 1.05**2)


def test_fixed_smoother_white_noise_variance():
    n, k, h = 1024, 10, 0.05
    rep = monte_carlo_ease(
        ProcessSpec.white(), FixedBandwidth(k, h), n, 100, 9,
        exclude=[(0.0, h), (0.5 - h, 0.5)], workers=1,
    )
    predicted = asymptotic_log_variance(epanechnikov(), h, n, k)
    assert rep.integrated == pytest.approx(predicted, rel=0.15)


def test_report_is_reproducible_and_serialisable():
    spec = ProcessSpec.ar([0.5])
    a = monte_carlo_ease(spec, FixedBandwidth(4, 0.05), 128, 2, 42, workers=1)
    b = monte_carlo_ease(spec, FixedBandwidth(4, 0.05), 128, 2, 42, workers=3)
    assert a.to_json() == b.to_json()
    payload = json.loads(a.to_json())
    assert payload["schema_version"] == 1
    assert payload["reps"] == 2 and payload["dropped"] == 0
    assert payload["integrated_ease"] >= 0 and payload["integrated_se"] >= 0
    with pytest.raises(InvalidArgumentError):
        monte_carlo_ease(spec, FixedBandwidth(4, 0.05), 128, 1, 42)


class _Flaky:
    def describe(self):
        return {"estimator": "flaky"}

    def __call__(self, ts, cache=None):
        if ts.samples[0] > 0:
            raise MtspecError("boom")
        f = np.linspace(0, 0.5, ts.n + 2)
        return f, np.zeros(f.size)


def test_failures_are_recorded():
    reps = monte_carlo_ease_many(ProcessSpec.white(), {"flaky": _Flaky()}, 64, 12, 1, workers=1)
    rep = reps["flaky"]
    assert 0 < rep.completed < 12
    assert len(rep.failures) == 12 - rep.completed
    assert "boom" in rep.failures[0]["error"]


def test_workers_from_environment(monkeypatch):
    monkeypatch.setenv("MTSPEC_THREADS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("MTSPEC_THREADS", "0")
    assert default_workers() >= 1
