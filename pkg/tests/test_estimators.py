import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mrwave import EnvelopeSimulator, PeriodicSteadyState, TransientSimulator
from mrwave.exceptions import InvalidArgumentError

from conftest import netlist_path

RC_SINE = "V1 in 0 SIN(0 1 1meg)\nR1 in out 1k\nC1 out 0 159.15p\n"


@pytest.mark.parametrize("cls", [TransientSimulator, PeriodicSteadyState, EnvelopeSimulator])
def test_clone_and_params(cls):
    est = cls()
    params = est.get_params()
    again = clone(est)
    assert again.get_params() == params
    key = next(iter(params))
    est.set_params(**{key: params[key]})


@pytest.mark.parametrize("cls", [TransientSimulator, PeriodicSteadyState, EnvelopeSimulator])
def test_predict_before_fit(cls):
    with pytest.raises(NotFittedError):
        cls().predict([0.0])


def test_transient_from_text_and_path():
    a = TransientSimulator(t_stop=2e-6).fit(RC_SINE)
    b = TransientSimulator(t_stop=2e-6).fit(str(netlist_path("rc_sine.cir")))
    assert a.predict([0.0, 1e-6]).shape == (2, 3)
    np.testing.assert_allclose(a.predict([1e-6]), b.predict([1e-6]), atol=1e-12)
    assert a.variable_names_ == ["v(in)", "v(out)", "i(V1)"]


def test_pss_predict_is_periodic():
    est = PeriodicSteadyState().fit(RC_SINE)
    t = np.linspace(0, 1e-6, 9)
    np.testing.assert_allclose(est.predict(t), est.predict(t + 1e-6), atol=1e-12)
    assert est.predict(t).shape == (9, 3)
    assert est.omega_ == 1.0


def test_envelope_predict_matches_pss_for_stationary_input():
    pss = PeriodicSteadyState().fit(RC_SINE)
    env = EnvelopeSimulator(tau_stop=4e-6, initial_step=1e-6, max_step=1e-6).fit(RC_SINE)
    t = np.linspace(0, 4e-6, 41)
    np.testing.assert_allclose(env.predict(t), pss.predict(t), atol=1e-5)
    assert env.taus_[0] == 0.0 and env.taus_[-1] == pytest.approx(4e-6)
    np.testing.assert_allclose(env.f_inst_, 1e6)


def test_invalid_parameters_raise_on_fit():
    with pytest.raises(InvalidArgumentError):
        EnvelopeSimulator(tau_stop=-1.0).fit(RC_SINE)
    with pytest.raises(InvalidArgumentError):
        PeriodicSteadyState(period=0.0).fit(RC_SINE)
