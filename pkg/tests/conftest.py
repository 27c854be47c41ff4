import pytest

from nfc.numerics import BoundedKind, BoundedNoiseSpec, ForwardNoiseSpec
from nfc.scheme import SchemeParams
from nfc.simulator import Scheme, SchemeConfig


@pytest.fixture
def quantized_cfg():
    return SchemeConfig(Scheme.QUANTIZED, SchemeParams(30, 0.5, 0.6), ForwardNoiseSpec("gaussian", 1.0),
                        4.0, sigma_v_bar=0.25)


@pytest.fixture
def scaled_cfg():
    return SchemeConfig(Scheme.SCALED_BACKWARD, SchemeParams(30, 0.5, 0.6), ForwardNoiseSpec("gaussian", 1.0),
                        4.0, BoundedNoiseSpec(BoundedKind.UNIFORM, 0.1), sigma_s_bar=0.1, p_q2=4.0)


@pytest.fixture
def side_cfg():
    return SchemeConfig(Scheme.SIDE_INFO, SchemeParams(30, 0.5, 0.6), ForwardNoiseSpec("gaussian", 1.0),
                        4.0, BoundedNoiseSpec(BoundedKind.UNIFORM, 0.25))
