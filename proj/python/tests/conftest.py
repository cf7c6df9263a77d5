import pytest

import relunlearn as ru


@pytest.fixture
def small_encoder():
    cfg = ru.EncoderConfig()
    cfg.d_in, cfg.d_out, cfg.rank = 24, 6, 2
    cfg.seed = 5
    return ru.make_encoder(cfg)
