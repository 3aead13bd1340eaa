import matplotlib

matplotlib.use('Agg')

import numpy as np
import pandas as pd
import pytest

from cogload.model import SizeConfig
from cogload.synthgaze import ScenarioConfig, generate_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def tiny_size():
    '''A size small enough for finite-difference checks of the full model.'''
    return SizeConfig(n_h=4, n_aux=3, n_z=2, n_fc=3, n_x=5)


def gaze_frame(duration, rate=60.0, participant=1, scenario=0, seed=0, start=0.0):
    '''A smooth random walk of gaze samples in the raw file layout.'''
    r = np.random.default_rng(seed)
    n = int(round(duration * rate))
    t = start + np.arange(n) / rate
    x = 960.0 + np.cumsum(r.normal(0.0, 8.0, n))
    y = 540.0 + np.cumsum(r.normal(0.0, 8.0, n))
    return pd.DataFrame({'participant': participant, 'scenario': scenario, 'timestamp': t, 'x': x, 'y': y},
                        columns=['participant', 'scenario', 'timestamp', 'x', 'y'])


@pytest.fixture
def raw_dir(tmp_path):
    '''Three participants, one 20 s trial per workload level.'''
    out = tmp_path / 'raw'
    generate_dataset(str(out), n_participants=3, trials_per_condition=1, seed=7,
                     scenario=ScenarioConfig(duration=20.0))
    return out
