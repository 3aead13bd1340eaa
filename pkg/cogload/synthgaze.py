'''
Seeded synthetic gaze generator.

A driver moves along a three-lane road past numbered obstacles placed one
interval apart; the lane of each obstacle is drawn from a softmax over the
distance since the last obstacle in each lane. Gaze is a renewal process of
fixations (on the vanishing point, the nearest obstacle ahead or a lane
edge) joined by short linear saccades, sampled at 60 Hz.

Workload changes two things only: how long fixations last and how widely
they scatter around their targets. Participants differ in where they look
(fixation-centre offset), how much they jitter, how far they scatter and how
they split attention between targets.
'''

import logging
import os
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.special import softmax
from tqdm import tqdm

from .errors import DataError

logger = logging.getLogger(__name__)

RATE = 60.0
SCREEN = (1920.0, 1080.0)
VANISHING_POINT = (960.0, 420.0)
FOCAL_PX = 1000.0
LANE_WIDTH = 3.5
EYE_HEIGHT = 1.2
EDGE_LOOKAHEAD = 20.0
TARGETS = ('vanishing_point', 'obstacle', 'lane_edge')


@dataclass(frozen=True)
class ScenarioConfig:
    '''
    interval_size : distance between consecutive obstacles (m)
    duration : trial length (s)
    speed_low, speed_high : driving speed band (km/h)
    workload : 0 for the low-workload task, 1 for the high one
    '''
    interval_size: float = 100.0
    duration: float = 90.0
    speed_low: float = 120.0
    speed_high: float = 130.0
    lanes: int = 3
    workload: int = 0

    def draw_speed(self, rng):
        '''Speed in m/s, uniform within the band.'''
        return rng.uniform(self.speed_low, self.speed_high) / 3.6


@dataclass(frozen=True)
class GeneratorKnobs:
    '''
    dwell_low, dwell_high : mean fixation duration (s) per workload level
    dispersion_ratio : low-workload over high-workload fixation scatter
    separation : 0 makes both workload levels identical, 1 applies the knobs fully
    effect_size : smallest relative gap in mean trial dispersion between the
        workload levels that the defaults are calibrated to produce
    '''
    dwell_low: float = 0.3
    dwell_high: float = 0.5
    dispersion_ratio: float = 1.5
    separation: float = 1.0
    spread: float = 120.0
    jitter: float = 12.0
    center_sd: float = 40.0
    effect_size: float = 0.2


@dataclass(frozen=True)
class ParticipantProfile:
    seed: int
    center_offset: tuple
    jitter: float
    saccade_ms: tuple
    target_mix: tuple
    dwell: tuple
    dispersion: tuple

    def dwell_mean(self, workload):
        return self.dwell[workload]

    def dispersion_scale(self, workload):
        return self.dispersion[workload]


def draw_profile(seed, knobs=None):
    '''
    A participant's scanning style. Low- and high-workload parameters are
    pulled apart by `knobs.separation`; at 0 they coincide.
    '''
    knobs = knobs or GeneratorKnobs()
    rng = np.random.default_rng(seed)
    offset = tuple(rng.normal(0.0, knobs.center_sd, 2))
    jitter = knobs.jitter * rng.uniform(0.8, 1.2)
    fast = rng.uniform(30.0, 40.0)
    mix = tuple(rng.dirichlet([6.0, 2.0, 2.0]))
    dwell_factor = rng.uniform(0.85, 1.15)
    spread = knobs.spread * rng.uniform(0.8, 1.2)

    sep = knobs.separation
    dwell_low = knobs.dwell_low * dwell_factor
    dwell_high = dwell_low * (1.0 + sep * (knobs.dwell_high / knobs.dwell_low - 1.0))
    disp_low = spread * (1.0 + sep * (knobs.dispersion_ratio - 1.0))
    return ParticipantProfile(int(seed), offset, jitter, (fast, fast + 10.0), mix,
                              (dwell_low, dwell_high), (disp_low, spread))


########## Section: obstacles ##########


def place_obstacles(gaps, interval_size):
    '''
    Lane probabilities p(i) = exp(c_i / interval) / sum_j exp(c_j / interval)
    for per-lane gaps c.
    '''
    if interval_size <= 0:
        raise ValueError('interval size must be positive, got {}'.format(interval_size))
    gaps = np.asarray(gaps, dtype=np.float64)
    if (gaps < 0).any():
        raise ValueError('gaps must be non-negative')
    return softmax(gaps / interval_size)


def draw_lane(gaps, interval_size, rng):
    p = place_obstacles(gaps, interval_size)
    return int(rng.choice(len(p), p=p))


@dataclass
class ObstacleTimeline:
    '''Obstacles ordered by position: parallel arrays of position (m), lane and digit.'''
    position: np.ndarray
    lane: np.ndarray
    digit: np.ndarray

    def ahead(self, s, margin=5.0):
        '''Index of the first obstacle more than `margin` metres ahead of `s`, or None.'''
        i = int(np.searchsorted(self.position, s + margin, side='right'))
        return i if i < len(self.position) else None


def obstacle_timeline(scenario, distance, rng):
    '''
    Obstacles every `interval_size` metres up to `distance`; each lane's gap
    is the distance since that lane last held an obstacle.
    '''
    positions = np.arange(1, int(distance // scenario.interval_size) + 2) * scenario.interval_size
    last = np.zeros(scenario.lanes)
    lanes = np.empty(len(positions), dtype=int)
    for k, pos in enumerate(positions):
        lanes[k] = draw_lane(pos - last, scenario.interval_size, rng)
        last[lanes[k]] = pos
    digits = rng.integers(0, 10, len(positions))
    return ObstacleTimeline(positions, lanes, digits)


########## Section: gaze ##########


def _project(lane_offset, distance):
    '''Screen position of a road point `lane_offset` lanes right of centre, `distance` m ahead.'''
    d = max(distance, 5.0)
    return (VANISHING_POINT[0] + lane_offset * LANE_WIDTH * FOCAL_PX / d,
            VANISHING_POINT[1] + EYE_HEIGHT * FOCAL_PX / d)


def _target(kind, s, timeline, profile, rng):
    if kind == 'obstacle':
        i = timeline.ahead(s)
        if i is not None:
            x, y = _project(timeline.lane[i] - 1, timeline.position[i] - s)
            return x + profile.center_offset[0], y + profile.center_offset[1]
    if kind == 'lane_edge':
        x, y = _project(rng.choice([-1.5, 1.5]), EDGE_LOOKAHEAD)
        return x + profile.center_offset[0], y + profile.center_offset[1]
    return VANISHING_POINT[0] + profile.center_offset[0], VANISHING_POINT[1] + profile.center_offset[1]


def simulate_trial(profile, scenario, seed, participant=0):
    '''
    One trial of 60 Hz gaze samples.

    Return
    ------
    DataFrame with columns participant, scenario, timestamp, x, y
    '''
    rng = np.random.default_rng(seed)
    n = int(round(scenario.duration * RATE))
    if n < 1:
        raise DataError('trial duration {} s holds no samples'.format(scenario.duration))
    t = np.arange(n) / RATE
    speed = scenario.draw_speed(rng)
    timeline = obstacle_timeline(scenario, speed * scenario.duration + 200.0, rng)

    w = scenario.workload
    dwell, spread = profile.dwell_mean(w), profile.dispersion_scale(w)
    gx, gy = np.empty(n), np.empty(n)
    i = 0
    prev = None
    while i < n:
        kind = TARGETS[rng.choice(len(TARGETS), p=profile.target_mix)]
        tx, ty = _target(kind, speed * t[i], timeline, profile, rng)
        fx, fy = tx + rng.normal(0.0, spread), ty + rng.normal(0.0, spread)

        if prev is not None:
            m = int(round(rng.uniform(*profile.saccade_ms) / 1000.0 * RATE)) or 1
            m = min(m, n - i)
            frac = np.arange(1, m + 1) / (m + 1)
            gx[i:i + m] = prev[0] + frac * (fx - prev[0])
            gy[i:i + m] = prev[1] + frac * (fy - prev[1])
            i += m
        # dwell ~ gamma with shape 4 around the workload mean
        k = min(max(1, int(round(rng.gamma(4.0, dwell / 4.0) * RATE))), n - i)
        gx[i:i + k] = fx + rng.normal(0.0, profile.jitter, k)
        gy[i:i + k] = fy + rng.normal(0.0, profile.jitter, k)
        i += k
        prev = (fx, fy)

    return pd.DataFrame({
        'participant': participant,
        'scenario': w,
        'timestamp': t,
        'x': np.clip(gx, 0.0, SCREEN[0]),
        'y': np.clip(gy, 0.0, SCREEN[1]),
    }, columns=['participant', 'scenario', 'timestamp', 'x', 'y'])


def dispersion(frame):
    '''sqrt(var x + var y) of a trial's gaze samples.'''
    return float(np.sqrt(frame['x'].var(ddof=0) + frame['y'].var(ddof=0)))


########## Section: dataset ##########


def trial_file_name(participant, workload, repeat):
    return 'p{:02d}_w{}_r{}.csv'.format(participant, workload, repeat)


def _write_trial(path, profile, scenario, seed, participant):
    frame = simulate_trial(profile, scenario, seed, participant)
    frame.to_csv(path, index=False, float_format='%.6f', lineterminator='\n')
    return path


def generate_dataset(out_dir, n_participants=20, trials_per_condition=1, seed=0, knobs=None,
                     scenario=None, n_jobs=1, verbose=False):
    '''
    Write one raw gaze CSV per (participant, workload, repeat) and a
    manifest.txt recording every seed and knob.

    Parameters
    ----------
    scenario : ScenarioConfig template; its workload field is overridden per trial

    Return
    ------
    list of written trial paths
    '''
    if n_participants < 1 or trials_per_condition < 1:
        raise DataError('need at least one participant and one trial per condition')
    knobs = knobs or GeneratorKnobs()
    scenario = scenario or ScenarioConfig()
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as err:
        raise DataError('cannot create output directory {}: {}'.format(out_dir, err)) from err

    master = np.random.SeedSequence(seed)
    jobs, lines = [], []
    for p, child in enumerate(master.spawn(n_participants), start=1):
        profile_seed, trial_seq = child.spawn(2)
        profile = draw_profile(int(profile_seed.generate_state(1)[0]), knobs)
        trial_seeds = trial_seq.spawn(2 * trials_per_condition)
        for w in (0, 1):
            sc = ScenarioConfig(**{**asdict(scenario), 'workload': w})
            for r in range(trials_per_condition):
                tseed = int(trial_seeds[w * trials_per_condition + r].generate_state(1)[0])
                path = os.path.join(out_dir, trial_file_name(p, w, r))
                jobs.append((path, profile, sc, tseed, p))
                lines.append('{} participant={} workload={} repeat={} profile_seed={} trial_seed={}'.format(
                    os.path.basename(path), p, w, r, profile.seed, tseed))

    if not os.access(out_dir, os.W_OK):
        raise DataError('output directory {} is not writable'.format(out_dir))
    paths = Parallel(n_jobs=n_jobs)(
        delayed(_write_trial)(*job) for job in tqdm(jobs, desc='trials', disable=not verbose))

    with open(os.path.join(out_dir, 'manifest.txt'), 'w', newline='\n') as fh:
        fh.write('seed = {}\nparticipants = {}\ntrials_per_condition = {}\n'.format(
            seed, n_participants, trials_per_condition))
        for k, v in asdict(knobs).items():
            fh.write('{} = {}\n'.format(k, v))
        for k, v in asdict(scenario).items():
            if k != 'workload':
                fh.write('{} = {}\n'.format(k, v))
        fh.write('\n'.join(lines) + '\n')
    logger.info('wrote %d trials for %d participants to %s', len(paths), n_participants, out_dir)
    return paths
