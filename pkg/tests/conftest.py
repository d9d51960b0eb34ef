"""Shared fixtures: small pipeline instances and synthetic builders."""

from dataclasses import dataclass

import numpy as np
import pytest

import sectormimo as sm
from sectormimo.antenna import resolve_pattern
from sectormimo.rng import derive_seed


@dataclass
class Pipeline:
    scenario: sm.Scenario
    layout: sm.Layout
    drop: np.ndarray
    coupling: np.ndarray
    reuse: sm.ReuseMap
    link_budget: sm.LinkBudget
    frame: sm.FrameAccounting
    est_gain: np.ndarray
    assoc: sm.Association


def build_pipeline(**kw) -> Pipeline:
    defaults = dict(num_cells=7, users_per_cell=4, setting="secmp", precoder="mr",
                    num_drops=1, master_seed=17, shadow_sigma_db=3.0)
    defaults.update(kw)
    s = sm.Scenario(**defaults)
    layout = sm.build_layout(s)
    pattern = resolve_pattern(s.pattern)
    drop = sm.drop_users(s, layout, derive_seed(s.master_seed, 0, 1))
    c = sm.large_scale_coupling(layout, pattern, drop,
                                derive_seed(s.master_seed, 0, 2), s)
    reuse = sm.reuse_sets(s.pilot_reuse, layout)
    lb = sm.derive_link_budget(s)
    frame = sm.derive_frame(s)
    ag = sm.estimation_gains(c, reuse, lb, frame.tau_p)
    assoc = sm.associate(s.setting, layout, c, drop)
    return Pipeline(scenario=s, layout=layout, drop=drop, coupling=c, reuse=reuse,
                    link_budget=lb, frame=frame, est_gain=ag, assoc=assoc)


@pytest.fixture(scope="session")
def small_secmp() -> Pipeline:
    return build_pipeline()


@pytest.fixture(scope="session")
def small_compsec() -> Pipeline:
    return build_pipeline(setting="compsec", users_per_cell=3, master_seed=23)
