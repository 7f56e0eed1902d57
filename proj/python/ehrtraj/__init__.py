"""Hourly patient-trajectory modelling over rendered EHR text."""

import json
import os

from . import _core
from ._core import ConfigError, RecordError, bottleneck_mask, event_f1, section_accounting

__all__ = [
    "ConfigError",
    "Model",
    "RecordError",
    "bottleneck_mask",
    "check_input",
    "default_cohort_config",
    "event_f1",
    "generate_cohort",
    "label_at",
    "parse_output",
    "read_cohort",
    "render_input",
    "render_output",
    "section_accounting",
    "snapshot",
    "train_text_model",
    "true_los",
    "write_cohort",
]


def _dump(obj):
    return obj if isinstance(obj, str) else json.dumps(obj)


def default_cohort_config():
    return json.loads(_core.default_cohort_config())


def generate_cohort(config=None, **overrides):
    """Synthetic cohort as a list of record dicts. Keyword overrides are
    merged into the config, e.g. generate_cohort(n_patients=10, seed=3)."""
    cfg = dict(config or {})
    cfg.update(overrides)
    return [json.loads(r) for r in _core.generate_cohort(json.dumps(cfg))]


def read_cohort(path):
    return [json.loads(r) for r in _core.read_cohort(os.fspath(path))]


def write_cohort(path, records):
    _core.write_cohort(os.fspath(path), [_dump(r) for r in records])


def snapshot(record, t):
    return json.loads(_core.snapshot(_dump(record), t))


def label_at(record, t):
    return json.loads(_core.label_at(_dump(record), t))


def true_los(record, t):
    return _core.true_los(_dump(record), t)


def render_input(record, t, window_hours=None, include_los=True):
    return _core.render_input(_dump(record), t, window_hours, include_los)


def render_output(output):
    return _core.render_output(_dump(output))


def parse_output(text):
    """Returns {"status", "output", "diagnostics"}; status is ok, partial or malformed."""
    return json.loads(_core.parse_output(text))


def check_input(text):
    return json.loads(_core.check_input(text))


def train_text_model(records, out, **kwargs):
    """Trains a full-text pathway model on the records and writes a
    checkpoint to out. Returns the final training loss."""
    return _core.train_text_model([_dump(r) for r in records], os.fspath(out), **kwargs)


class Model:
    def __init__(self, path, summarizer=None):
        self._m = _core.Model(os.fspath(path), None if summarizer is None else os.fspath(summarizer))

    @property
    def variant(self):
        return self._m.variant

    @property
    def num_params(self):
        return self._m.num_params

    def simulate(self, record, t0, **kwargs):
        return json.loads(self._m.simulate(_dump(record), t0, **kwargs))
