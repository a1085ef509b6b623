"""Tuned hyperparameters, loaded from a packaged profile file.

Values that were picked by sweeping on the synthetic validation split live in
``data/tuned.json`` rather than as constants in the modules that consume
them.  Code defaults stay at their documented baseline values; anything that
builds a tuned system (experiment harnesses, the CLI) asks this module.
"""
from __future__ import annotations

import functools
import json
from importlib import resources


@functools.lru_cache(maxsize=1)
def tuned_profile() -> dict:
    """The tuned-value profile as a plain dict. Cached; treat as read-only."""
    path = resources.files("caseqa").joinpath("data/tuned.json")
    return json.loads(path.read_text(encoding="utf-8"))
