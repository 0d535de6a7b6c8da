"""Read-only evaluation harness mounted into the experiment container.

Experiments import report_metric() and finalize() from here. Records go to
/harness_out/results/metrics.json, which is the only file the collector reads.
"""

import json
import os

_OUT = os.environ.get("LABLOOP_HARNESS_OUT", "/harness_out/results/metrics.json")
_DECLARED = [c for c in os.environ.get("LABLOOP_DECLARED_CONDITIONS", "").split(",") if c]
_records = []
_seen = {}


class HarnessError(RuntimeError):
    pass


def report_metric(condition, metric, value, seed=0):
    if _DECLARED and condition not in _DECLARED:
        raise HarnessError("condition %r was not declared" % condition)
    seeds = _seen.setdefault(condition, set())
    if seeds and seed not in seeds:
        missing = [c for c in _DECLARED if not _seen.get(c)]
        if missing:
            raise HarnessError("second repetition of %r before %r completed one" % (condition, missing[0]))
    seeds.add(seed)
    _records.append({"condition": condition, "metric": metric, "seed": seed, "value": float(value)})
    _flush()


def finalize():
    _flush()


def _flush():
    os.makedirs(os.path.dirname(_OUT), exist_ok=True)
    tmp = _OUT + ".tmp"
    with open(tmp, "w") as fh:
        json.dump({"declared_conditions": _DECLARED, "records": _records}, fh, indent=2)
    os.replace(tmp, _OUT)
