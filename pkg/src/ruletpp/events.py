"""Event sequences over a fixed horizon and the JSON dataset format.

Dataset files look like::

    {"horizon": 20.0,
     "sequences": [{"id": "seq-0",
                    "events": [{"pred": "A", "t": 1.5}, ...]}, ...]}

Times must be finite and within [0, horizon].
"""

from __future__ import annotations

import json
import math

import numpy as np

from .rules import PredicateLibrary

_EMPTY = np.empty(0, dtype=float)


class DatasetFormatError(ValueError):
    pass


class EventSequence:
    """Per-predicate sorted event times on [0, horizon].

    Immutable after construction; the arrays are defensive copies with the
    writeable flag cleared so instances are safe to share.
    """

    __slots__ = ("horizon", "events", "seq_id")

    def __init__(self, horizon: float, events: dict[int, np.ndarray],
                 seq_id: str | None = None):
        horizon = float(horizon)
        if not math.isfinite(horizon) or horizon < 0:
            raise DatasetFormatError(f"bad horizon {horizon}")
        store = {}
        for pred, times in events.items():
            arr = np.sort(np.asarray(times, dtype=float))
            if arr.size == 0:
                continue
            if not np.all(np.isfinite(arr)):
                raise DatasetFormatError(f"non-finite time for predicate {pred}")
            if arr[0] < 0 or arr[-1] > horizon:
                raise DatasetFormatError(
                    f"times for predicate {pred} outside [0, {horizon}]")
            arr.flags.writeable = False
            store[int(pred)] = arr
        self.horizon = horizon
        self.events = store
        self.seq_id = seq_id

    def times(self, pred: int) -> np.ndarray:
        return self.events.get(pred, _EMPTY)

    def n_events(self, pred: int | None = None) -> int:
        if pred is not None:
            return int(self.times(pred).size)
        return int(sum(a.size for a in self.events.values()))

    def restricted_before(self, t: float) -> "EventSequence":
        """Copy containing only events strictly before t (same horizon)."""
        return EventSequence(
            self.horizon,
            {p: a[a < t] for p, a in self.events.items()},
            seq_id=self.seq_id)


def sequence_to_json(seq: EventSequence, lib: PredicateLibrary) -> dict:
    evs = []
    for pred in sorted(seq.events):
        for t in seq.events[pred]:
            evs.append({"pred": lib.name(pred), "t": float(t)})
    evs.sort(key=lambda e: (e["t"], e["pred"]))
    out = {"events": evs}
    if seq.seq_id is not None:
        out["id"] = seq.seq_id
    return out


def dataset_to_json(dataset: list[EventSequence], lib: PredicateLibrary,
                    horizon: float | None = None) -> dict:
    if horizon is None:
        horizon = dataset[0].horizon if dataset else 0.0
    return {"horizon": float(horizon),
            "sequences": [sequence_to_json(s, lib) for s in dataset]}


def dataset_from_json(payload: dict, lib: PredicateLibrary) -> list[EventSequence]:
    try:
        horizon = float(payload["horizon"])
        raw_seqs = payload["sequences"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"malformed dataset container: {exc}") from None
    dataset = []
    for i, raw in enumerate(raw_seqs):
        by_pred: dict[int, list[float]] = {}
        for ev in raw.get("events", ()):
            try:
                pred = lib.index(ev["pred"])
                t = float(ev["t"])
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetFormatError(
                    f"sequence {i}: malformed event {ev!r}: {exc}") from None
            by_pred.setdefault(pred, []).append(t)
        dataset.append(EventSequence(horizon, by_pred,
                                     seq_id=raw.get("id", f"seq-{i}")))
    return dataset


def load_dataset(path, lib: PredicateLibrary) -> list[EventSequence]:
    with open(path, "r", encoding="utf-8") as fh:
        return dataset_from_json(json.load(fh), lib)


def save_dataset(path, dataset, lib: PredicateLibrary,
                 horizon: float | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataset_to_json(dataset, lib, horizon), fh, indent=1)
        fh.write("\n")
