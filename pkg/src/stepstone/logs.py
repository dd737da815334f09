"""Run logging: per-tick ground reference points plus a JSON sidecar.

The in-memory log keeps one row per control tick. The CSV export is
downsampled to one row per 10 ms (the plotting cadence); polygons, exploration
traces and events go to the JSON sidecar next to it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

PHASES = ("settle", "transfer", "swing", "explore", "hold")
_PHASE_ID = {p: i for i, p in enumerate(PHASES)}

CSV_COLUMNS = (
    "t,icp_x,icp_y,icp_ref_x,icp_ref_y,cop_x,cop_y,cmp_x,cmp_y,phase,weight"
)
CSV_PERIOD = 0.010


@dataclass
class GroundReferenceLog:
    capacity: int
    dt: float
    n: int = 0

    def __post_init__(self):
        c = self.capacity
        self.t = np.zeros(c)
        self.icp = np.zeros((c, 2))
        self.icp_ref = np.zeros((c, 2))
        self.cop = np.zeros((c, 2))
        self.cmp = np.zeros((c, 2))
        self.com = np.zeros((c, 2))
        self.comd = np.zeros((c, 2))
        self.fly_angle = np.zeros((c, 2))
        self.fly_rate = np.zeros((c, 2))
        self.fly_torque = np.zeros((c, 2))
        self.impulse = np.zeros((c, 2))
        self.weight = np.zeros(c)
        self.phase_id = np.zeros(c, dtype=np.int8)
        self.support_id = np.zeros(c, dtype=np.int32)
        self.supports = []          # world support polygons, appended on change
        self.events = []
        self.exploration = []

    def add(self, t, icp, icp_ref, cop, cmp_pt, com, comd, fly_angle, fly_rate,
            fly_torque, impulse, weight, phase, support_id):
        i = self.n
        if i >= self.capacity:
            raise RuntimeError("log capacity exceeded")
        self.t[i] = t
        self.icp[i] = icp
        self.icp_ref[i] = icp_ref
        self.cop[i] = cop
        self.cmp[i] = cmp_pt
        self.com[i] = com
        self.comd[i] = comd
        self.fly_angle[i] = fly_angle
        self.fly_rate[i] = fly_rate
        self.fly_torque[i] = fly_torque
        self.impulse[i] = impulse
        self.weight[i] = weight
        self.phase_id[i] = _PHASE_ID[phase]
        self.support_id[i] = support_id
        self.n = i + 1

    def add_support(self, polygons) -> int:
        self.supports.append([p.to_json() for p in polygons])
        return len(self.supports) - 1

    def add_event(self, t, kind, **data):
        self.events.append({"t": float(t), "kind": kind, **_jsonable(data)})

    def phase_name(self, i) -> str:
        return PHASES[self.phase_id[i]]

    def phase_mask(self, *names) -> np.ndarray:
        ids = [_PHASE_ID[p] for p in names]
        return np.isin(self.phase_id[: self.n], ids)

    def to_csv(self) -> str:
        stride = max(int(round(CSV_PERIOD / self.dt)), 1)
        rows = [CSV_COLUMNS]
        for i in range(0, self.n, stride):
            rows.append(
                "%.6f,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%s,%.10g"
                % (
                    self.t[i],
                    self.icp[i, 0], self.icp[i, 1],
                    self.icp_ref[i, 0], self.icp_ref[i, 1],
                    self.cop[i, 0], self.cop[i, 1],
                    self.cmp[i, 0], self.cmp[i, 1],
                    PHASES[self.phase_id[i]],
                    self.weight[i],
                )
            )
        return "\n".join(rows) + "\n"

    def sidecar(self, outcome: dict, config_echo: dict) -> dict:
        return {
            "schema": "stepstone-log/1",
            "outcome": outcome,
            "supports": self.supports,
            "events": self.events,
            "exploration": self.exploration,
            "config": config_echo,
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def write_outputs(outdir, name, log: GroundReferenceLog, outcome: dict, config_echo: dict):
    import os

    os.makedirs(outdir, exist_ok=True)
    csv_path = os.path.join(outdir, f"{name}.csv")
    with open(csv_path, "w") as fh:
        fh.write(log.to_csv())
    json_path = os.path.join(outdir, f"{name}.json")
    with open(json_path, "w") as fh:
        json.dump(log.sidecar(outcome, config_echo), fh, indent=1, sort_keys=True)
    return csv_path, json_path
