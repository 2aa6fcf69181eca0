import datetime as dt
from pathlib import Path

import numpy as np
import pytest

from smest.core import epoch_day
from smest.ingestion import Acquisition, BandId, Orbit, Patch, Sensor


def s2_patch(date="2020-06-01", size=16, value=0.3, scl=4):
    bands = tuple(BandId)[:12] + (BandId.SCL,)
    px = np.full((13, size, size), value, dtype=np.float32)
    px[-1] = scl
    return Patch(Sensor.S2, Orbit.NONE, dt.date.fromisoformat(date), bands, px)


def s1_patch(date="2020-06-01", size=16, vv=0.01, vh=0.001, orbit=Orbit.DESC):
    px = np.empty((2, size, size), dtype=np.float32)
    px[0], px[1] = vv, vh
    return Patch(Sensor.S1, orbit, dt.date.fromisoformat(date), (BandId.VV, BandId.VH), px)


def acq(day, sensor=Sensor.S1, orbit=Orbit.DESC, sid="A", cloud=None):
    if sensor is Sensor.S2:
        orbit = Orbit.NONE
        cloud = 0.0 if cloud is None else cloud
    return Acquisition(sid, sensor, orbit, day, Path(f"{sid}_{day}_{orbit.name}"), cloud)


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(str(c) for c in r) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


D0 = epoch_day("2020-06-01")


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """A small synthetic dataset shared by the pipeline tests."""
    from smest.experiments import SynthConfig, generate_synthetic

    root = tmp_path_factory.mktemp("synth_small")
    generate_synthetic(SynthConfig(stations=8, days=60, patch_size=16), seed=3, out=root)
    return root
