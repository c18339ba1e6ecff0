import time
from contextlib import contextmanager
from pathlib import Path

import pytest

from leoedge.config import load_config, parse_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


@pytest.fixture
def criterion(request):
    """Context manager recording one acceptance criterion as PASS or FAIL.

    The body may add measured values to the yielded dict; they are printed
    next to the verdict in the terminal summary.
    """
    results = request.config.stash[ACCEPTANCE]

    @contextmanager
    def record(number, title):
        info = {}
        start = time.perf_counter()
        try:
            yield info
        except pytest.skip.Exception as e:
            results[number] = ("SKIP", title, {"reason": str(e)})
            raise
        except BaseException:
            info["elapsed_s"] = round(time.perf_counter() - start, 2)
            results[number] = ("FAIL", title, info)
            raise
        info["elapsed_s"] = round(time.perf_counter() - start, 2)
        results[number] = ("PASS", title, info)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        verdict, title, info = results[n]
        extra = ", ".join(f"{k}={v}" for k, v in info.items())
        terminalreporter.write_line(f"{verdict} criterion {n}: {title}" + (f" ({extra})" if extra else ""))


def config_text(shells=(), gsts=(), hosts=(), bbox=None, interval=5, duration=50, colocate=()):
    """Build TOML for a configuration from plain dicts."""

    def value(v):
        if isinstance(v, str):
            return f'"{v}"'
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, (list, tuple)):
            return "[" + ", ".join(value(x) for x in v) + "]"
        return repr(v)

    lines = [f"update_interval_s = {interval}", f"duration_s = {duration}"]
    if bbox is not None:
        lines.append("[bbox]")
        lines += [f"{k} = {value(v)}" for k, v in bbox.items()]
    for table, rows in (("shell", shells), ("ground_station", gsts), ("host", hosts), ("colocate", colocate)):
        for row in rows:
            lines.append(f"[[{table}]]")
            lines += [f"{k} = {value(v)}" for k, v in row.items()]
    return "\n".join(lines) + "\n"


def shell(**kw):
    row = dict(
        planes=1, sats_per_plane=4, altitude_km=550, inclination_deg=53.0, arc_deg=360, phase_offset=0,
        isl_bandwidth_kbps=10_000_000, min_isl_altitude_km=80, sat_vcpus=2, sat_memory_mb=512,
    )
    row.update(kw)
    return row


def gst(name, lat, lon, **kw):
    row = dict(
        name=name, lat=lat, lon=lon, min_elevation_deg=10, uplink_bandwidth_kbps=10_000_000,
        uplink_policy="all-visible", vcpus=1, memory_mb=512,
    )
    row.update(kw)
    return row


def host(name, vcpus=1024, memory_mb=1 << 20, base_latency_us=0):
    return dict(name=name, vcpus=vcpus, memory_mb=memory_mb, base_latency_us=base_latency_us)


def make_config(**kw):
    return parse_config(config_text(**kw))


@pytest.fixture(scope="session")
def iridium():
    return load_config(CONFIGS / "iridium.toml")


@pytest.fixture(scope="session")
def starlink():
    return load_config(CONFIGS / "starlink_meetup.toml")


@pytest.fixture(scope="session")
def configs_dir():
    return CONFIGS
