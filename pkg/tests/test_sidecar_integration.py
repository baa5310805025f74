"""Cross-package checks: the bundled observer sidecar must satisfy the wire
protocol exactly as the engine speaks it, on both transports.

Skipped when the sidecar has not been built (sidecar/dist/main.js missing)
or node is unavailable.
"""

import shutil
import socket
import subprocess
import time
from pathlib import Path

import pytest
import requests

from detdistill.cli import main
from detdistill.observer import parse_observer_spec, score_canvas, selftest_fixture

SIDECAR_MAIN = Path(__file__).resolve().parent.parent / "sidecar" / "dist" / "main.js"

pytestmark = pytest.mark.skipif(
    not SIDECAR_MAIN.exists() or shutil.which("node") is None,
    reason="observer sidecar is not built; run `npm run build` in sidecar/")

STDIO_SPEC = f"exec:node {SIDECAR_MAIN}"


@pytest.fixture(scope="module")
def sidecar_http():
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    process = subprocess.Popen(
        ["node", str(SIDECAR_MAIN), "--transport", "http", "--port", str(port)],
        stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    url = f"http://127.0.0.1:{port}"
    try:
        deadline = time.monotonic() + 15.0
        while True:
            try:
                if requests.get(f"{url}/health", timeout=1.0).status_code == 200:
                    break
            except requests.RequestException:
                if time.monotonic() > deadline:
                    raise
                time.sleep(0.1)
        yield url
    finally:
        process.terminate()
        process.wait(timeout=10)


def scores_via(spec):
    backend = parse_observer_spec(spec)
    try:
        return score_canvas(selftest_fixture(), backend, iou_floor=0.5)
    finally:
        close = getattr(backend, "close", None)
        if close is not None:
            close()


def test_selftest_passes_over_stdio(capsys):
    assert main(["observer-selftest", "--observer", STDIO_SPEC]) == 0
    assert "selftest passed" in capsys.readouterr().out


def test_selftest_passes_over_http(sidecar_http, capsys):
    assert main(["observer-selftest", "--observer", sidecar_http]) == 0
    assert "selftest passed" in capsys.readouterr().out


def test_fixture_objects_detected_over_stdio():
    # Non-zero confidence requires a same-category detection at IoU >= 0.5;
    # the solid fixture rectangles come back at exactly their drawn boxes.
    scores = scores_via(STDIO_SPEC)
    assert [s.key for s in scores] == [7, 9]
    for score in scores:
        assert score.confidence == pytest.approx(1.0)


def test_fixture_objects_detected_over_http(sidecar_http):
    scores = scores_via(sidecar_http)
    assert [s.key for s in scores] == [7, 9]
    for score in scores:
        assert score.confidence == pytest.approx(1.0)


def test_http_health_endpoint(sidecar_http):
    body = requests.get(f"{sidecar_http}/health", timeout=5.0).json()
    assert body["status"] == "ok"


def test_distill_runs_against_sidecar(small_corpus_root, tmp_path):
    out = tmp_path / "out"
    code = main([
        "distill",
        "--annotations", str(small_corpus_root / "annotations.json"),
        "--images", str(small_corpus_root / "images"),
        "--out", str(out),
        "--canvas", "200x200",
        "--ipd", "2",
        "--workers", "2",
        "--observer", STDIO_SPEC,
    ])
    assert code == 0
    assert (out / "annotations.json").exists()
