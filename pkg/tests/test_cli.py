import json
from pathlib import Path

import cv2
import numpy as np
import pytest

from flowtrack.__main__ import cli
from flowtrack.cascade import load_cascade
from flowtrack.cli import run_click
from flowtrack.flow import read_flo

from .builders import still_face
from .test_cascade import LBP_XML


def write_frames(directory: Path, frames: list[np.ndarray]) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    for index, frame in enumerate(frames):
        cv2.imwrite(str(directory / f"frame_{index:04d}.png"), frame)
    return directory


@pytest.fixture
def face_frames(tmp_path, rng) -> Path:
    frame = still_face(rng, at=(20, 12)).data
    return write_frames(tmp_path / "faces", [frame] * 3)


@pytest.fixture
def blank_frames(tmp_path) -> Path:
    return write_frames(tmp_path / "blank", [np.full((60, 80), 90, dtype=np.uint8)] * 2)


def run(*args) -> tuple[int, str]:
    return run_click(cli, [str(arg) for arg in args])


def test_track_is_deterministic(tmp_path, face_frames, toy_cascade_file):
    outputs = []
    for name in ("first", "second"):
        out = tmp_path / f"{name}.det"
        code, stdout = run(
            "track", "--cascade", toy_cascade_file, "--frames", face_frames, "--out", out, "--tau", 2, "--c", 4
        )
        assert code == 0, stdout
        assert "3 frames, 1 refreshes" in stdout
        assert out.with_suffix(".timings").is_file()
        outputs.append(out.read_bytes())

    lines = outputs[0].decode("utf-8").splitlines()
    assert [line.split()[0] for line in lines] == ["0", "1", "2"]
    assert all(len(line.split()) >= 6 for line in lines)
    assert outputs[0] == outputs[1]


def test_track_annotates_and_dumps_maps(tmp_path, face_frames, toy_cascade_file):
    code, _ = run(
        "track",
        "--cascade", toy_cascade_file,
        "--frames", face_frames,
        "--out", tmp_path / "video.det",
        "--timings", tmp_path / "video.t",
        "--annotate-dir", tmp_path / "annotated",
        "--dump-maps", tmp_path / "maps",
        "--dump-flow", tmp_path / "flow",
        "--tau", 2,
        "--c", 4,
    )

    assert code == 0
    assert (tmp_path / "video.t").is_file()
    assert sorted(path.name for path in (tmp_path / "annotated").iterdir()) == [f"frame_000{i}.png" for i in range(3)]
    assert len(list((tmp_path / "maps").glob("*.pgm"))) == 3
    # frame 0 has nothing to propagate
    flows = sorted(path.name for path in (tmp_path / "flow").glob("*.flo"))
    assert flows == ["frame_0001.flo", "frame_0002.flo"]
    assert read_flo(tmp_path / "flow" / flows[0]).shape == (60, 80)


def test_track_default_parameters_need_more_stages(tmp_path, face_frames, toy_cascade_file):
    code, stdout = run("track", "--cascade", toy_cascade_file, "--frames", face_frames, "--out", tmp_path / "x.det")

    assert stdout.splitlines()[0].startswith("flowtrack track n=20 α=0.5 τ=15 s=1/3 c=65")
    assert code == 2


def test_track_input_errors(tmp_path, face_frames, toy_cascade_file):
    out = tmp_path / "x.det"
    assert run("track", "--cascade", tmp_path / "missing.cascade", "--frames", face_frames, "--out", out)[0] == 2

    (tmp_path / "empty").mkdir()
    assert run("track", "--cascade", toy_cascade_file, "--frames", tmp_path / "empty", "--out", out, "--tau", 2)[0] == 2

    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "frame_0000.png").write_bytes(b"not a png")
    assert run("track", "--cascade", toy_cascade_file, "--frames", bad, "--out", out, "--tau", 2)[0] == 3

    broken = tmp_path / "broken.cascade"
    broken.write_bytes(b"CASCADE 1 12 12 1\n")
    assert run("track", "--cascade", broken, "--frames", face_frames, "--out", out, "--tau", 2)[0] == 2


def test_track_frame_size_change(tmp_path, toy_cascade_file):
    frames = tmp_path / "mixed"
    write_frames(frames, [np.full((60, 80), 90, dtype=np.uint8)])
    cv2.imwrite(str(frames / "frame_0001.png"), np.full((60, 81), 90, dtype=np.uint8))

    code, _ = run("track", "--cascade", toy_cascade_file, "--frames", frames, "--out", tmp_path / "x.det", "--tau", 2)
    assert code == 3


def test_classic_without_faces(tmp_path, blank_frames, toy_cascade_file):
    out = tmp_path / "classic.det"
    code, stdout = run("classic", "--cascade", toy_cascade_file, "--frames", blank_frames, "--out", out)

    assert code == 0
    assert stdout.splitlines()[0].startswith("flowtrack classic min_neighbors=3")
    assert out.read_text(encoding="utf-8").splitlines() == ["0", "1"]


def write_eval_files(tmp_path: Path, gt_frames: int = 5) -> tuple[Path, Path]:
    # ground truth face center is (100, 100) on every frame
    gt = tmp_path / "video.gt"
    gt.write_text("".join(f"{t} 80 90 120 90\n" for t in range(gt_frames)), encoding="utf-8")
    det = tmp_path / "video.det"
    det.write_text(
        "0 103 100 30 30 70\n"
        "1\n"
        "2 100 104 30 30 70 150 100 30 30 66\n"
        "3 100 95 30 30 70\n"
        "4 125 100 30 30 70\n",
        encoding="utf-8",
    )
    return det, gt


def test_eval(tmp_path):
    det, gt = write_eval_files(tmp_path)
    code, stdout = run("eval", det, gt, "--json", tmp_path / "report.json", "--per-frame", tmp_path / "frames.txt")

    assert code == 0
    rate = next(line for line in stdout.splitlines() if line.startswith("detection_rate"))
    assert rate.endswith("0.6000")
    values = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert (values["false_positives"], values["false_negatives"]) == (2, 1)
    assert (tmp_path / "frames.txt").read_text(encoding="utf-8").splitlines()[2] == "1 0 -5.0000 -"

    code, stdout = run("eval", det, gt, "--match-px", 30)
    assert code == 0
    assert next(line for line in stdout.splitlines() if line.startswith("detection_rate")).endswith("0.8000")


def test_eval_frame_count_mismatch(tmp_path):
    det, gt = write_eval_files(tmp_path, gt_frames=4)
    assert run("eval", det, gt)[0] == 4

    (tmp_path / "repeated").mkdir()
    det, gt = write_eval_files(tmp_path / "repeated")
    lines = det.read_text(encoding="utf-8").splitlines()
    det.write_text("\n".join([lines[0], lines[0], *lines[2:]]) + "\n", encoding="utf-8")
    assert run("eval", det, gt)[0] == 4


def test_suite(tmp_path):
    videos = tmp_path / "videos"
    videos.mkdir()
    det, gt = write_eval_files(videos)
    det.rename(videos / "a.det")
    gt.rename(videos / "a.gt")
    (videos / "b.gt").write_text("0 80 90 120 90\n", encoding="utf-8")
    (videos / "b.det").write_text("0 100 100 30 30 70\n", encoding="utf-8")
    (videos / "b.timings").write_text("# frame flow_ms detect_ms other_ms refreshed\n0 1.0 2.0 3.0 1\n", encoding="utf-8")
    (videos / "c.det").write_text("0\n", encoding="utf-8")

    code, stdout = run("suite", videos, "--json", tmp_path / "suite.json")

    assert code == 0
    assert stdout.splitlines()[0].startswith("a  r=0.6000")
    values = json.loads((tmp_path / "suite.json").read_text(encoding="utf-8"))
    assert values["summary"]["videos"] == 2
    assert values["summary"]["mean_detection_rate"] == pytest.approx(0.8)
    assert values["videos"]["b"]["mean_detect_ms"] == pytest.approx(2.0)


def test_suite_without_pairs(tmp_path):
    assert run("suite", tmp_path)[0] == 2


def test_convert(tmp_path, toy_cascade_file):
    xml = tmp_path / "toy.xml"
    native = tmp_path / "back.cascade"

    assert run("convert", toy_cascade_file, xml)[0] == 0
    assert xml.read_text(encoding="utf-8").lstrip().startswith("<?xml")
    assert run("convert", xml, native)[0] == 0
    assert native.read_bytes() == toy_cascade_file.read_bytes()
    assert run("convert", native, tmp_path / "forced.txt", "--format", "xml")[0] == 0
    assert load_cascade(xml) == load_cascade(native)


def test_convert_rejects_haar(tmp_path):
    haar = tmp_path / "haar.xml"
    haar.write_text(LBP_XML.replace("<featureType>LBP", "<featureType>HAAR"), encoding="utf-8")
    assert run("convert", haar, tmp_path / "out.cascade")[0] == 5


def test_bench(tmp_path, face_frames, toy_cascade_file):
    code, stdout = run("bench", "--cascade", toy_cascade_file, "--frames", face_frames, "--tau", 2, "--c", 4)
    assert code == 0
    values = {key.strip(): float(value) for key, value in (line.split(" : ") for line in stdout.splitlines() if " : " in line)}
    assert values["frames"] == 3
    split = values["flow_ms"] + values["detect_ms"] + values["other_ms"]
    assert split == pytest.approx(values["total_ms"], abs=1e-3)
    assert abs(split - values["wall_ms"]) <= 0.1 * values["wall_ms"]

    (tmp_path / "empty").mkdir()
    assert run("bench", "--cascade", toy_cascade_file, "--frames", tmp_path / "empty", "--tau", 2)[0] == 2


def test_detect(tmp_path, face_frames, toy_cascade_file):
    out = tmp_path / "map.pgm"
    windows = tmp_path / "windows.txt"
    code, stdout = run(
        "detect",
        "--cascade", toy_cascade_file,
        face_frames / "frame_0000.png",
        "--out", out,
        "--windows", windows,
        "--tau", 2,
        "--c", 4,
    )

    assert code == 0
    assert any(line.startswith("face ") for line in stdout.splitlines())
    assert cv2.imread(str(out), cv2.IMREAD_UNCHANGED).shape == (60, 80)
    rows = [line.split() for line in windows.read_text(encoding="utf-8").splitlines()]
    assert rows and all(len(row) == 5 and int(row[4]) == 2 for row in rows)

    assert run("detect", "--cascade", toy_cascade_file, face_frames / "frame_0000.png", "--out", out)[0] == 2
