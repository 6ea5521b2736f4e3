import numpy as np
import cv2
import pytest

from topoextract import ExtractorConfig, FrameExtractor


def write_synthetic_video(path, frames=90, size=(160, 120)):
    """Moving-gradient clip; MJPG decodes deterministically."""
    writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"MJPG"), 30, size)
    w, h = size
    xx, yy = np.meshgrid(np.arange(w), np.arange(h))
    for t in range(frames):
        frame = np.zeros((h, w, 3), np.uint8)
        frame[..., 0] = ((xx + 2 * t) % w) * 255 // w
        frame[..., 1] = ((yy + t) % h) * 255 // h
        cv2.circle(frame, (w // 4 + t % (w // 2), h // 2), h // 6, (255, 255, 255), -1)
        writer.write(frame)
    writer.release()
    return path


@pytest.fixture(scope="session")
def fixture_video(tmp_path_factory):
    return write_synthetic_video(tmp_path_factory.mktemp("video") / "clip.avi")


@pytest.fixture(scope="session")
def short_video(tmp_path_factory):
    return write_synthetic_video(tmp_path_factory.mktemp("video") / "short.avi", frames=5)


@pytest.fixture(scope="session")
def fixture_photo(tmp_path_factory):
    path = tmp_path_factory.mktemp("img") / "photo.png"
    rng = np.random.default_rng(0)
    cv2.imwrite(str(path), rng.integers(0, 255, (120, 160, 3), dtype=np.uint8))
    return path


@pytest.fixture(scope="session")
def black_photo(tmp_path_factory):
    path = tmp_path_factory.mktemp("img") / "black.png"
    cv2.imwrite(str(path), np.zeros((120, 160, 3), np.uint8))
    return path


@pytest.fixture(scope="session")
def extractor():
    return FrameExtractor(ExtractorConfig())
