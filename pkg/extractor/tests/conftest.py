import subprocess
import sys
from pathlib import Path

import pytest

BUNDLED_CLIP = Path(__file__).parent / "data" / "clip"


def run_engine(argv):
    """Invoke the evaluation engine through its CLI (the external interface)."""
    return subprocess.run(
        [sys.executable, "-m", "anoneval", *argv], capture_output=True, text=True
    )


@pytest.fixture(scope="session")
def extracted(tmp_path_factory):
    """Both-role extraction of the bundled clip, shared across tests."""
    from anoneval_extractor.features import ExtractorConfig, extract

    root = tmp_path_factory.mktemp("extracted")
    out = {}
    for role in ("original", "anonymized"):
        config = ExtractorConfig(video_id="clip", role=role)
        out[role] = extract(BUNDLED_CLIP, config, root / role)
    return out
