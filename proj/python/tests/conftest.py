import pytest

import coviz

QUICK_CONFIG = "[train]\nepisodes = 80\n[coviz]\nnsim = 6\n"


@pytest.fixture(scope="session")
def quick_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("config") / "quick.toml"
    path.write_text(QUICK_CONFIG)
    return path


@pytest.fixture(scope="session")
def run_dir(tmp_path_factory, quick_config):
    out = tmp_path_factory.mktemp("run") / "run"
    coviz.run_pipeline(out, config=quick_config, render=False)
    return out


def longest_trace(run_dir, agent):
    files = sorted((run_dir / "traces" / agent).glob("*.jsonl"))
    best = max(files, key=lambda f: len(f.read_text().splitlines()))
    return best.stem, len(best.read_text().splitlines()) - 1
