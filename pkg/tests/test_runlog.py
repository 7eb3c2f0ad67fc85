import json

import pytest

from sanjeh.config import parse_config
from sanjeh.errors import ConfigError, SessionError
from sanjeh.models import Attempt, GenerationRecord, TaskKey, Verdict
from sanjeh.runlog import RunLog, load_run_log
from sanjeh.synthetic import fixture_config


@pytest.fixture
def config(tmp_path):
    return parse_config(fixture_config(2), base_dir=tmp_path)


def record(trial, name="Emily"):
    task = TaskKey(model_id="stub-alpha", language="en", domain="color",
                   category_id="red", trial_index=trial)
    return GenerationRecord(task=task, name=name, started_at="t0", finished_at="t1",
                            attempts=[Attempt(index=0, request_text="p", response_text=name,
                                              latency_ms=3, verdict=Verdict.VALID_NAME)])


def test_write_and_load(tmp_path, config):
    path = tmp_path / "log.jsonl"
    with RunLog.create(path, config) as log:
        log.append_record(record(0))
        log.append_record(record(1, "Sarah"))
        log.append_record(record(0, "Olivia"))
    loaded = load_run_log(path)
    assert len(loaded.records) == 2
    # first record for a task wins
    assert loaded.records["stub-alpha|en|color|red|0"].name == "Emily"
    assert loaded.run_config() == config


def test_reopen_drops_torn_tail(tmp_path, config):
    path = tmp_path / "log.jsonl"
    with RunLog.create(path, config) as log:
        log.append_record(record(0))
    with open(path, "a", encoding="utf-8") as fh:
        fh.write('{"kind": "generation", "conf')
    log, loaded = RunLog.reopen(path, config)
    with log:
        log.append_record(record(1))
    assert len(load_run_log(path).records) == 2
    assert len(loaded.records) == 1


def test_reopen_refuses_other_config(tmp_path, config):
    path = tmp_path / "log.jsonl"
    RunLog.create(path, config).close()
    other = parse_config(fixture_config(3), base_dir=tmp_path)
    with pytest.raises(ConfigError, match="refusing to resume"):
        RunLog.reopen(path, other)


def test_foreign_hash_line(tmp_path, config):
    path = tmp_path / "log.jsonl"
    with RunLog.create(path, config) as log:
        log.append_record(record(0))
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps({"kind": "generation", "config_hash": "x",
                             "record": record(1).model_dump(mode="json")}) + "\n")
    with pytest.raises(SessionError, match=":3: config hash differs"):
        load_run_log(path)


def test_missing_header(tmp_path):
    path = tmp_path / "log.jsonl"
    path.write_text('{"kind": "generation"}\n', encoding="utf-8")
    with pytest.raises(SessionError, match="not a run header"):
        load_run_log(path)
