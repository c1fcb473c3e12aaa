# SPDX-License-Identifier: Apache-2.0
import json
import os
import pathlib
import tempfile

import pytest

import longimam

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"


def test_auc_fixture():
    assert longimam.auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert longimam.auc([0.3, 0.3], [0, 1]) == 0.5


def test_auc_needs_both_classes():
    with pytest.raises(longimam.NumericError):
        longimam.auc([0.1, 0.2], [1, 1])


def test_exact_mean():
    assert longimam.exact_mean([0.2, 0.4, 0.6]) == 0.4
    assert longimam.exact_mean([0.1] * 9) == 0.1


def test_bootstrap_is_reproducible():
    scores = [i / 50 for i in range(50)]
    labels = [1 if i % 3 == 0 else 0 for i in range(50)]
    a = longimam.bootstrap_ci(scores, labels, replicates=200, seed=4)
    b = longimam.bootstrap_ci(scores, labels, replicates=200, seed=4)
    assert a == b
    point = longimam.auc(scores, labels)
    assert a[0] <= point <= a[1]


def test_schedule_and_scenarios():
    assert longimam.cosine_lr(0, 40, 1e-4, 1e-7) == 1e-4
    assert longimam.cosine_lr(40, 40, 1e-4, 1e-7) == 1e-7
    assert len(longimam.scenarios()) == 9
    assert longimam.sequence_length("4P1C") == 5
    with pytest.raises(longimam.UsageError):
        longimam.sequence_length("5P")


def test_config_rejects_unknown_keys():
    with pytest.raises(longimam.UsageError):
        longimam.RunConfig.from_json('{"bogus": 1}')


def test_pipeline_runs_end_to_end():
    work = os.environ.get("LONGIMAM_TEST_WORK") or tempfile.mkdtemp()
    config = longimam.RunConfig.load(str(DATA / "cli_smoke.json"))
    config.output_dir = str(pathlib.Path(work) / "py_run")
    messages = []
    for step in (longimam.synth, longimam.ingest, longimam.split, longimam.train1,
                 longimam.train2, longimam.evaluate, longimam.report):
        step(config, messages.append)
    assert messages
    report = json.loads((pathlib.Path(config.output_dir) / "report" / "report.json").read_text())
    assert len(report["rows"]) == 2
