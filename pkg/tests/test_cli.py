import json

import pytest
import yaml

from fbs_workbench.cli import build_parser, main


@pytest.fixture
def config_file(tmp_path, tiny_pipeline_config):
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(json.loads(tiny_pipeline_config.json())))
    return str(path)


def test_parser_defaults():
    args = build_parser().parse_args(["train"])
    assert args.command == "train"
    assert args.config == "full"
    assert args.force is False
    assert args.model is None


def test_parser_rejects_unknown_choices():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["train", "--model", "svm"])


def test_missing_config_exits_with_config_error(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.yaml")]) == 2


def test_invalid_override_exits_with_config_error(config_file):
    assert main(["simulate", "--config", config_file, "--fpr", "1.5"]) == 2


def test_missing_upstream_exits_with_dependency_error(config_file):
    assert main(["evaluate", "--config", config_file]) == 3


@pytest.mark.slow
def test_stages_one_by_one(config_file):
    for command in ("simulate", "extract", "train", "evaluate", "report"):
        assert main(["-q", command, "--config", config_file]) == 0
    # Training again would overwrite the models
    assert main(["-q", "train", "--config", config_file]) == 2
    assert main(["-q", "train", "--config", config_file, "--force"]) == 0
