import os
import tomllib

import yaml

ROOT = os.path.join(os.path.dirname(__file__), "..")


def _pyproject() -> dict:
    with open(os.path.join(ROOT, "pyproject.toml"), "rb") as f:
        return tomllib.load(f)["tool"]["poetry"]


def test_lint_tools_are_dev_dependencies():
    poetry = _pyproject()
    runtime = set(poetry["dependencies"])
    dev = set(poetry["group"]["dev"]["dependencies"])
    for tool in ("pre-commit", "yamllint", "black", "isort", "flake8", "mypy", "pytest"):
        assert tool in dev
        assert tool not in runtime


def test_pre_commit_hooks_use_pinned_tools():
    with open(os.path.join(ROOT, ".pre-commit-config.yaml"), encoding="utf-8") as f:
        config = yaml.safe_load(f)
    hooks = {hook["id"] for repo in config["repos"] for hook in repo["hooks"]}
    assert {"black", "isort", "flake8", "mypy", "yamllint"} <= hooks
    assert all(repo["repo"] == "local" for repo in config["repos"])
    with open(os.path.join(ROOT, ".yamllint"), encoding="utf-8") as f:
        assert yaml.safe_load(f)["extends"] == "default"
