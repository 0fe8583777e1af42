"""Test session setup: import path and an environment without translator credentials"""
import os
import sys

import pytest

project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from utils import PipelineConfig  # noqa: E402


@pytest.fixture(autouse=True)
def no_translator_token(monkeypatch):
    # a token exported in the shell must never switch a test to live requests
    monkeypatch.delenv(PipelineConfig.translator_token_env, raising=False)
